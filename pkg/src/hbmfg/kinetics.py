"""Forward population dynamics.

The occupation matrix x(t) evolves under three flows: principal pressure
(up/down moves between hierarchy levels at configured rates), stimulating
binary interactions (same-level pairwise pushes, quadratic in x, scaled by
delta_int) and the agents' own behaviour switches (rate lam, routed by the
control tensor).  All three move mass along one axis at a time, so the total
mass (and, absent switching, each behaviour column's mass) is conserved.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .model import GameConfig, control_array, occupation_array

__all__ = [
    "Trajectory",
    "KineticsError",
    "kinetic_rhs",
    "kinetic_rhs_sink",
    "integrate_forward",
    "stationary_residual",
    "rk4_step",
]

log = logging.getLogger(__name__)

# A stored sample is re-projected to the simplex only past this drift.
DRIFT_TOL = 1e-12


class KineticsError(RuntimeError):
    pass


@dataclass
class Trajectory:
    """Uniform-grid samples of a run: times plus any of x, g, u.

    x and g are sampled at the grid nodes, shape (len(times), n, m).
    u, when present, is per cell: shape (len(times)-1, n, m, m), constant on
    [times[k], times[k+1]).
    """

    times: np.ndarray
    x: Optional[np.ndarray] = None
    g: Optional[np.ndarray] = None
    u: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def check(self):
        t = np.asarray(self.times)
        if t.ndim != 1 or t.size < 1 or np.any(np.diff(t) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        for name in ("x", "g"):
            a = getattr(self, name)
            if a is not None and len(a) != t.size:
                raise ValueError(f"trajectory {name} not aligned with times")
        if self.u is not None and len(self.u) not in (t.size, t.size - 1):
            raise ValueError("trajectory u not aligned with times")
        return self


def _decision_flow(x: np.ndarray, u: Optional[np.ndarray], lam: float) -> np.ndarray:
    # inflow_ij = sum_k u[i,k,j] x_ik ; outflow_ij = x_ij * sum_k u[i,j,k]
    if u is None or lam == 0.0:
        return 0.0
    return lam * (np.einsum("ikj,ik->ij", u, x) - x * u.sum(axis=2))


def _pressure_flow(x: np.ndarray, q_up: np.ndarray, q_down: np.ndarray) -> np.ndarray:
    out = -(q_up + q_down) * x
    out[1:] += q_up[:-1] * x[:-1]
    out[:-1] += q_down[1:] * x[1:]
    return out


def _stimulated_rates(x: np.ndarray, evo: np.ndarray) -> np.ndarray:
    # s[i,j] = sum_k evo[i,j,k] * x[i,k]: per-capita stimulated rate at (i,j)
    return np.einsum("ijk,ik->ij", evo, x)


def kinetic_rhs(x, u, cfg: GameConfig) -> np.ndarray:
    """Time derivative of the occupation matrix.

    u may be a Control, a bare (n, m, m) tensor, or None for "nobody
    switches".  Rejects sink-variant configs; use kinetic_rhs_sink there.
    """
    if cfg.variant == "sink":
        raise KineticsError("config selects the sink variant; use kinetic_rhs_sink")
    xa = occupation_array(x)
    ua = None if u is None else control_array(u, cfg.n, cfg.m)
    out = _pressure_flow(xa, cfg.q_up, cfg.q_down)
    out += _decision_flow(xa, ua, cfg.lam)
    if cfg.delta_int != 0.0:
        s_up = _stimulated_rates(xa, cfg.q_up_evo)
        s_dn = _stimulated_rates(xa, cfg.q_down_evo)
        inter = -(s_up + s_dn) * xa
        inter[1:] += s_up[:-1] * xa[:-1]
        inter[:-1] += s_dn[1:] * xa[1:]
        out += cfg.delta_int * inter
    return out


def kinetic_rhs_sink(x, u, cfg: GameConfig) -> np.ndarray:
    """Variant where every downward event drops the agent straight to level 1.

    Upward pressure and stimulation as in kinetic_rhs; the configured sink
    rates send mass from any level i >= 2 directly to (1, j).  Rates on row 1
    never enter (the lowest level cannot drop).
    """
    if cfg.q_sink is None:
        raise KineticsError("config has no q_sink rates")
    xa = occupation_array(x)
    ua = None if u is None else control_array(u, cfg.n, cfg.m)
    zero_dn = np.zeros_like(cfg.q_up)
    out = _pressure_flow(xa, cfg.q_up, zero_dn)
    out += _decision_flow(xa, ua, cfg.lam)

    direct = cfg.q_sink.direct
    drop = direct * xa  # (i, j) spontaneous drop flux
    drop[0] = 0.0
    if cfg.delta_int != 0.0:
        s_up = _stimulated_rates(xa, cfg.q_up_evo)
        inter = -s_up * xa
        inter[1:] += s_up[:-1] * xa[:-1]
        out += cfg.delta_int * inter
        s_sink = _stimulated_rates(xa, cfg.q_sink.interaction)
        stim_drop = s_sink * xa
        stim_drop[0] = 0.0
        drop = drop + cfg.delta_int * stim_drop
    out -= drop
    out[0] += drop.sum(axis=0)
    return out


def rk4_step(f: Callable[[np.ndarray], np.ndarray], y: np.ndarray, h: float) -> np.ndarray:
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _as_control_provider(control, n: int, m: int):
    if callable(control) and not isinstance(control, np.ndarray):
        return lambda t: control_array(control(t), n, m)
    fixed = None if control is None else control_array(control, n, m)
    return lambda t: fixed


def integrate_forward(
    x0,
    control,
    t0: float,
    t1: float,
    dt: float,
    cfg: GameConfig,
    store_stride: int = 1,
) -> Trajectory:
    """Fixed-step RK4 on the kinetic equation from t0 to t1.

    control: None, a Control/tensor held fixed, or a callable t -> control,
    sampled once per step at the step midpoint (piecewise-constant providers
    resolve to their cell value).  Stored samples drift from the simplex by
    at most rounding; any sample beyond 1e-12 is clamped/renormalized and the
    event is counted in meta and logged.
    """
    if not (t1 > t0):
        raise ValueError("need t1 > t0")
    if not (0 < dt <= t1 - t0):
        raise ValueError("need 0 < dt <= t1 - t0")
    n_steps = max(1, int(round((t1 - t0) / dt)))
    h = (t1 - t0) / n_steps
    u_of = _as_control_provider(control, cfg.n, cfg.m)
    rhs = kinetic_rhs_sink if cfg.variant == "sink" else kinetic_rhs

    x = occupation_array(x0).copy()
    times = [t0]
    samples = [x.copy()]
    drift_max = 0.0
    projections = 0
    for k in range(n_steps):
        t = t0 + k * h
        u_mid = u_of(t + 0.5 * h)
        x = rk4_step(lambda y: rhs(y, u_mid, cfg), x, h)
        if not np.all(np.isfinite(x)):
            raise KineticsError(
                f"non-finite occupation at t={t + h:.6g}; reduce dt (dt={h:.3g})"
            )
        drift = max(abs(float(x.sum()) - 1.0), max(0.0, -float(x.min())))
        drift_max = max(drift_max, drift)
        if drift > DRIFT_TOL:
            x = np.clip(x, 0.0, None)
            x /= x.sum()
            projections += 1
        if (k + 1) % store_stride == 0 or k == n_steps - 1:
            times.append(t0 + (k + 1) * h)
            samples.append(x.copy())
    if projections:
        log.warning(
            "re-projected %d/%d samples to the simplex (max drift %.3e)",
            projections, n_steps, drift_max,
        )
    meta = {"dt": h, "drift_max": drift_max, "projections": projections}
    return Trajectory(times=np.array(times), x=np.array(samples), meta=meta).check()


def stationary_residual(x, cfg: GameConfig) -> float:
    """Sup-norm of the switch-free stationary balance at x.

    Zero exactly when pressure and interaction flows cancel in every state.
    """
    return float(np.abs(kinetic_rhs(x, None, cfg)).max())

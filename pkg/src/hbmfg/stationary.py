"""Stationary occupations and payoffs by small-parameter expansion.

With switching off, each behaviour column evolves as an independent
birth-death chain on the hierarchy levels.  Under detailed balance the
chain's stationary occupation is uniform, and the discounted payoff admits
an expansion in the discount scale: a per-column constant at order 1/delta_dis,
a mean-zero first correction, and (in the fast-discount regimes) a second
correction that feels the stimulated interactions.  The occupation picks up
its own first correction, proportional to delta_int, on the dominant column.

Everything here works column by column on small dense chains; solves are
closed-form recursions cross-checked against dense least squares.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import (
    GameConfig,
    Occupation,
    Regime,
    dominant_level,
    effective_rewards,
)

__all__ = [
    "StationaryError",
    "DegenerateChainError",
    "LevelChain",
    "StationarySolution",
    "build_level_chain",
    "kernel",
    "kernel_product_forms",
    "realized_sign",
    "solve_on_complement",
    "g0_term",
    "g1_term",
    "g2_term",
    "x1_correction",
    "stationary_solution",
]

log = logging.getLogger(__name__)

MEAN_TOL = 1e-12   # membership in the mean-zero complement, relative
FORM_TOL = 1e-9    # agreement between independent closed forms
CROSS_TOL = 1e-10  # closed form vs dense least-squares
SOLVE_TOL = 1e-9   # second-order solvability (column sum of the rhs)


class StationaryError(RuntimeError):
    pass


class DegenerateChainError(StationaryError):
    """A chain rate needed by a closed form is zero (or negative)."""


@dataclass(frozen=True)
class LevelChain:
    """One behaviour column's birth-death generator on the levels.

    A is the n x n chain matrix acting on column occupations (columns sum to
    zero; under detailed balance it is symmetric with uniform kernel).  q
    holds the n-1 up rates on the links; detailed balance means these equal
    the matching down rates, and only then do the complement solves apply.
    """

    j: int
    A: np.ndarray
    q: np.ndarray
    detailed_balance: bool
    up_evo: np.ndarray = field(repr=False)
    down_evo: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def interaction_generator(self, x) -> np.ndarray:
        """Chain matrix of the stimulated moves at occupation x.

        Same tridiagonal layout as A with the per-capita stimulated rates
        sum_k evo[i,k]*x[i,k] in place of the pressure rates.  Linear in x,
        columns sum to zero.
        """
        xa = np.asarray(x, dtype=float)
        s_up = np.einsum("ik,ik->i", self.up_evo, xa)
        s_dn = np.einsum("ik,ik->i", self.down_evo, xa)
        return _tridiag_generator(s_up[:-1], s_dn[1:])


def _tridiag_generator(up: np.ndarray, down: np.ndarray) -> np.ndarray:
    # up[i]: rate of i -> i+1 (length n-1); down[i]: rate of i+1 -> i
    n = up.size + 1
    A = np.zeros((n, n))
    A[np.arange(n - 1), np.arange(n - 1)] -= up
    A[np.arange(1, n), np.arange(1, n)] -= down
    A[np.arange(1, n), np.arange(n - 1)] += up
    A[np.arange(n - 1), np.arange(1, n)] += down
    return A


def build_level_chain(j: int, cfg: GameConfig) -> LevelChain:
    """Extract column j's chain from the config (0-based j)."""
    if not (0 <= j < cfg.m):
        raise ValueError(f"behaviour column index {j} out of range for m={cfg.m}")
    up = cfg.q_up[:-1, j].copy() if cfg.n > 1 else np.zeros(0)
    down = cfg.q_down[1:, j].copy() if cfg.n > 1 else np.zeros(0)
    scale = max(1.0, float(np.max(np.abs(up), initial=0.0)), float(np.max(np.abs(down), initial=0.0)))
    db = bool(np.all(np.abs(up - down) <= 1e-12 * scale))
    return LevelChain(
        j=j,
        A=_tridiag_generator(up, down),
        q=up,
        detailed_balance=db,
        up_evo=np.asarray(cfg.q_up_evo[:, j, :], dtype=float),
        down_evo=np.asarray(cfg.q_down_evo[:, j, :], dtype=float),
    )


def _link_rates(chain: LevelChain) -> tuple[np.ndarray, np.ndarray]:
    up = np.diag(chain.A, -1)
    down = np.diag(chain.A, 1)
    return up, down


def _require_positive_links(chain: LevelChain, up: np.ndarray, down: np.ndarray):
    for name, rates in (("up", up), ("down", down)):
        bad = np.flatnonzero(rates <= 0.0)
        if bad.size:
            lvl = bad[0] + (1 if name == "up" else 2)  # 1-based source level
            raise DegenerateChainError(
                f"column {chain.j + 1}: {name} rate vanishes on the link at level "
                f"{lvl}; the chain does not connect all levels"
            )


def kernel_product_forms(chain: LevelChain) -> tuple[np.ndarray, np.ndarray]:
    """The chain's stationary occupation built two independent ways.

    First form chains the link ratios upward from the bottom level, second
    chains the inverse ratios downward from the top; both are normalized to
    unit mass.  They agree up to rounding and serve as a cross-check.
    """
    up, down = _link_rates(chain)
    if up.size == 0:
        one = np.ones(1)
        return one.copy(), one.copy()
    _require_positive_links(chain, up, down)
    v_bottom = np.concatenate(([1.0], np.cumprod(up / down)))
    v_bottom /= v_bottom.sum()
    v_top = np.concatenate(([1.0], np.cumprod((down / up)[::-1])))[::-1]
    v_top /= v_top.sum()
    return v_bottom, v_top


def kernel(chain: LevelChain, mass: float = 1.0) -> np.ndarray:
    """Stationary occupation of the chain carrying the given total mass.

    Under detailed balance this is exactly uniform mass/n.
    """
    v_bottom, v_top = kernel_product_forms(chain)
    gap = float(np.max(np.abs(v_bottom - v_top)))
    if gap > 1e-12:
        raise StationaryError(
            f"column {chain.j + 1}: kernel product forms disagree by {gap:.3e}"
        )
    return mass * v_bottom


_SIGN: Optional[int] = None


def realized_sign() -> int:
    """Which sign pairing the complement recursion realizes.

    The recursion below returns, for input y, the mean-zero z with
    A z = realized_sign() * y.  The pairing is fixed once per process by a
    residual probe on a two-level unit chain and asserted on every solve.
    """
    global _SIGN
    if _SIGN is None:
        q = np.ones(1)
        y = np.array([1.0, -1.0])
        A = _tridiag_generator(q, q)
        z = _chain_solve_closed(q, y)
        r_minus = float(np.max(np.abs(A @ z + y)))
        r_plus = float(np.max(np.abs(A @ z - y)))
        if r_minus <= 1e-12:
            _SIGN = -1
        elif r_plus <= 1e-12:
            _SIGN = 1
        else:
            raise StationaryError(
                f"complement recursion failed the sign probe "
                f"(residuals {r_minus:.3e} / {r_plus:.3e})"
            )
        log.debug("complement solve realizes A z = %+d * y", _SIGN)
    return _SIGN


def _cumulative_loads(q: np.ndarray, y: np.ndarray) -> np.ndarray:
    # load on link a (1-based a = 1..n-1): partial sum of y below, over the rate
    return np.cumsum(y)[:-1] / q


def _chain_solve_closed(q: np.ndarray, y: np.ndarray) -> np.ndarray:
    n = y.size
    S = _cumulative_loads(q, y)
    a = np.arange(1, n)
    z = np.empty(n)
    z[0] = float(np.dot((n - a) / n, S))
    z[1:] = z[0] - np.cumsum(S)
    return z


def _chain_solve_indicator(q: np.ndarray, y: np.ndarray) -> np.ndarray:
    # same solution as a single weighted sum over links; independent rounding path
    n = y.size
    S = _cumulative_loads(q, y)
    a = np.arange(1, n)
    i = np.arange(1, n + 1)
    W = (n - a)[None, :] / n - (i[:, None] > a[None, :])
    return W @ S


def _g1_variant(q: np.ndarray, wcol: np.ndarray) -> np.ndarray:
    """Variant weighted sum with the level weights shifted by one above the link.

    Kept purely as a diagnostic: it disagrees with the complement solve in
    general (it is not even mean-zero), the solve is authoritative, and the
    gap is logged once per process.
    """
    n = wcol.size
    mean = float(wcol.sum()) / n
    a = np.arange(1, n)
    inner = (a * mean - np.cumsum(wcol)[:-1]) / q
    i = np.arange(1, n + 1)
    W = np.where(i[:, None] > a[None, :], (n - a - 1.0) / n, (n - a) / n)
    return W @ inner


def solve_on_complement(chain: LevelChain, y) -> np.ndarray:
    """Unique mean-zero z with A z = -y, for mean-zero y on a balanced chain.

    Closed-form recursion down the chain; every call re-verifies the realized
    sign pairing and cross-checks against a dense least-squares solve (whose
    minimum-norm solution is exactly the mean-zero one here).
    """
    ya = np.asarray(y, dtype=float).reshape(-1)
    if ya.size != chain.n:
        raise ValueError(f"right-hand side has length {ya.size}, chain has {chain.n}")
    if not chain.detailed_balance:
        raise StationaryError(
            f"column {chain.j + 1} chain is not detailed-balanced; "
            "the complement solve requires matching up/down link rates"
        )
    scale = max(1.0, float(np.max(np.abs(ya), initial=0.0)))
    if abs(float(ya.sum())) > MEAN_TOL * scale:
        raise StationaryError(
            f"right-hand side is not mean-zero (sum {ya.sum():.3e}); "
            "it leaves the solvable complement"
        )
    if chain.n == 1:
        return np.zeros(1)
    if np.any(chain.q <= 0.0):
        _require_positive_links(chain, *_link_rates(chain))
    z = _chain_solve_closed(chain.q, ya)
    sign = realized_sign()
    resid = float(np.max(np.abs(chain.A @ z - sign * ya)))
    if resid > CROSS_TOL * scale:
        raise StationaryError(f"complement solve residual {resid:.3e} out of tolerance")
    z_dense, *_ = np.linalg.lstsq(chain.A, sign * ya, rcond=None)
    gap = float(np.max(np.abs(z - z_dense)))
    if gap > CROSS_TOL * max(1.0, float(np.max(np.abs(z)))):
        raise StationaryError(
            f"closed-form and dense solves disagree by {gap:.3e} "
            f"on column {chain.j + 1}"
        )
    return z


def g0_term(cfg: GameConfig) -> np.ndarray:
    """Leading payoff coefficient: each column's mean effective reward.

    Constant down each column; the payoff itself carries this term divided
    by delta_dis.  Errors out when some column's net reward sums to zero,
    which leaves the first correction undefined.
    """
    wt = effective_rewards(cfg)
    sums = wt.sum(axis=0)
    scale = max(1.0, float(np.max(np.abs(wt))) * cfg.n)
    dead = np.flatnonzero(np.abs(sums) <= 1e-12 * scale)
    if dead.size:
        cols = ", ".join(str(j + 1) for j in dead)
        raise StationaryError(
            f"net effective reward sums to zero in behaviour column(s) {cols}; "
            "the payoff expansion is degenerate there"
        )
    return np.tile(sums / cfg.n, (cfg.n, 1))


_variant_logged = False


def g1_term(cfg: GameConfig) -> np.ndarray:
    """First payoff correction, mean-zero down every column.

    Solves the chain equation with the centered effective rewards as data,
    by two independently rounded summations that must agree to 1e-9.  A
    historical variant weighting is also evaluated; it is diagnostic only.
    """
    global _variant_logged
    wt = effective_rewards(cfg)
    g0 = g0_term(cfg)
    out = np.zeros((cfg.n, cfg.m))
    worst_variant = 0.0
    for j in range(cfg.m):
        chain = build_level_chain(j, cfg)
        y = wt[:, j] - g0[:, j]
        z = solve_on_complement(chain, y)
        if cfg.n > 1:
            z_ind = _chain_solve_indicator(chain.q, y)
            scale = max(1.0, float(np.max(np.abs(z))))
            gap = float(np.max(np.abs(z - z_ind)))
            if gap > FORM_TOL * scale:
                raise StationaryError(
                    f"first-correction summations disagree by {gap:.3e} "
                    f"in column {j + 1}"
                )
            worst_variant = max(
                worst_variant, float(np.max(np.abs(_g1_variant(chain.q, wt[:, j]) - z)))
            )
        out[:, j] = z
    if worst_variant > FORM_TOL and not _variant_logged:
        log.warning(
            "variant first-correction weighting deviates by %.3e; "
            "using the complement solve (expected, logged once)",
            worst_variant,
        )
        _variant_logged = True
    return out


def g2_term(cfg: GameConfig, regime=None) -> np.ndarray:
    """Second payoff correction for the fast-discount regimes.

    In the regime with quadratic interaction scale the data is just the first
    correction; with equal scales the stimulated chain and downgrade fines
    enter and a per-column solvability sum must vanish (checked at 1e-9).
    """
    regime = Regime(regime) if regime is not None else cfg.regime
    if regime is Regime.ID3:
        raise StationaryError(
            "slow-discount regime carries no second-order payoff correction"
        )
    g1 = g1_term(cfg)
    out = np.zeros((cfg.n, cfg.m))
    x0m = None
    b = None
    if regime is Regime.ID2:
        rep = dominant_level(cfg)
        if not rep.unique:
            raise StationaryError(
                "dominant behaviour column is tied; second-order correction "
                "needs a unique dominant column"
            )
        b = rep.level
        x0m = np.zeros((cfg.n, cfg.m))
        x0m[:, b] = 1.0 / cfg.n
    for j in range(cfg.m):
        chain = build_level_chain(j, cfg)
        if regime is Regime.ID1:
            y = -g1[:, j]
        else:
            E0 = chain.interaction_generator(x0m)
            rhs = g1[:, j] - E0.T @ g1[:, j]
            rhs = rhs + cfg.fee_H * cfg.q_down_evo[:, j, b] / cfg.n
            scale = max(1.0, float(np.max(np.abs(rhs))))
            s = float(rhs.sum())
            if abs(s) > SOLVE_TOL * scale:
                raise StationaryError(
                    f"second-order solvability fails in column {j + 1} "
                    f"(data sums to {s:.3e}); no correction exists for this config"
                )
            rhs = rhs - rhs.mean()
            y = -rhs
        out[:, j] = solve_on_complement(chain, y)
    return out


def x1_correction(cfg: GameConfig) -> np.ndarray:
    """First occupation correction, supported on the dominant column.

    The uniform occupation feeds the stimulated moves a net flow r per level;
    the correction is the mean-zero chain solution balancing it.  r telescopes
    to zero thanks to the zero boundary rows of the evolution tensors.
    """
    rep = dominant_level(cfg)
    if not rep.unique:
        raise StationaryError(
            "dominant behaviour column is tied; occupation correction undefined"
        )
    b = rep.level
    n = cfg.n
    que = np.asarray(cfg.q_up_evo[:, b, b], dtype=float)
    qde = np.asarray(cfg.q_down_evo[:, b, b], dtype=float)
    prev_up = np.concatenate(([0.0], que[:-1]))
    next_dn = np.concatenate((qde[1:], [0.0]))
    r = (prev_up - que + next_dn - qde) / float(n * n)
    scale = max(1.0, float(np.max(np.abs(r), initial=0.0)))
    if abs(float(r.sum())) > 1e-12 * scale:
        raise StationaryError(
            "stimulated net flow fails to telescope to zero; "
            "check the boundary rows of the evolution tensors"
        )
    r = r - r.mean()
    out = np.zeros((n, cfg.m))
    out[:, b] = solve_on_complement(build_level_chain(b, cfg), r)
    return out


@dataclass(frozen=True)
class StationarySolution:
    """Assembled stationary expansion at a config's scales.

    x0 is uniform mass on the dominant column b; x1 the delta_int-order
    correction.  g collects g0/delta_dis + g1 (+ delta_dis*g2 where the
    regime defines it).  margin is the best switching gain at the assembled
    point (<= 0 certifies no profitable switch); margin_leading compares
    column reward sums directly.
    """

    x0: Occupation
    x1: np.ndarray
    g0: np.ndarray
    g1: np.ndarray
    g2: Optional[np.ndarray]
    g: np.ndarray
    b: int
    regime: Regime
    delta: float
    delta_int: float
    delta_dis: float
    margin: float
    margin_leading: float
    meta: dict = field(default_factory=dict, repr=False)

    @property
    def b_1based(self) -> int:
        return self.b + 1

    @property
    def x_corrected(self) -> np.ndarray:
        return self.x0.x + self.delta_int * self.x1


def stationary_solution(cfg: GameConfig) -> StationarySolution:
    """Build the full stationary expansion, certifying its preconditions.

    Requires detailed-balanced, connecting pressure rates and a unique
    dominant behaviour column with nonzero net reward sums; failures raise
    StationaryError naming the condition.
    """
    from .hjb import consistency_margin  # local import keeps module load light

    if cfg.n > 1:
        up = cfg.q_up[:-1, :]
        down = cfg.q_down[1:, :]
        scale = max(1.0, float(np.max(np.abs(up))), float(np.max(np.abs(down))))
        gap = float(np.max(np.abs(up - down)))
        if gap > 1e-12 * scale:
            raise StationaryError(
                f"pressure rates are not detailed-balanced (worst link gap {gap:.3e})"
            )
    rep = dominant_level(cfg)
    if not rep.nonzero_sums:
        raise StationaryError(
            "some behaviour column has zero net effective reward sum; "
            "the expansion is degenerate"
        )
    if not rep.unique:
        sums = rep.column_sums
        raise StationaryError(
            f"dominant behaviour column is tied (column sums {sums.tolist()})"
        )
    b = rep.level

    x0m = np.zeros((cfg.n, cfg.m))
    x0m[:, b] = 1.0 / cfg.n
    x1 = x1_correction(cfg)
    g0 = g0_term(cfg)
    g1 = g1_term(cfg)
    g2 = None
    if cfg.regime in (Regime.ID1, Regime.ID2):
        g2 = g2_term(cfg)
    g = g0 / cfg.delta_dis + g1
    if g2 is not None:
        g = g + cfg.delta_dis * g2

    if cfg.m > 1:
        others = np.delete(rep.column_sums, b)
        margin_leading = float(np.max(others - rep.column_sums[b]))
    else:
        margin_leading = float("-inf")
    margin = consistency_margin(g, x0m, cfg)

    return StationarySolution(
        x0=Occupation(x0m),
        x1=x1,
        g0=g0,
        g1=g1,
        g2=g2,
        g=g,
        b=b,
        regime=cfg.regime,
        delta=cfg.delta,
        delta_int=cfg.delta_int,
        delta_dis=cfg.delta_dis,
        margin=margin,
        margin_leading=margin_leading,
        meta={"column_sums": rep.column_sums.copy()},
    )

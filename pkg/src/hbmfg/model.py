"""Game data model.

A population of agents lives on an n x m grid of states: n hierarchy levels
(moved up and down by principal pressure and by stimulating interactions with
peers on the same level) and m behaviour levels (changed by the agents' own
decisions).  This module holds the immutable configuration, the small typed
wrappers for occupation / payoff / control matrices, structural validation,
and the derived reward quantities everything downstream is built from.

Indexing is 0-based in memory; file formats and reports are 1-based.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "Regime",
    "SinkRates",
    "GameConfig",
    "Occupation",
    "Payoff",
    "Control",
    "DominanceReport",
    "regime_scales",
    "validate",
    "effective_rewards",
    "dominant_level",
    "occupation_array",
    "payoff_array",
    "control_array",
]

# Tie / degeneracy tolerance for reward column sums (relative to their scale).
TIE_TOL = 1e-12


class Regime(enum.Enum):
    """Asymptotic coupling between the interaction and discount scales.

    id1: delta_int = delta^2, delta_dis = delta
    id2: delta_int = delta,   delta_dis = delta
    id3: delta_int = delta,   delta_dis = delta^2
    """

    ID1 = "id1"
    ID2 = "id2"
    ID3 = "id3"


def regime_scales(regime: Regime, delta: float) -> tuple[float, float]:
    """Return (delta_int, delta_dis) for a regime at base scale delta."""
    if regime is Regime.ID1:
        return delta * delta, delta
    if regime is Regime.ID2:
        return delta, delta
    if regime is Regime.ID3:
        return delta, delta * delta
    raise ValueError(f"unknown regime: {regime!r}")


def _ro(a, dtype=float) -> np.ndarray:
    """Copy to a read-only contiguous array."""
    arr = np.array(a, dtype=dtype, order="C")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class SinkRates:
    """Rates for the variant where downward moves drop straight to level 1.

    direct[i, j]: spontaneous drop rate out of state (i, j); row 0 unused
    (the lowest level cannot drop).  interaction[i, j, k]: stimulated drop
    rate for an agent at (i, j) paired with one at (i, k); row 0 unused.
    """

    direct: np.ndarray
    interaction: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "direct", _ro(self.direct))
        object.__setattr__(self, "interaction", _ro(self.interaction))


@dataclass(frozen=True)
class GameConfig:
    """Immutable problem description.

    Pressure rates q_up/q_down are (n, m): q_up[i, j] moves (i, j) -> (i+1, j),
    q_down[i, j] moves (i, j) -> (i-1, j).  Evolutionary (interaction) tensors
    q_up_evo/q_down_evo are (n, m, m): entry [i, j, k] is the stimulated rate
    for an agent at (i, j) paired with an agent at (i, k).  Top row of the up
    rates and bottom row of the down rates must be zero.

    w[i, j] is the per-state reward flow, fee_B[j, k] the behaviour switching
    fee (zero diagonal), fee_H[i] the fine charged on an enforced downgrade
    out of level i.  lam is the decision-clock rate; delta the base asymptotic
    scale; delta_int/delta_dis default to the regime coupling but may be set
    explicitly (validate() then reports any mismatch).
    """

    n: int
    m: int
    q_up: np.ndarray
    q_down: np.ndarray
    q_up_evo: np.ndarray
    q_down_evo: np.ndarray
    w: np.ndarray
    fee_B: np.ndarray
    fee_H: np.ndarray
    lam: float = 1.0
    delta: float = 0.1
    regime: Regime = Regime.ID1
    detailed_balance: bool = False
    q_sink: Optional[SinkRates] = None
    delta_int: float = None  # type: ignore[assignment]
    delta_dis: float = None  # type: ignore[assignment]

    def __post_init__(self):
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "m", int(self.m))
        for name in ("q_up", "q_down", "q_up_evo", "q_down_evo", "w", "fee_B", "fee_H"):
            object.__setattr__(self, name, _ro(getattr(self, name)))
        if isinstance(self.regime, str):
            object.__setattr__(self, "regime", Regime(self.regime.lower()))
        d_int, d_dis = regime_scales(self.regime, float(self.delta))
        if self.delta_int is None:
            object.__setattr__(self, "delta_int", d_int)
        if self.delta_dis is None:
            object.__setattr__(self, "delta_dis", d_dis)
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "delta_int", float(self.delta_int))
        object.__setattr__(self, "delta_dis", float(self.delta_dis))

    @property
    def variant(self) -> str:
        """"sink" when direct-drop rates are configured, else "standard"."""
        return "sink" if self.q_sink is not None else "standard"

    def shape(self) -> tuple[int, int]:
        return (self.n, self.m)


@dataclass(frozen=True)
class Occupation:
    """Population distribution over the state grid: nonnegative, sums to 1."""

    x: np.ndarray

    SUM_TOL = 1e-9

    def __post_init__(self):
        object.__setattr__(self, "x", _ro(self.x))
        if self.x.ndim != 2:
            raise ValueError("occupation must be a matrix")
        if not np.all(np.isfinite(self.x)):
            raise ValueError("occupation has non-finite entries")
        if self.x.min() < -self.SUM_TOL:
            raise ValueError(f"occupation has negative entry {self.x.min():.3e}")
        s = float(self.x.sum())
        if abs(s - 1.0) > self.SUM_TOL:
            raise ValueError(f"occupation mass {s!r} differs from 1 beyond 1e-9")

    @staticmethod
    def uniform(n: int, m: int) -> "Occupation":
        return Occupation(np.full((n, m), 1.0 / (n * m)))


@dataclass(frozen=True)
class Payoff:
    """Discounted payoff matrix g, one value per state."""

    g: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "g", _ro(self.g))
        if self.g.ndim != 2:
            raise ValueError("payoff must be a matrix")
        if not np.all(np.isfinite(self.g)):
            raise ValueError("payoff has non-finite entries")


@dataclass(frozen=True)
class Control:
    """Pure-strategy decision tensor u[i, from_j, to_k] with 0/1 entries.

    Zero diagonal in (from, to); at most one switch target per state.
    """

    u: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "u", _ro(self.u))
        t = self.u
        if t.ndim != 3 or t.shape[1] != t.shape[2]:
            raise ValueError("control must have shape (n, m, m)")
        if not np.all((t == 0.0) | (t == 1.0)):
            raise ValueError("control entries must be 0 or 1")
        n, m, _ = t.shape
        diag = t[:, np.arange(m), np.arange(m)]
        if np.any(diag != 0.0):
            raise ValueError("control diagonal (stay option) must be 0")
        if np.any(t.sum(axis=2) > 1.0):
            raise ValueError("control row selects more than one switch target")

    @staticmethod
    def zero(n: int, m: int) -> "Control":
        return Control(np.zeros((n, m, m)))


def occupation_array(x) -> np.ndarray:
    """Accept an Occupation or a bare matrix; return a float ndarray."""
    if isinstance(x, Occupation):
        return x.x
    return np.asarray(x, dtype=float)


def payoff_array(g) -> np.ndarray:
    if isinstance(g, Payoff):
        return g.g
    return np.asarray(g, dtype=float)


def control_array(u, n: int, m: int) -> np.ndarray:
    """Accept Control / tensor / None (meaning: nobody switches)."""
    if u is None:
        return np.zeros((n, m, m))
    if isinstance(u, Control):
        return u.u
    return np.asarray(u, dtype=float)


def _check_matrix(out: list, name: str, a: np.ndarray, shape: tuple) -> bool:
    if a.shape != shape:
        out.append(f"{name}: expected shape {shape}, got {a.shape}")
        return False
    if not np.all(np.isfinite(a)):
        out.append(f"{name}: non-finite entries")
        return False
    return True


def validate(cfg: GameConfig) -> list[str]:
    """Structural validation; returns a list of human-readable violations.

    Empty list means the configuration is well formed.  Indices in messages
    are 1-based.
    """
    v: list[str] = []
    n, m = cfg.n, cfg.m
    if n < 1 or m < 1:
        return [f"dimensions: n={n}, m={m} must be positive"]

    ok_up = _check_matrix(v, "q_up", cfg.q_up, (n, m))
    ok_dn = _check_matrix(v, "q_down", cfg.q_down, (n, m))
    ok_ue = _check_matrix(v, "q_up_evo", cfg.q_up_evo, (n, m, m))
    ok_de = _check_matrix(v, "q_down_evo", cfg.q_down_evo, (n, m, m))
    _check_matrix(v, "w", cfg.w, (n, m))
    ok_fb = _check_matrix(v, "fee_B", cfg.fee_B, (m, m))
    ok_fh = _check_matrix(v, "fee_H", cfg.fee_H, (n,))

    for name, arr, ok in (
        ("q_up", cfg.q_up, ok_up),
        ("q_down", cfg.q_down, ok_dn),
        ("q_up_evo", cfg.q_up_evo, ok_ue),
        ("q_down_evo", cfg.q_down_evo, ok_de),
    ):
        if ok and arr.min() < 0:
            idx = np.unravel_index(int(np.argmin(arr)), arr.shape)
            pos = ",".join(str(i + 1) for i in idx)
            v.append(f"{name}[{pos}]: negative rate {arr[idx]!r}")

    # No pressure or stimulation out of the grid: top row up, bottom row down.
    if ok_up and np.any(cfg.q_up[n - 1] != 0):
        v.append(f"q_up row {n} nonzero: no upgrade out of the top level")
    if ok_dn and np.any(cfg.q_down[0] != 0):
        v.append("q_down row 1 nonzero: no downgrade out of the lowest level")
    if ok_ue and np.any(cfg.q_up_evo[n - 1] != 0):
        v.append(f"q_up_evo row {n} nonzero: no stimulated upgrade out of the top level")
    if ok_de and np.any(cfg.q_down_evo[0] != 0):
        v.append("q_down_evo row 1 nonzero: no stimulated downgrade out of the lowest level")

    if ok_fb:
        if np.any(np.diag(cfg.fee_B) != 0):
            v.append("fee_B diagonal must be zero")
        if cfg.fee_B.min() < 0:
            v.append("fee_B has negative entries")
    if ok_fh and cfg.fee_H.min() < 0:
        v.append("fee_H has negative entries")

    if cfg.lam < 0:
        v.append(f"lambda: negative decision rate {cfg.lam!r}")
    if not (cfg.delta > 0):
        v.append(f"delta: must be positive, got {cfg.delta!r}")
    if not (cfg.delta_dis > 0):
        v.append(f"delta_dis: must be positive, got {cfg.delta_dis!r}")
    if cfg.delta_int < 0:
        v.append(f"delta_int: must be nonnegative, got {cfg.delta_int!r}")

    d_int, d_dis = regime_scales(cfg.regime, cfg.delta)
    if abs(cfg.delta_int - d_int) > TIE_TOL * max(1.0, d_int):
        v.append(
            f"regime {cfg.regime.value}: delta_int={cfg.delta_int!r} "
            f"inconsistent with delta={cfg.delta!r} (expected {d_int!r})"
        )
    if abs(cfg.delta_dis - d_dis) > TIE_TOL * max(1.0, d_dis):
        v.append(
            f"regime {cfg.regime.value}: delta_dis={cfg.delta_dis!r} "
            f"inconsistent with delta={cfg.delta!r} (expected {d_dis!r})"
        )

    if cfg.detailed_balance and ok_up and ok_dn and n > 1:
        diff = cfg.q_up[: n - 1] - cfg.q_down[1:]
        if np.any(np.abs(diff) > TIE_TOL):
            i, j = np.unravel_index(int(np.argmax(np.abs(diff))), diff.shape)
            v.append(
                f"detailed_balance: q_up[{i + 1},{j + 1}] != q_down[{i + 2},{j + 1}] "
                f"({cfg.q_up[i, j]!r} vs {cfg.q_down[i + 1, j]!r})"
            )

    if cfg.q_sink is not None:
        s = cfg.q_sink
        _check_matrix(v, "q_sink.direct", s.direct, (n, m))
        _check_matrix(v, "q_sink.interaction", s.interaction, (n, m, m))
        if s.direct.min() < 0 or s.interaction.min() < 0:
            v.append("q_sink: negative rates")
        # Sink variant replaces step-down moves entirely; mixing is rejected.
        if ok_dn and np.any(cfg.q_down != 0):
            v.append("q_sink present but q_down nonzero: pick one downward mechanism")
        if ok_de and np.any(cfg.q_down_evo != 0):
            v.append("q_sink present but q_down_evo nonzero: pick one downward mechanism")

    return v


def effective_rewards(cfg: GameConfig) -> np.ndarray:
    """Reward flow net of expected downgrade fines: w[i,j] - q_down[i,j]*fee_H[i]."""
    return cfg.w - cfg.q_down * cfg.fee_H[:, None]


@dataclass(frozen=True)
class DominanceReport:
    """Which behaviour level the net rewards single out."""

    level: int  # 0-based index of the maximal column sum
    unique: bool
    nonzero_sums: bool  # every column sum bounded away from zero
    column_sums: np.ndarray = field(repr=False)
    tol: float = TIE_TOL

    @property
    def level_1based(self) -> int:
        return self.level + 1


def dominant_level(cfg: GameConfig) -> DominanceReport:
    """Locate the behaviour column with the largest net reward sum.

    Uniqueness is decided at a 1e-12 tolerance relative to the largest
    column-sum magnitude; the report also says whether every column sum is
    nonzero at the same tolerance (degenerate rewards break the stationary
    expansion).
    """
    sums = effective_rewards(cfg).sum(axis=0)
    scale = float(np.max(np.abs(sums))) if sums.size else 0.0
    tol = TIE_TOL * max(1.0, scale)
    b = int(np.argmax(sums))
    near = np.abs(sums - sums[b]) <= tol
    unique = int(near.sum()) == 1
    nonzero = bool(np.all(np.abs(sums) > tol))
    return DominanceReport(
        level=b, unique=unique, nonzero_sums=nonzero, column_sums=_ro(sums), tol=tol
    )

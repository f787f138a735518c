"""Exact event-driven simulation of the N-agent Markov chain.

Agents occupy (level, behaviour) cells.  Three event families move one agent
at a time: pressure moves one level up or down at the configured per-agent
rates; stimulated moves do the same at delta_int times the pairwise rate,
scaled by the count of same-level partners over N (pairs within one cell are
counted literally, the mover included); switching moves an agent across
behaviours at rate lam times the control entry.  The sink variant routes all
downward events straight to the lowest level.

Total event rates are linear-or-quadratic in the counts, so the chain is
simulated exactly: exponential waiting time at the total rate, categorical
choice of channel.  Mean counts over N follow the kinetic equation as N grows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional, Sequence

import numpy as np

from .kinetics import integrate_forward
from .model import GameConfig, control_array, occupation_array

__all__ = [
    "CountState",
    "Transition",
    "SimPath",
    "ConvergenceStudy",
    "enumerate_transitions",
    "simulate",
    "convergence_study",
]

RNG_NAME = "pcg64"
_BLOCK = 65536


@dataclass(frozen=True)
class CountState:
    """Agent counts per (level, behaviour) cell; N is the fixed total."""

    counts: np.ndarray
    N: int

    def __post_init__(self):
        c = np.array(self.counts, dtype=np.int64)
        c.flags.writeable = False
        object.__setattr__(self, "counts", c)
        if c.ndim != 2:
            raise ValueError("counts must be a 2-d matrix")
        if c.min(initial=0) < 0:
            raise ValueError("counts must be nonnegative")
        if int(c.sum()) != self.N:
            raise ValueError(f"counts sum to {int(c.sum())}, expected N={self.N}")

    @staticmethod
    def from_occupation(x, N: int) -> "CountState":
        """Largest-remainder rounding of x*N; ties go to the lower flat index."""
        xa = occupation_array(x)
        target = xa * N
        base = np.floor(target)
        need = int(round(N - base.sum()))
        if need:
            rem = (target - base).ravel()
            order = np.argsort(-rem, kind="stable")
            flat = base.ravel()
            flat[order[:need]] += 1.0
        return CountState(counts=base.astype(np.int64), N=N)


class Transition(NamedTuple):
    src: tuple
    dst: tuple
    rate: float


def _build_channels(cfg: GameConfig, u: Optional[np.ndarray], N: int):
    """Static channel table: rate = coeff * counts[src] * (counts[partner] or 1)."""
    n, m = cfg.n, cfg.m

    def fl(i, j):
        return i * m + j

    srcs: List[int] = []
    dsts: List[int] = []
    coeffs: List[float] = []
    partners: List[int] = []

    def add(src, dst, coeff, partner=-1):
        if coeff > 0.0:
            srcs.append(src)
            dsts.append(dst)
            coeffs.append(coeff)
            partners.append(partner)

    sink = cfg.variant == "sink"
    d = cfg.delta_int
    for j in range(m):
        for i in range(n):
            if i < n - 1:
                add(fl(i, j), fl(i + 1, j), float(cfg.q_up[i, j]))
                if d != 0.0:
                    for k in range(m):
                        add(fl(i, j), fl(i + 1, j),
                            d * float(cfg.q_up_evo[i, j, k]) / N, fl(i, k))
            if i > 0:
                if sink:
                    add(fl(i, j), fl(0, j), float(cfg.q_sink.direct[i, j]))
                    if d != 0.0:
                        for k in range(m):
                            add(fl(i, j), fl(0, j),
                                d * float(cfg.q_sink.interaction[i, j, k]) / N,
                                fl(i, k))
                else:
                    add(fl(i, j), fl(i - 1, j), float(cfg.q_down[i, j]))
                    if d != 0.0:
                        for k in range(m):
                            add(fl(i, j), fl(i - 1, j),
                                d * float(cfg.q_down_evo[i, j, k]) / N, fl(i, k))
            if u is not None and cfg.lam > 0.0:
                for k in range(m):
                    if k != j:
                        add(fl(i, j), fl(i, k), cfg.lam * float(u[i, j, k]))
    return srcs, dsts, coeffs, partners


def enumerate_transitions(state: CountState, u, cfg: GameConfig) -> List[Transition]:
    """All currently possible single-agent moves with their total rates."""
    n, m = cfg.n, cfg.m
    ua = None if u is None else control_array(u, n, m)
    srcs, dsts, coeffs, partners = _build_channels(cfg, ua, state.N)
    flat = state.counts.ravel()
    out = []
    for s, t, c, p in zip(srcs, dsts, coeffs, partners):
        rate = c * float(flat[s])
        if p >= 0:
            rate *= float(flat[p])
        if rate > 0.0:
            out.append(Transition(src=(s // m, s % m), dst=(t // m, t % m), rate=rate))
    return out


@dataclass(frozen=True)
class SimPath:
    """Counts sampled on a uniform grid, plus bookkeeping for reproducibility."""

    times: np.ndarray
    counts: np.ndarray  # (len(times), n, m) int64
    N: int
    events: int
    seed: int
    event_log: Optional[list] = field(default=None, repr=False)
    meta: dict = field(default_factory=dict, repr=False)

    @property
    def x(self) -> np.ndarray:
        return self.counts / float(self.N)


def simulate(
    s0: CountState,
    u,
    T: float,
    seed: int,
    cfg: GameConfig,
    samples: int = 50,
    record_events: bool = False,
) -> SimPath:
    """Run one exact trajectory from s0 over [0, T].

    u: None, a fixed control tensor, or a policy callable t -> control; a
    policy is sampled once per output-grid interval (at its midpoint) and held
    constant inside it.  Restarting the exponential clock at interval
    boundaries is exact by memorylessness.  The RNG is PCG64 seeded as given;
    equal seeds reproduce the event sequence bit for bit.
    """
    if not (T > 0.0):
        raise ValueError("need T > 0")
    if samples < 1:
        raise ValueError("need at least one output sample")
    n, m = cfg.n, cfg.m
    policy: Optional[Callable] = u if callable(u) and not isinstance(u, np.ndarray) else None
    fixed_u = None if (policy is not None or u is None) else control_array(u, n, m)

    rng = np.random.Generator(np.random.PCG64(seed))
    buf = rng.random(_BLOCK).tolist()
    pos = 0

    times = np.linspace(0.0, T, samples + 1)
    out = np.empty((samples + 1, n, m), dtype=np.int64)
    out[0] = s0.counts
    counts = [int(v) for v in s0.counts.ravel()]
    events = 0
    t = 0.0
    log_: Optional[list] = [] if record_events else None
    ln = math.log

    channels = None
    if policy is None:
        channels = _build_channels(cfg, fixed_u, s0.N)

    for kseg in range(samples):
        t_end = float(times[kseg + 1])
        if policy is not None:
            u_now = control_array(policy(0.5 * (float(times[kseg]) + t_end)), n, m)
            channels = _build_channels(cfg, u_now, s0.N)
        srcs, dsts, coeffs, partners = channels
        C = len(srcs)
        rates = [0.0] * C
        while True:
            tot = 0.0
            for c in range(C):
                r = coeffs[c] * counts[srcs[c]]
                p = partners[c]
                if p >= 0:
                    r *= counts[p]
                rates[c] = r
                tot += r
            if tot <= 0.0:
                break
            if pos >= _BLOCK:
                buf = rng.random(_BLOCK).tolist()
                pos = 0
            wait = -ln(1.0 - buf[pos]) / tot
            pos += 1
            if t + wait > t_end:
                break
            t += wait
            if pos >= _BLOCK:
                buf = rng.random(_BLOCK).tolist()
                pos = 0
            pick = buf[pos] * tot
            pos += 1
            acc = 0.0
            chosen = C - 1
            for c in range(C):
                acc += rates[c]
                if pick < acc:
                    chosen = c
                    break
            counts[srcs[chosen]] -= 1
            counts[dsts[chosen]] += 1
            events += 1
            if log_ is not None:
                log_.append((t, srcs[chosen], dsts[chosen]))
        t = t_end
        out[kseg + 1] = np.asarray(counts, dtype=np.int64).reshape(n, m)

    return SimPath(
        times=times,
        counts=out,
        N=s0.N,
        events=events,
        seed=seed,
        event_log=log_,
        meta={"rng": RNG_NAME},
    )


@dataclass(frozen=True)
class ConvergenceStudy:
    """Empirical mean paths vs the kinetic solution across population sizes.

    rmse[k] pools the checkpoint-and-state mean squared deviation of the
    N_values[k] empirical mean from the kinetic reference (t=0 excluded, it
    is exact by construction).  slope is the log-log fit of rmse against N;
    sqrt(1/N) sampling noise shows up as a slope near -1/2.
    """

    N_values: Sequence[int]
    rmse: np.ndarray
    slope: float
    times: np.ndarray
    means: dict
    stderrs: dict
    reference: np.ndarray
    replications: int
    seed: int


def convergence_study(
    cfg: GameConfig,
    u,
    x0,
    T: float,
    N_list: Sequence[int],
    replications: int,
    seed: int,
    samples: int = 10,
) -> ConvergenceStudy:
    """Replicated simulations at increasing N against one kinetic reference.

    Replication r at the k-th population size draws its own PCG64 stream,
    seeded seed + k*replications + r.  Returns per-N mean paths, per-cell
    standard errors of those means, and the pooled RMSE with its log-log
    slope in N.
    """
    if len(N_list) < 2 or any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ValueError("N_list must be strictly increasing with at least two sizes")
    if replications < 2:
        raise ValueError("need at least two replications for standard errors")
    x0a = occupation_array(x0)
    times = np.linspace(0.0, T, samples + 1)

    per = max(1, int(math.ceil(2000.0 / samples)))
    traj = integrate_forward(x0a, u, 0.0, T, T / (per * samples), cfg)
    ref = traj.x[::per]

    means = {}
    stderrs = {}
    rmse = np.zeros(len(N_list))
    for k, Nv in enumerate(N_list):
        s0 = CountState.from_occupation(x0a, int(Nv))
        acc = np.zeros((samples + 1, cfg.n, cfg.m))
        acc2 = np.zeros_like(acc)
        for r in range(replications):
            path = simulate(s0, u, T, seed + k * replications + r, cfg, samples=samples)
            xs = path.x
            acc += xs
            acc2 += xs * xs
        mean = acc / replications
        var = np.clip((acc2 - replications * mean * mean) / (replications - 1), 0.0, None)
        means[int(Nv)] = mean
        stderrs[int(Nv)] = np.sqrt(var / replications)
        rmse[k] = float(np.sqrt(np.mean((mean[1:] - ref[1:]) ** 2)))
    slope = float(np.polyfit(np.log10(np.asarray(N_list, float)), np.log10(rmse), 1)[0])
    return ConvergenceStudy(
        N_values=list(int(v) for v in N_list),
        rmse=rmse,
        slope=slope,
        times=times,
        means=means,
        stderrs=stderrs,
        reference=ref,
        replications=replications,
        seed=seed,
    )

"""Command-line front end.

Subcommands: validate, stationary, stability, solve, simulate, sweep.  Every
run writes its artifacts into --out (or $MFG_OUT, or ./out), including a
manifest.json with content hashes, and prints a one-line JSON summary to
stdout.  Exit codes: 0 success, 1 usage/validation/assumption failures,
2 numerical failures (including a solve that does not converge).
"""
from __future__ import annotations

import argparse
import copy
import json
import os
import sys

import numpy as np

from . import __version__
from .hjb import HjbError
from .io import (
    ConfigError,
    config_sha256,
    jsonable,
    read_config,
    read_state_csv,
    write_aggregate_csv,
    write_json,
    write_manifest,
    write_state_csv,
    write_trajectory_csv,
)
from .kinetics import KineticsError
from .model import Occupation, Regime, validate
from .simulator import CountState, simulate
from .solver import (
    SolverError,
    default_dt,
    default_horizon,
    rate_ordering_check,
    solve_mfg,
    turnpike_metrics,
)
from .stability import StabilityError, build_reduced_linearization, compare_d_block, spectrum
from .stationary import StationaryError, stationary_solution

__all__ = ["main", "run", "build_parser"]

_VALIDATION_ERRORS = (ConfigError, StationaryError, StabilityError, ValueError)
_NUMERICAL_ERRORS = (KineticsError, HjbError, SolverError,
                     FloatingPointError, np.linalg.LinAlgError)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; the contract here reserves 2 for
    # numerical failures, so usage problems are rerouted to exit 1.
    def error(self, message):
        raise _UsageError(message)


def _emit(summary: dict) -> None:
    print(json.dumps(jsonable(summary), sort_keys=True, separators=(",", ":")))


def _outdir(args) -> str:
    out = args.out or os.environ.get("MFG_OUT") or "out"
    os.makedirs(out, exist_ok=True)
    return out


def _run_validate(cfg_path: str, out: str):
    try:
        cfg = read_config(cfg_path)
        violations = validate(cfg)
    except ConfigError as e:
        violations = [str(e)]
    ok = not violations
    write_json(os.path.join(out, "validation.json"),
               {"ok": ok, "violations": violations})
    summary = {"cmd": "validate", "ok": ok, "violations": len(violations), "out": out}
    return (0 if ok else 1), summary


def _run_stationary(cfg_path: str, out: str, regime=None, delta=None):
    import dataclasses

    cfg = read_config(cfg_path)
    if regime is not None or delta is not None:
        # overrides re-derive delta_int/delta_dis from the (new) regime
        cfg = dataclasses.replace(
            cfg,
            regime=Regime(regime) if regime is not None else cfg.regime,
            delta=float(delta) if delta is not None else cfg.delta,
            delta_int=None,
            delta_dis=None,
        )
    sol = stationary_solution(cfg)
    write_json(os.path.join(out, "stationary.json"), {
        "b": sol.b_1based,
        "regime": sol.regime.value,
        "delta": sol.delta,
        "delta_int": sol.delta_int,
        "delta_dis": sol.delta_dis,
        "margin": sol.margin,
        "margin_leading": sol.margin_leading,
        "column_sums": sol.meta["column_sums"],
        "x0": sol.x0.x,
        "x1": sol.x1,
        "g0": sol.g0,
        "g1": sol.g1,
        "g2": sol.g2,
        "g": sol.g,
    })
    write_state_csv(os.path.join(out, "x_star.csv"), sol.x_corrected)
    summary = {"cmd": "stationary", "b": sol.b_1based, "margin": sol.margin,
               "margin_leading": sol.margin_leading, "out": out}
    return 0, summary


def _run_stability(cfg_path: str, out: str):
    cfg = read_config(cfg_path)
    L = build_reduced_linearization(cfg)
    rep = spectrum(L)
    cmp_ = compare_d_block(cfg)
    write_json(os.path.join(out, "stability.json"), {
        "size": int(L.shape[0]),
        "eigenvalues": [[float(v.real), float(v.imag)] for v in rep.eigenvalues],
        "zero_count": rep.zero_count,
        "negative_count": rep.negative_count,
        "positive_count": rep.positive_count,
        "geometric_multiplicity_zero": rep.geometric_multiplicity_zero,
        "tol_zero": rep.tol_zero,
        "d_block": {"max_abs_diff": cmp_["max_abs_diff"], "agree": cmp_["agree"]},
        "rate_ordering": rate_ordering_check(cfg),
    })
    summary = {"cmd": "stability", "zero": rep.zero_count,
               "negative": rep.negative_count, "positive": rep.positive_count,
               "out": out}
    return 0, summary


def _control_change_points(times, u_path):
    changes = []
    prev = None
    for k in range(len(u_path)):
        uk = u_path[k]
        if prev is None or not np.array_equal(uk, prev):
            active = [[int(i) + 1, int(a) + 1, int(b) + 1]
                      for i, a, b in zip(*np.nonzero(uk))]
            changes.append({"t": float(times[k]), "active": active})
            prev = uk
    return changes


def _run_solve(cfg_path: str, out: str, T=None, dt=None, x0_path=None,
               gT_path=None, damping=0.5, max_iter=50):
    cfg = read_config(cfg_path)
    horizon = float(T) if T is not None else default_horizon(cfg)
    step = float(dt) if dt is not None else default_dt(cfg)
    x0 = (Occupation(read_state_csv(x0_path, cfg.n, cfg.m)).x
          if x0_path else Occupation.uniform(cfg.n, cfg.m).x)
    gT = read_state_csv(gT_path, cfg.n, cfg.m) if gT_path else np.zeros((cfg.n, cfg.m))

    res = solve_mfg(x0, gT, horizon, step, cfg, damping=damping, max_iter=max_iter)
    traj = res.trajectory
    write_trajectory_csv(os.path.join(out, "x.csv"), traj.times, traj.x, prefix="x")
    write_trajectory_csv(os.path.join(out, "g.csv"), traj.times, traj.g, prefix="g")
    write_json(os.path.join(out, "controls.json"), {
        "steps": int(len(traj.u)),
        "change_points": _control_change_points(traj.times, traj.u),
    })

    turnpike = None
    try:
        tm = turnpike_metrics(res, cfg)
        turnpike = {"sup_middle": tm.sup_middle, "sup_middle_g": tm.sup_middle_g,
                    "plateau": tm.plateau, "switch_fraction": tm.switch_fraction}
    except StationaryError:
        pass
    write_json(os.path.join(out, "solve.json"), {
        "T": horizon,
        "dt": traj.meta["dt"],
        "iterations": res.iterations,
        "converged": res.converged,
        "oscillating": res.oscillating,
        "cone_worst": res.meta["cone_worst"],
        "switch_fraction": res.meta["switch_fraction"],
        "dx_final": res.meta["dx_final"],
        "drift_max": traj.meta["drift_max"],
        "projections": traj.meta["projections"],
        "violations": len(res.cone_violations),
        "violations_head": [
            [t, i + 1, a + 1, b + 1, gain]
            for (t, i, a, b, gain) in res.cone_violations[:20]
        ],
        "turnpike": turnpike,
    })
    summary = {"cmd": "solve", "converged": res.converged,
               "iterations": res.iterations,
               "cone_worst": res.meta["cone_worst"], "out": out}
    return (0 if res.converged else 2), summary


def _run_simulate(cfg_path: str, out: str, N, T, reps=1, seed=0, samples=50,
                  per_rep=False, x0_path=None):
    cfg = read_config(cfg_path)
    if N < 1 or reps < 1:
        raise ValueError("need N >= 1 and reps >= 1")
    x0 = (Occupation(read_state_csv(x0_path, cfg.n, cfg.m)).x
          if x0_path else Occupation.uniform(cfg.n, cfg.m).x)
    s0 = CountState.from_occupation(x0, int(N))
    paths = [simulate(s0, None, float(T), seed + r, cfg, samples=samples)
             for r in range(reps)]
    xs = np.stack([p.x for p in paths])
    mean = xs.mean(axis=0)
    if reps > 1:
        stderr = xs.std(axis=0, ddof=1) / np.sqrt(reps)
    else:
        stderr = np.zeros_like(mean)
    write_aggregate_csv(os.path.join(out, "aggregate.csv"),
                        paths[0].times, mean, stderr)
    if per_rep:
        for r, p in enumerate(paths):
            write_trajectory_csv(os.path.join(out, f"rep_{r:03d}.csv"),
                                 p.times, p.x, prefix="x")
    events = int(sum(p.events for p in paths))
    write_json(os.path.join(out, "simulate.json"), {
        "N": int(N), "T": float(T), "replications": int(reps),
        "samples": int(samples), "seed": int(seed), "events": events,
        "rng": paths[0].meta["rng"],
    })
    summary = {"cmd": "simulate", "N": int(N), "replications": int(reps),
               "events": events, "out": out}
    return 0, summary


def _parse_sweep_value(token: str):
    try:
        return json.loads(token)
    except json.JSONDecodeError:
        return token


def _set_config_path(doc, tokens, value, label: str):
    cur = doc
    for t in tokens[:-1]:
        if isinstance(cur, list):
            try:
                cur = cur[int(t)]
            except (ValueError, IndexError):
                raise ConfigError(f"sweep parameter path '{label}': bad index '{t}'")
        elif isinstance(cur, dict) and t in cur:
            cur = cur[t]
        else:
            raise ConfigError(f"sweep parameter path '{label}' not found at '{t}'")
    last = tokens[-1]
    if isinstance(cur, list):
        try:
            cur[int(last)] = value
        except (ValueError, IndexError):
            raise ConfigError(f"sweep parameter path '{label}': bad index '{last}'")
    elif isinstance(cur, dict):
        cur[last] = value
    else:
        raise ConfigError(f"sweep parameter path '{label}' does not address a field")


_SWEEP_OPS = {
    "validate": lambda path, sub: _run_validate(path, sub),
    "stationary": lambda path, sub: _run_stationary(path, sub),
    "stability": lambda path, sub: _run_stability(path, sub),
}


def _run_sweep(cfg_path: str, out: str, param: str, values: list[str], op: str):
    try:
        with open(cfg_path, "r", encoding="utf-8") as fh:
            base = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(
            f"config is not valid JSON (line {e.lineno}, column {e.colno}): {e.msg}"
        ) from None
    tokens = param.split(".")
    vals = [_parse_sweep_value(v) for v in values]
    if not vals:
        raise ValueError("sweep needs at least one value")
    results = []
    worst = 0
    for k, val in enumerate(vals):
        doc = copy.deepcopy(base)
        _set_config_path(doc, tokens, val, param)
        sub = os.path.join(out, f"val_{k}")
        os.makedirs(sub, exist_ok=True)
        sub_cfg = os.path.join(sub, "config.json")
        with open(sub_cfg, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        try:
            code, summary = _SWEEP_OPS[op](sub_cfg, sub)
        except _VALIDATION_ERRORS as e:
            code, summary = 1, {"error": str(e)}
        except _NUMERICAL_ERRORS as e:
            code, summary = 2, {"error": str(e)}
        results.append({"value": val, "dir": f"val_{k}",
                        "status": code, "summary": summary})
        worst = max(worst, code)
    write_json(os.path.join(out, "sweep.json"),
               {"param": param, "op": op, "values": vals, "results": results})
    summary = {"cmd": "sweep", "runs": len(vals),
               "failed": sum(1 for r in results if r["status"] != 0), "out": out}
    return worst, summary


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hbmfg", description=__doc__)
    p.add_argument("--version", action="version", version=f"hbmfg {__version__}")
    subs = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("config", help="path to a JSON config file")
        sp.add_argument("--out", default=None,
                        help="output directory (default $MFG_OUT or ./out)")

    sp = subs.add_parser("validate", help="check a config against the invariants")
    common(sp)

    sp = subs.add_parser("stationary", help="stationary expansion terms")
    common(sp)
    sp.add_argument("--regime", choices=[r.value for r in Regime], default=None)
    sp.add_argument("--delta", type=float, default=None)

    sp = subs.add_parser("stability", help="reduced linearization spectrum")
    common(sp)

    sp = subs.add_parser("solve", help="coupled forward-backward solve")
    common(sp)
    sp.add_argument("--T", type=float, default=None, help="horizon (default 50/min rate)")
    sp.add_argument("--dt", type=float, default=None, help="step (default from rates)")
    sp.add_argument("--x0", default=None, help="initial occupation CSV (one row)")
    sp.add_argument("--gT", default=None, help="terminal payoff CSV (one row)")
    sp.add_argument("--damping", type=float, default=0.5)
    sp.add_argument("--max-iter", type=int, default=50)

    sp = subs.add_parser("simulate", help="finite-population event simulation")
    common(sp)
    sp.add_argument("--N", type=int, required=True, help="population size")
    sp.add_argument("--T", type=float, required=True, help="horizon")
    sp.add_argument("--reps", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--samples", type=int, default=50)
    sp.add_argument("--per-rep", action="store_true", dest="per_rep",
                    help="also write one CSV per replication")
    sp.add_argument("--x0", default=None, help="initial occupation CSV (one row)")

    sp = subs.add_parser("sweep", help="rerun an operation across parameter values")
    common(sp)
    sp.add_argument("--param", required=True,
                    help="dotted path into the config (e.g. scales.delta)")
    sp.add_argument("--values", required=True, nargs="+",
                    help="one or more replacement values, each parsed as JSON")
    sp.add_argument("--op", choices=sorted(_SWEEP_OPS), default="stationary")
    return p


def run(argv=None) -> int:
    """Parse argv and execute; returns the exit code."""
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"hbmfg: error: {e}", file=sys.stderr)
        return 1

    out = _outdir(args)
    command = ["hbmfg"] + argv
    try:
        if args.cmd == "validate":
            code, summary = _run_validate(args.config, out)
        elif args.cmd == "stationary":
            code, summary = _run_stationary(args.config, out,
                                            regime=args.regime, delta=args.delta)
        elif args.cmd == "stability":
            code, summary = _run_stability(args.config, out)
        elif args.cmd == "solve":
            code, summary = _run_solve(args.config, out, T=args.T, dt=args.dt,
                                       x0_path=args.x0, gT_path=args.gT,
                                       damping=args.damping, max_iter=args.max_iter)
        elif args.cmd == "simulate":
            code, summary = _run_simulate(args.config, out, N=args.N, T=args.T,
                                          reps=args.reps, seed=args.seed,
                                          samples=args.samples, per_rep=args.per_rep,
                                          x0_path=args.x0)
        else:
            code, summary = _run_sweep(args.config, out, param=args.param,
                                       values=args.values, op=args.op)
    except _VALIDATION_ERRORS as e:
        print(f"hbmfg {args.cmd}: {e}", file=sys.stderr)
        _emit({"cmd": args.cmd, "ok": False, "error": str(e)})
        return 1
    except _NUMERICAL_ERRORS as e:
        print(f"hbmfg {args.cmd}: numerical failure: {e}", file=sys.stderr)
        _emit({"cmd": args.cmd, "ok": False, "error": str(e)})
        return 2

    try:
        cfg_hash = config_sha256(args.config)
    except OSError:
        cfg_hash = None
    write_manifest(out, command, cfg_hash, __version__)
    _emit(summary)
    return code


def main(argv=None) -> int:
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())

"""The stationary solution and its small-parameter expansion.

For detailed-balanced pressure rates and one behaviour column whose effective
rewards dominate, the long-run population puts all its mass uniformly on that
column, and the stationary payoff is an explicit expansion in the two small
scales (interaction strength and discount).  This script assembles that
solution, checks that nobody wants to switch away from it, and shows how the
pieces scale as the base parameter shrinks.

Run:  python demos/02_stationary_expansion.py
"""
from __future__ import annotations

import numpy as np

from hbmfg.kinetics import integrate_forward
from hbmfg.model import GameConfig, effective_rewards
from hbmfg.stationary import stationary_solution

np.set_printoptions(precision=4, suppress=True)


def build_config(delta: float) -> GameConfig:
    n = m = 3
    q_up = np.array([
        [0.8, 1.0, 1.2],
        [1.2, 1.5, 1.8],
        [0.0, 0.0, 0.0],
    ])
    q_down = np.zeros((n, m))
    q_down[1:] = q_up[:-1]
    # generic (unbalanced) interaction tensors: the first-order occupation
    # correction is then genuinely nonzero
    rng = np.random.default_rng(7)
    q_up_evo = np.zeros((n, m, m))
    q_up_evo[:-1] = rng.uniform(0.1, 0.6, size=(n - 1, m, m))
    q_down_evo = np.zeros((n, m, m))
    q_down_evo[1:] = rng.uniform(0.1, 0.6, size=(n - 1, m, m))
    # behaviour 1 carries the largest reward column sum by a clear gap
    w = np.array([
        [2.0, 1.1, 0.7],
        [1.6, 0.9, 0.6],
        [1.4, 0.8, 0.5],
    ])
    fee_B = 1.5 * (1.0 - np.eye(m))
    fee_H = np.full(n, 0.2)
    return GameConfig(n=n, m=m, q_up=q_up, q_down=q_down,
                      q_up_evo=q_up_evo, q_down_evo=q_down_evo,
                      w=w, fee_B=fee_B, fee_H=fee_H,
                      lam=1.0, delta=delta, regime="id1",
                      detailed_balance=True)


def main() -> None:
    cfg = build_config(delta=0.05)
    sol = stationary_solution(cfg)

    w_eff = effective_rewards(cfg)
    print("effective reward column sums:", w_eff.sum(axis=0))
    print(f"dominant behaviour column: {sol.b_1based}")

    print("\nleading occupation (uniform on the dominant column):")
    print(sol.x0.x)
    print("first-order correction x1 (scaled by delta_int"
          f" = {cfg.delta_int:g}):")
    print(sol.x1)
    print("corrected occupation:")
    print(sol.x_corrected)

    print("\npayoff expansion pieces:")
    print("g0 (constant per column, worth 1/delta_dis each):")
    print(sol.g0)
    print("g1 (level structure within columns):")
    print(sol.g1)
    print("assembled payoff g:")
    print(sol.g)

    # Consistency: at the assembled solution, no occupied state gains from a
    # behaviour switch once the fee is paid.  margin <= 0 certifies that.
    print(f"\nbest switching gain at the solution: {sol.margin:.4f}  (<= 0)")

    # The corrected occupation is a near-fixed-point of the kinetic flow;
    # integrate a while and measure the drift.
    traj = integrate_forward(sol.x_corrected, None, 0.0, 5.0, 0.01, cfg)
    drift = float(np.max(np.abs(traj.x[-1] - sol.x_corrected)))
    print(f"kinetic drift from the corrected point after t=5: {drift:.2e}"
          f"  (second order in delta_int)")

    # Scaling: the payoff gap between columns grows like 1/delta, while the
    # occupation correction shrinks like delta^2 (interaction scale in this
    # regime).  Rerun with a halved delta to see both move.
    print("\n delta   payoff gap (col 1 - col 2)   |x1|*delta_int     margin")
    for d in (0.1, 0.05, 0.025):
        s = stationary_solution(build_config(d))
        gap = s.g[0, 0] - s.g[0, 1]
        x1n = float(np.max(np.abs(s.x1))) * s.delta_int
        print(f" {d:5.3f}  {gap:27.4f}  {x1n:17.2e}  {s.margin:9.3f}")


if __name__ == "__main__":
    main()

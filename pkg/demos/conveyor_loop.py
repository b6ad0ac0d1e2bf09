"""Conveyor jump loop: solve the stationary QVI, compare with the closed form, replay the policy.

The state moves right at unit speed; reaching x = 2 costs 1 and resets it
to 0.5, so every jump after the first follows 1.5 time units later.
"""

from __future__ import annotations

import numpy as np

from hybridqvi import HybridState, SolveConfig, library, simulate, solve_stationary

model = library.conveyor()

for h in (0.1, 0.05, 0.025):
    V, policy, diag = solve_stationary(model, h, SolveConfig(tol=1e-9))
    x = V.grid.nodes(0)[:, 0]
    err = np.max(np.abs(V.values - library.conveyor_value(x)))
    print(f"h = {h:<6} sweeps = {diag.iterations:<6} sup error = {err:.3e}")

# replay the last policy from the reset point
start = HybridState(0, [0.5])
rec = simulate(model, start, policy)
print(f"V(0.5) = {V.at(start):.5f}  closed form = {library.conveyor_value(0.5):.5f}")
print(f"simulated cost = {rec.total_cost:.5f} over {len(rec.events)} jumps, first at t = {rec.event_times[0]:.4f}")

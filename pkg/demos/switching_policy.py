"""Controlled and autonomous jumps together: solve, inspect the policy, simulate a few starts."""

from __future__ import annotations

import numpy as np

from hybridqvi import HybridState, library, simulate, solve_stationary, validate_model

model = library.switching()
print(validate_model(model).summary())

V, policy, diag = solve_stationary(model, 0.02)
print(f"\nconverged in {diag.iterations} sweeps, residual {diag.residual}")

for x0 in (-2.0, -0.2, 0.0, 0.4, 2.0):
    st = HybridState(0, [x0])
    rec = simulate(model, st, policy)
    kinds = [e.kind[0] for e in rec.events[:6]]
    print(f"x0 = {x0:5.2f}  V = {V.at(st):.4f}  cost = {rec.total_cost:.4f}  first jumps {''.join(kinds)}")

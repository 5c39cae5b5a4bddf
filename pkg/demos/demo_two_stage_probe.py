"""Dynamics that two flows produce and one flow cannot.

The two-stage map (squeeze toward a line, then half-turn, both clipped to
a disc) fixes the disc center, maps the vertical center line to itself
with period 2, and contracts transverse offsets by e^-2 per double
application. An isolated-on-a-line period-2 point with transverse
contraction is exactly the structure a single time-1 flow cannot carry,
and the fitting experiment below shows the practical residual gap at a
fixed optimization budget (an illustration, not a proof).
"""

import numpy as np

from incflow import build_counterexample, contraction_audit, detect_periodic
from incflow.probe import fit_gap_experiment

gen = build_counterexample()
print("two-stage map: clipped squeeze, then clipped half-turn rotation")

q = np.array([0.5, 0.5625])
f1 = gen.apply(q)
f2 = gen.apply(f1)
print(f"  F({q})  = {f1}")
print(f"  F^2(q) - q = {np.abs(f2 - q).max():.2e}  (period 2 on the line)")

records = detect_periodic(gen, grid_n=17, k_max=2)
periodic = [r for r in records if r.classification == "periodic"]
dx = max(abs(r.start[0] - 0.5) for r in periodic)
print(f"\nperiodic scan: {len(periodic)} period-2 records, max |x - 1/2| = {dx:.1e}")

audit = contraction_audit(gen, q, radius=0.01)
print(f"transverse contraction per double application: max ratio "
      f"{audit['max_ratio']:.3f} (pure transverse would be e^-2 = {np.exp(-2):.3f})")

print("\nfitting a single flow to the composite vs to an in-class target")
print("(budget 6000 evaluations for a quick look; the acceptance run uses 20000):")
res = fit_gap_experiment(seed=0, budget=6000)
print(f"  self-recovery residual: {res['self_recovery_residual']:.2e} "
      f"(init {res['self_recovery_init']})")
print(f"  composite residual:     {res['composite_residual']:.2e} "
      f"(init {res['composite_init']})")
print(f"  gap ratio:              {res['gap_ratio']:.1f}x")

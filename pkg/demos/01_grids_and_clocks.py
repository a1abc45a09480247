"""Decreasing-step grids and the integer clock that tames them.

A decreasing-step grid trades early resolution for unbounded horizon: the
harmonic law tau_k = 1/k reaches t ~ log n, the power law tau_k = k^-theta
reaches t ~ n^(1-theta).  Blocked statistics need near-unit spacing, which
the quasi-uniform subsequence recovers by picking the last grid index at or
below each integer time.
"""

import numpy as np

from lilstep import StepSpec, build_grid, quasi_uniform_index

harmonic = StepSpec(kind="harmonic")
power = StepSpec(kind="power", theta=0.75)

for name, spec, n in (("harmonic", harmonic, 100_000), ("power 0.75", power, 100_000)):
    grid = build_grid(spec, n)
    print(f"{name:>11}: n = {n}, horizon t_n = {grid.times[-1]:.2f}, "
          f"tau_1 = {grid.steps[1]:.3g}, tau_n = {grid.steps[-1]:.3g}")

grid = build_grid(harmonic, 100_000)
qindex = quasi_uniform_index(grid, k_max=10)
print("\ninteger clock on the harmonic grid:")
print("  k     n_(k)   t_{n_(k)}   block width (steps)")
widths = np.diff(qindex.n_of)
for k in range(1, 11):
    print(f"  {k:2d}  {qindex.n_of[k]:8d}   {qindex.tilde_times[k]:9.4f}   "
          f"{widths[k - 1]:10d}")

# each block covers one unit of time but exponentially many steps: the
# clock is what lets block estimators see i.i.d.-like unit increments
print("\nblock step counts grow ~ e^1 per block while block times stay ~ 1")

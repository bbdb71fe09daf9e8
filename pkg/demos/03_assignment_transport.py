"""Optimal assignment under Lagrangian connection costs.

The many-particle minimization reduces to a linear assignment problem once
the pairwise connection costs are known.  This script builds cost matrices
(closed form and per-pair boundary solves), checks the exact solver against
brute-force enumeration, and shows the monotone matching that quadratic costs
produce in one dimension.
"""

import numpy as np

from otmesh import (
    PointCloud,
    TimeGrid,
    brute_force_assignment,
    cost_matrix,
    free_particle,
    harmonic_oscillator,
    solve_assignment,
)

rng = np.random.default_rng(0)

print("=== cost matrix, free particle ===")
grid = TimeGrid.uniform(0.0, 1.0, 8)
clouds = PointCloud([0.0, 1.0])
costs = cost_matrix(free_particle(), clouds, clouds, grid, cost_kind="bvp")
print(costs)

print()
print("=== exact solver vs brute force on random instances ===")
worst = 0.0
for N in range(2, 8):
    for _ in range(50):
        matrix = rng.uniform(-1.0, 1.0, (N, N))
        fast = solve_assignment(matrix)
        slow = brute_force_assignment(matrix)
        worst = max(worst, abs(fast.total_cost - slow.total_cost))
print(f"largest disagreement in total cost over 300 instances: {worst:.2e}")

print()
print("=== negative costs are fine: the harmonic cost dips below zero ===")
model = harmonic_oscillator()
grid = TimeGrid.uniform(0.0, np.pi / 2, 200)
source = PointCloud([0.0, 1.0, -0.5])
target = PointCloud([1.0, 0.5, 0.25])
costs = cost_matrix(model, source, target, grid, cost_kind="closed_form")
plan = solve_assignment(costs)
print(f"entries range [{costs.min():+.4f}, {costs.max():+.4f}]")
print(f"optimal matching {plan.perm.tolist()}, average cost {plan.average_cost:+.6f}")

print()
print("=== one dimension: sorted-to-sorted matching is optimal ===")
x = np.sort(rng.uniform(-1.0, 1.0, 6))
y = np.sort(rng.uniform(2.0, 4.0, 6))
costs = cost_matrix(
    free_particle(), PointCloud(x), PointCloud(y), TimeGrid.uniform(0, 1, 2), "closed_form"
)
plan = solve_assignment(costs)
print(f"matching of sorted clouds: {plan.perm.tolist()}  (identity = monotone)")

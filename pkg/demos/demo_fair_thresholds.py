"""
Equalized odds for a threshold classifier
=========================================

Two groups share one score feature but have different base rates. We pick a
randomized threshold rule that minimizes total error while keeping the
smoothed equalized-odds gap under a target.
"""
import numpy as np

from pcgoo import FiniteSet
from pcgoo.objectives import (
    EqualizedOddsLoss,
    classification_error_objective,
    equalized_odds_constraint,
    threshold_grid,
)
from pcgoo.oracles import ExactOracle
from pcgoo.solvers import SolverConfig, brute_force_cgoo, solve_iterative_lopt
from pcgoo.synthetic import threshold_data

# %%
# Data and candidates
# -------------------
# 2000 rows, positives rarer in group 1. The loss vector stacks per-group
# false-positive, true-positive and false-negative rates.
data = threshold_data(seed=0, n=2000, base_rates=(0.3, 0.6), shift=0.3)
loss = EqualizedOddsLoss(2)
cands = FiniteSet(threshold_grid(-1.5, 1.5, 61))

f = classification_error_objective(2)
g = equalized_odds_constraint(alpha=0.1, eta=50.0, n_groups=2)

# %%
# Best single threshold
# ---------------------
bf = brute_force_cgoo(cands, loss, f, g, data)
print("feasible single threshold:", bf.feasible)
if bf.feasible:
    print(f"  t = {bf.decision.threshold:+.3f}  f = {bf.f_star:.4f}")

# %%
# Randomized solution
# -------------------
# The iterative solver returns a mixture of thresholds. Mixing lets it trade
# error against the gap more finely than any single threshold.
res = solve_iterative_lopt(ExactOracle(cands, loss, data), f, g, SolverConfig(alpha=0.1, T=300), loss, data)
print(f"mixture: f = {res.f_value:.4f}  g = {res.g_value:+.4f}  members = {len(set(res.decision.indices))}")
for i, w in zip(*np.unique(res.decision.indices, return_counts=True)):
    print(f"  t = {cands[i].threshold:+.3f}  weight {w / res.iterations:.3f}")

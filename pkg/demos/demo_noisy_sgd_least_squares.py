"""
Private least squares per group
===============================

A linear predictor in the unit ball is fit so that the squared error of the
worse group stays small. The linear subproblems go to noisy projected SGD,
whose noise level comes from the per-call privacy budget.
"""
import numpy as np

from pcgoo import Dataset, ParamBall, PrivacyBudget, linear_objective
from pcgoo.objectives import WeightedLSLoss
from pcgoo.oracles import NoisySGDOracle
from pcgoo.solvers import SolverConfig, solve_iterative_lopt
from pcgoo.synthetic import ball_uniform

rng = np.random.default_rng(7)
x = ball_uniform(7, 400, 2)
groups = (x[:, 1] > 0).astype(int) + 1
y = (x @ np.array([0.8, 0.3]) + 0.1 * rng.normal(size=400) > 0).astype(int)
data = Dataset(x, groups, y)
loss = WeightedLSLoss(2)

f = linear_objective([0.5, 0.5], name="mean_group_loss")
g = linear_objective([1.0, -1.0], -0.02, name="group_gap")

# %%
# Budget split and noise
# ----------------------
budget = PrivacyBudget(2.0, 1e-5)
oracle = NoisySGDOracle(ParamBall(2), loss, data, steps=200)
res = solve_iterative_lopt(oracle, f, g, SolverConfig(alpha=0.2, T=20, privacy=budget), loss, data)
print("per call:", res.resolved["eps_prime"], res.resolved["delta_prime"])
print("composed:", res.budget_consumed)
print(f"f = {res.f_value:.4f}  g = {res.g_value:+.4f}")

# %%
# Without noise
# -------------
quiet = NoisySGDOracle(ParamBall(2), loss, data, sigma=0.0, steps=2000)
res0 = solve_iterative_lopt(quiet, f, g, SolverConfig(alpha=0.2, T=20), loss, data)
print(f"noise-free f = {res0.f_value:.4f}  g = {res0.g_value:+.4f}")

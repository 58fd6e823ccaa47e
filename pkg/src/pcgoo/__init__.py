"""Differentially private constrained group-objective optimization."""
from .core import (
    ComposedObjective,
    Dataset,
    FiniteSet,
    GroupLossFunction,
    ItemizedGroupLoss,
    ParamBall,
    RandomizedDecision,
    Row,
    ScalarObjective,
    average_itemized_loss,
    compose,
    linear_objective,
    loss_sensitivity_bound,
    loss_vector,
    penalty_weight,
    quadratic_objective,
    verify_composition_guarantee,
)
from .privacy import (
    AuditReport,
    FinitePmf,
    PerCallBudget,
    PrivacyBudget,
    advanced_composition,
    audit_finite_mechanism,
    exponential_mechanism_pmf,
    exponential_mechanism_sample,
    gaussian_perturb,
    max_divergence,
    renyi_divergence,
    smoothed_max_divergence,
    split_budget,
)
from .oracles import (
    ExactOracle,
    ExpMechOracle,
    NoisySGDOracle,
    OracleSpec,
    group_embedding,
    lopt_exact,
    lopt_expmech,
    lopt_noisy_sgd,
    wrap_divergence_oracle,
)
from .solvers import (
    SolverConfig,
    SolveResult,
    brute_force_cgoo,
    evaluate,
    resolve_iteration_budget,
    resolve_oracle_tolerance,
    solve_exponential_sampling,
    solve_frank_wolfe,
    solve_iterative_lopt,
)

__version__ = "0.1.0"

"""SER vs ESR optimisation in stochastic multiobjective MDPs: exact oracles,
value-based learners and reproduction tooling."""

from .environments import BryceParams, bryce_branch, load_environment, save_environment, space_traders
from .learners import LinearQLearner, QTable, TLOQLearner, extract_greedy_policy, train
from .momdp import TERMINAL, DeterministicPolicy, Outcome, TabularMOMDP, expected_return_exact, validate
from .oracle import ccs_2objective, enumerate_policies, esr_optimal, pareto_dp, pareto_filter, ser_optimal
from .scalarisation import NEG_INFINITY, LinearWeights, ThresholdUtility, TLOParams

__version__ = "0.1.0"

__all__ = [
    "BryceParams", "bryce_branch", "load_environment", "save_environment", "space_traders",
    "LinearQLearner", "QTable", "TLOQLearner", "extract_greedy_policy", "train",
    "TERMINAL", "DeterministicPolicy", "Outcome", "TabularMOMDP", "expected_return_exact", "validate",
    "ccs_2objective", "enumerate_policies", "esr_optimal", "pareto_dp", "pareto_filter", "ser_optimal",
    "NEG_INFINITY", "LinearWeights", "ThresholdUtility", "TLOParams",
]

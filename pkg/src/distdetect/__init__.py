"""Distributed detection: consensus protocols combined with Bayesian updates."""

from .core import (
    Belief,
    BeliefError,
    DegenerateSupportError,
    SignalModel,
    StateSpace,
    bayes_update,
    geometric_mix,
    kl_divergence,
    linear_mix,
    posterior_objective,
    solve_posterior_bruteforce,
)
from .engine import (
    RoundState,
    TrialConfig,
    TrialResult,
    run_experiment,
    run_round,
    run_trial,
)
from .network import Network, check_conditions, make_ring_lattice
from .rules import NeighborhoodView, RuleKind
from .scenarios import ScenarioPreset, build_scenario

__version__ = "0.1.0"

"""
The six consensus-plus-Bayes update rules as one-round, per-agent operators.

Each operator sees only an agent's closed neighborhood (itself plus its
in-neighbors). Rules that aggregate posteriors (BLoA, BLiA) expect the
posteriors to be computed already; the engine is responsible for doing that
for every agent before any aggregation happens.

Two extra forms are kept alongside the rules proper: the exp-of-weighted-logs
form of BLoA and the log-linear rule with a free observation weight, which
reduces to BLoAD when that weight equals the self-weight.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    BeliefError,
    DegenerateSupportError,
    DimensionError,
    SignalModel,
    _log_pool,
    as_belief,
    as_weights,
    bayes_update,
    geometric_mix,
    linear_mix,
)


class RuleKind(str, enum.Enum):
    LoAB = "LoAB"    # geometric aggregation of priors, then Bayes
    LiAB = "LiAB"    # linear aggregation of priors, then Bayes
    BLoA = "BLoA"    # Bayes, then geometric aggregation of posteriors
    BLiA = "BLiA"    # Bayes, then linear aggregation of posteriors
    BLiAD = "BLiAD"  # own posterior linearly mixed with neighbors' priors
    BLoAD = "BLoAD"  # own posterior geometrically mixed with neighbors' priors

    @classmethod
    def parse(cls, name: str) -> "RuleKind":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower()
        for kind in cls:
            if kind.value.lower() == key:
                return kind
        raise ValueError(f"unknown rule {name!r}; choose from {[k.value for k in cls]}")

    @property
    def geometric(self) -> bool:
        return self in (RuleKind.LoAB, RuleKind.BLoA, RuleKind.BLoAD)

    @property
    def aggregates_posteriors(self) -> bool:
        return self in (RuleKind.BLoA, RuleKind.BLiA)

    @property
    def delayed(self) -> bool:
        return self in (RuleKind.BLiAD, RuleKind.BLoAD)


@dataclass(frozen=True, eq=False)
class NeighborhoodView:
    """
    What one agent sees in a round.

    ``priors[j]`` and ``weights[j]`` refer to the j-th member of the closed
    neighborhood; ``self_index`` locates the agent itself. ``posteriors`` are
    the members' same-round Bayes posteriors, needed only by BLoA and BLiA.
    """

    self_index: int
    priors: tuple
    weights: np.ndarray
    posteriors: Optional[tuple] = None

    def __post_init__(self):
        priors = tuple(as_belief(p) for p in self.priors)
        if not priors:
            raise BeliefError("a neighborhood has at least the agent itself")
        m = priors[0].shape[0]
        if any(p.shape[0] != m for p in priors):
            raise DimensionError("neighborhood beliefs have different dimensions")
        object.__setattr__(self, "priors", priors)
        object.__setattr__(self, "weights", as_weights(self.weights, len(priors)))
        if not 0 <= self.self_index < len(priors):
            raise BeliefError(f"self_index {self.self_index} outside a view of size {len(priors)}")
        if self.posteriors is not None:
            posts = tuple(as_belief(p, m) for p in self.posteriors)
            if len(posts) != len(priors):
                raise DimensionError("posteriors and priors differ in length")
            object.__setattr__(self, "posteriors", posts)

    @property
    def self_weight(self) -> float:
        return float(self.weights[self.self_index])

    @property
    def own_prior(self) -> np.ndarray:
        return self.priors[self.self_index]

    def require_posteriors(self) -> tuple:
        if self.posteriors is None:
            raise BeliefError("this rule aggregates posteriors but the view carries none")
        return self.posteriors

    def others(self):
        """(weight, prior) for every member other than the agent itself."""
        return [(self.weights[j], p) for j, p in enumerate(self.priors) if j != self.self_index]


def step_loab(view: NeighborhoodView, signal, model: SignalModel) -> np.ndarray:
    return bayes_update(geometric_mix(view.priors, view.weights), signal, model)


def step_liab(view: NeighborhoodView, signal, model: SignalModel) -> np.ndarray:
    return bayes_update(linear_mix(view.priors, view.weights), signal, model)


def step_bloa(view: NeighborhoodView) -> np.ndarray:
    return geometric_mix(view.require_posteriors(), view.weights)


def step_bloa_exp_log_form(view: NeighborhoodView) -> np.ndarray:
    """BLoA written as a softmax of weighted log-posteriors.

    Independent of :func:`geometric_mix`; kept as a differential-testing
    partner for :func:`step_bloa`.
    """
    posts = np.vstack(view.require_posteriors())
    with np.errstate(divide="ignore"):
        logs = np.log(posts)
    w = view.weights
    expo = np.zeros(posts.shape[1])
    for j in range(posts.shape[0]):
        if w[j] > 0:
            expo = expo + w[j] * logs[j]
    if np.all(np.isneginf(expo)):
        raise DegenerateSupportError("posteriors with positive weight have disjoint support")
    num = np.exp(expo - expo.max())
    return num / num.sum()


def step_blia(view: NeighborhoodView) -> np.ndarray:
    return linear_mix(view.require_posteriors(), view.weights)


def step_bliad(view: NeighborhoodView, signal, model: SignalModel) -> np.ndarray:
    """Own fresh posterior plus neighbors' previous-round priors, linearly."""
    a_ii = view.self_weight
    out = a_ii * bayes_update(view.own_prior, signal, model) if a_ii > 0 else np.zeros(model.m)
    for a_ij, prior in view.others():
        out = out + a_ij * prior
    return out / out.sum()


def step_bload(view: NeighborhoodView, signal, model: SignalModel) -> np.ndarray:
    """Own fresh posterior plus neighbors' previous-round priors, geometrically."""
    a_ii = view.self_weight
    members, weights = [], []
    if a_ii > 0:
        members.append(bayes_update(view.own_prior, signal, model))
        weights.append(a_ii)
    for a_ij, prior in view.others():
        if a_ij > 0:
            members.append(prior)
            weights.append(a_ij)
    return _log_pool(np.vstack(members), np.asarray(weights))


def step_log_linear(view: NeighborhoodView, signal, model: SignalModel, lam: float | None = None) -> np.ndarray:
    """
    Log-linear update ``log mu' = lam * log l(signal|.) + sum_j a_ij log mu_j + c``.

    Parameters
    ----------
    lam : float, optional
        Weight on the private observation; must be positive. Defaults to the
        agent's self-weight, which makes the rule coincide with BLoAD.
    """
    if lam is None:
        lam = view.self_weight
    if not lam > 0:
        raise BeliefError(f"observation weight must be positive, got {lam}")
    stack = np.vstack(view.priors)
    used = view.weights > 0
    return _log_pool(stack[used], view.weights[used], extra_log=lam * np.log(model.column(signal)))


def step(rule: RuleKind, view: NeighborhoodView, signal, model: SignalModel) -> np.ndarray:
    """Dispatch one round of ``rule`` for a single agent."""
    rule = RuleKind.parse(rule)
    if rule is RuleKind.LoAB:
        return step_loab(view, signal, model)
    if rule is RuleKind.LiAB:
        return step_liab(view, signal, model)
    if rule is RuleKind.BLoA:
        return step_bloa(view)
    if rule is RuleKind.BLiA:
        return step_blia(view)
    if rule is RuleKind.BLiAD:
        return step_bliad(view, signal, model)
    return step_bload(view, signal, model)

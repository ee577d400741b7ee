"""
Networks of agents and checkers for the convergence conditions.

Weights follow the row convention: ``weights[i, j]`` is the weight agent ``i``
puts on agent ``j``'s belief, so ``j`` is an in-neighbor of ``i`` whenever
``weights[i, j] > 0`` and every row sums to one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional, Sequence, Union

import numpy as np
from scipy.sparse.csgraph import connected_components

from .core import (
    INPUT_TOL,
    BeliefError,
    SignalModel,
    StateSpace,
    as_belief,
    kl_divergence,
)
from .rules import RuleKind

DEFAULT_EQ_TOL = 1e-12


class NetworkError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Network:
    """Directed weighted graph with one signal model per agent."""

    weights: np.ndarray
    models: tuple
    states: StateSpace

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise NetworkError(f"weights must be a square matrix, got shape {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w < 0) or np.any(w > 1):
            raise NetworkError("weights must lie in [0, 1]")
        rows = w.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > INPUT_TOL):
            raise NetworkError(f"weight rows must sum to 1, got {rows}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

        models = tuple(self.models)
        if len(models) != w.shape[0]:
            raise NetworkError(f"{w.shape[0]} agents but {len(models)} signal models")
        alphabet = models[0].alphabet
        for i, mdl in enumerate(models):
            if mdl.m != self.states.m:
                raise NetworkError(f"agent {i}: model has {mdl.m} states, expected {self.states.m}")
            if mdl.alphabet != alphabet:
                raise NetworkError(f"agent {i}: signal alphabet differs from agent 0")
        object.__setattr__(self, "models", models)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def m(self) -> int:
        return self.states.m

    @property
    def alphabet(self) -> tuple:
        return self.models[0].alphabet

    @property
    def true_index(self) -> int:
        return self.states.true_index

    @property
    def self_weights(self) -> np.ndarray:
        return np.diag(self.weights).copy()

    @property
    def edges(self) -> set:
        """Pairs ``(j, i)``: agent ``i`` receives from in-neighbor ``j != i``."""
        rows, cols = np.nonzero(self.weights)
        return {(int(j), int(i)) for i, j in zip(rows, cols) if i != j}

    def in_neighbors(self, i: int) -> list:
        return [int(j) for j in np.flatnonzero(self.weights[i]) if j != i]

    def closed_neighborhood(self, i: int) -> list:
        """Agent ``i`` followed by its in-neighbors in index order."""
        return [i] + self.in_neighbors(i)

    def with_weights(self, weights) -> "Network":
        return Network(weights, self.models, self.states)

    def likelihood_tensor(self) -> np.ndarray:
        """Array of shape (n, signals, states) holding every agent's table."""
        return np.stack([mdl.likelihood.T for mdl in self.models])


GraphLike = Union[Network, np.ndarray]


def _pattern(graph: GraphLike) -> np.ndarray:
    w = graph.weights if isinstance(graph, Network) else np.asarray(graph, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise NetworkError(f"expected a square matrix, got shape {w.shape}")
    return w > 0


# ---------------------------------------------------------------------------
# Topology
# ---------------------------------------------------------------------------


def make_ring_lattice(n: int, k: int) -> np.ndarray:
    """
    Uniform weights of a ring where each agent listens to its ``k`` closest agents.

    ``k`` counts the agent itself plus ``(k - 1) / 2`` neighbors on each side;
    all edges are bidirected and every weight in a closed neighborhood is 1/k.
    """
    if n < 1:
        raise NetworkError(f"need at least one agent, got n={n}")
    if k % 2 == 0 or not 1 <= k <= n:
        raise NetworkError(f"k must be odd with 1 <= k <= n, got k={k}, n={n}")
    half = (k - 1) // 2
    w = np.zeros((n, n))
    for i in range(n):
        for d in range(-half, half + 1):
            w[i, (i + d) % n] = 1.0 / k
    return w


def is_strongly_connected(graph: GraphLike) -> bool:
    pattern = _pattern(graph)
    if pattern.shape[0] == 1:
        return True
    ncomp, _ = connected_components(pattern.astype(np.int8), directed=True, connection="strong")
    return ncomp == 1


def is_b_strongly_connected(graphs: Sequence[GraphLike], B: int) -> bool:
    """True iff the edge union of every B consecutive graphs is strongly connected."""
    if len(graphs) == 0:
        raise NetworkError("need a nonempty graph sequence")
    if B < 1:
        raise NetworkError(f"B must be >= 1, got {B}")
    if B > len(graphs):
        raise NetworkError(f"B={B} exceeds the sequence length {len(graphs)}")
    patterns = [_pattern(g) for g in graphs]
    n = patterns[0].shape[0]
    if any(p.shape[0] != n for p in patterns):
        raise NetworkError("graphs in a sequence must have the same number of agents")
    for start in range(len(patterns) - B + 1):
        union = np.logical_or.reduce(patterns[start:start + B])
        if not is_strongly_connected(union):
            return False
    return True


def _bool_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (a.astype(np.int64) @ b.astype(np.int64)) > 0


def is_primitive(weights) -> bool:
    """Boolean power ``A^((n-1)^2 + 1)`` is entrywise positive (Wielandt bound)."""
    a = np.asarray(weights, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NetworkError(f"expected a square matrix, got shape {a.shape}")
    if np.any(a < 0):
        raise NetworkError("primitivity is defined for nonnegative matrices")
    base = a > 0
    exponent = (a.shape[0] - 1) ** 2 + 1
    result = None
    while exponent:
        if exponent & 1:
            result = base if result is None else _bool_matmul(result, base)
        exponent >>= 1
        if exponent:
            base = _bool_matmul(base, base)
    return bool(result.all())


# ---------------------------------------------------------------------------
# Identifiability
# ---------------------------------------------------------------------------


def observationally_equivalent_set(model: SignalModel, true_index: int, tol: float = DEFAULT_EQ_TOL) -> frozenset:
    """States whose likelihood row matches the true state's row within ``tol``."""
    lik = model.likelihood
    diff = np.abs(lik - lik[true_index]).max(axis=1)
    return frozenset(int(k) for k in np.flatnonzero(diff <= tol)) | {true_index}


def is_globally_identifiable(net: Network, tol: float = DEFAULT_EQ_TOL) -> bool:
    common = frozenset(range(net.m))
    for mdl in net.models:
        common &= observationally_equivalent_set(mdl, net.true_index, tol)
    return common == {net.true_index}


def closest_states(model: SignalModel, true_likelihoods, tol: float = DEFAULT_EQ_TOL) -> frozenset:
    """
    States whose signal distribution is KL-closest to the observed one.

    ``true_likelihoods`` is the distribution over the alphabet that actually
    generates the agent's signals; it need not match any row of the model.
    """
    target = as_belief(true_likelihoods, len(model.alphabet))
    divs = np.array([kl_divergence(target, row) for row in model.likelihood])
    best = divs.min()
    return frozenset(int(k) for k in np.flatnonzero(divs <= best + tol))


def best_explaining_states(net: Network, true_likelihoods=None, tol: float = DEFAULT_EQ_TOL) -> frozenset:
    """Intersection over agents of :func:`closest_states`.

    By default each agent's own true-state row is taken as the generating
    distribution.
    """
    out = frozenset(range(net.m))
    for i, mdl in enumerate(net.models):
        target = mdl.likelihood[net.true_index] if true_likelihoods is None else true_likelihoods[i]
        out &= closest_states(mdl, target, tol)
    return out


# ---------------------------------------------------------------------------
# Conditions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Clause:
    number: int
    description: str
    holds: bool
    diagnostic: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ConditionReport:
    condition_id: int
    clauses: tuple
    informational: bool = False

    @property
    def overall(self) -> bool:
        return all(c.holds for c in self.clauses)

    def clause(self, number: int) -> Clause:
        for c in self.clauses:
            if c.number == number:
                return c
        raise KeyError(number)

    @property
    def failed(self) -> list:
        return [c.number for c in self.clauses if not c.holds]


CONDITION_FOR_RULE = {
    RuleKind.LoAB: 1,
    RuleKind.BLoA: 2,
    RuleKind.BLiA: 3,
    RuleKind.BLiAD: 4,
    RuleKind.BLoAD: 5,
}


def _clause_strong(net: Network, number: int) -> Clause:
    return Clause(number, "network is strongly connected", is_strongly_connected(net))


def _clause_identifiable(net: Network, number: int, tol: float) -> Clause:
    sets = [sorted(observationally_equivalent_set(m, net.true_index, tol)) for m in net.models]
    common = set(range(net.m))
    for s in sets:
        common &= set(s)
    return Clause(number, "true state is globally identifiable",
                  common == {net.true_index}, {"intersection": sorted(common)})


def _clause_self_weights(net: Network, number: int) -> Clause:
    d = net.self_weights
    bad = [int(i) for i in np.flatnonzero(d <= 0)]
    return Clause(number, "every agent has a positive self-weight", not bad,
                  {"zero_self_weight_agents": bad, "min_self_weight": float(d.min())})


def _clause_all_on_true(beliefs: np.ndarray, net: Network, number: int) -> Clause:
    bad = [int(i) for i in np.flatnonzero(beliefs[:, net.true_index] <= 0)]
    return Clause(number, "every agent has positive initial belief on the true state",
                  not bad, {"agents_without_mass": bad})


def _clause_some_on_true(beliefs: np.ndarray, net: Network, number: int) -> Clause:
    good = [int(i) for i in np.flatnonzero(beliefs[:, net.true_index] > 0)]
    return Clause(number, "some agent has positive initial belief on the true state",
                  bool(good), {"agents_with_mass": good})


def _clause_all_positive(beliefs: np.ndarray, number: int) -> Clause:
    bad = sorted({int(i) for i in np.argwhere(beliefs <= 0)[:, 0]})
    return Clause(number, "every agent has positive initial belief on every state",
                  not bad, {"agents_with_zero_entries": bad})


def _clause_pairwise(net: Network, number: int) -> Clause:
    offending = []
    for p in range(net.m):
        for q in range(net.m):
            if p == q:
                continue
            if not any(kl_divergence(mdl.likelihood[p], mdl.likelihood[q]) > 0 for mdl in net.models):
                offending.append((p, q))
    return Clause(number, "every pair of states is distinguished by some agent",
                  not offending, {"indistinguishable_pairs": offending})


def prevailing_signals(net: Network, tol: float = DEFAULT_EQ_TOL) -> list:
    """
    Best prevailing signal per agent.

    Returns a list of ``(signal_index, margin)``: the signal maximizing
    ``min over non-equivalent states of l(s|true) - l(s|state)``. When every
    state is equivalent the margin is reported as +inf.
    """
    out = []
    for mdl in net.models:
        equiv = observationally_equivalent_set(mdl, net.true_index, tol)
        others = [k for k in range(net.m) if k not in equiv]
        lik = mdl.likelihood
        if not others:
            out.append((0, float("inf")))
            continue
        margins = (lik[net.true_index][None, :] - lik[others]).min(axis=0)
        s = int(np.argmax(margins))
        out.append((s, float(margins[s])))
    return out


def _clause_prevailing(net: Network, number: int, tol: float) -> Clause:
    found = prevailing_signals(net, tol)
    bad = [i for i, (_, margin) in enumerate(found) if not margin > 0]
    margins = [margin for _, margin in found]
    return Clause(number, "every agent has a prevailing signal", not bad, {
        "signals": [net.alphabet[s] for s, _ in found],
        "margins": margins,
        "delta": min(margins),
        "agents_without": bad,
    })


def check_condition(net: Network, condition_id: int, initial_beliefs,
                    graph_sequence: Optional[Sequence[GraphLike]] = None,
                    B: Optional[int] = None, tol: float = DEFAULT_EQ_TOL,
                    informational: bool = False) -> ConditionReport:
    """Evaluate one condition clause by clause."""
    beliefs = np.vstack([as_belief(b, net.m) for b in initial_beliefs])
    if beliefs.shape[0] != net.n:
        raise BeliefError(f"{net.n} agents but {beliefs.shape[0]} initial beliefs")

    if condition_id == 1:
        if graph_sequence is None:
            if B not in (None, 1):
                raise NetworkError("a window B > 1 needs an explicit graph sequence")
            graph_sequence, B = [net], 1
        elif B is None:
            raise NetworkError("a graph sequence needs a window length B")
        pos = np.concatenate([_weights_of(g)[_weights_of(g) > 0] for g in graph_sequence])
        eta = float(pos.min()) if pos.size else 0.0
        clauses = (
            Clause(1, f"network is {B}-strongly connected",
                   is_b_strongly_connected(graph_sequence, B), {"B": B, "graphs": len(graph_sequence)}),
            Clause(2, "positive weights are bounded below", eta > 0, {"eta": eta}),
            _clause_self_weights(net, 3),
            _clause_all_on_true(beliefs, net, 4),
            _clause_identifiable(net, 5, tol),
        )
    elif condition_id == 2:
        clauses = (_clause_strong(net, 1), _clause_all_positive(beliefs, 2), _clause_pairwise(net, 3))
    elif condition_id == 3:
        clauses = (
            Clause(1, "weight matrix is primitive", is_primitive(net.weights)),
            _clause_some_on_true(beliefs, net, 2),
            _clause_prevailing(net, 3, tol),
        )
    elif condition_id == 4:
        clauses = (
            _clause_strong(net, 1),
            _clause_self_weights(net, 2),
            _clause_some_on_true(beliefs, net, 3),
            _clause_identifiable(net, 4, tol),
        )
    elif condition_id == 5:
        clauses = (_clause_strong(net, 1), _clause_all_positive(beliefs, 2), _clause_identifiable(net, 3, tol))
    else:
        raise ValueError(f"no condition {condition_id}; conditions are numbered 1 to 5")
    return ConditionReport(condition_id, clauses, informational)


def _weights_of(g: GraphLike) -> np.ndarray:
    return g.weights if isinstance(g, Network) else np.asarray(g, dtype=float)


def check_conditions(net: Network, rule, initial_beliefs,
                     graph_sequence: Optional[Sequence[GraphLike]] = None,
                     B: Optional[int] = None, tol: float = DEFAULT_EQ_TOL) -> list:
    """
    Reports for the sufficient condition attached to ``rule``.

    LiAB has no published condition; for it every condition is evaluated and
    returned with ``informational=True``.
    """
    rule = RuleKind.parse(rule)
    cid = CONDITION_FOR_RULE.get(rule)
    if cid is None:
        return [check_condition(net, c, initial_beliefs, graph_sequence, B, tol, informational=True)
                for c in range(1, 6)]
    return [check_condition(net, cid, initial_beliefs, graph_sequence, B, tol)]


def condition_warnings(reports: Sequence[ConditionReport]) -> list:
    """Human-readable lines for every failed clause of a non-informational report."""
    lines = []
    for rep in reports:
        if rep.informational:
            continue
        for c in rep.clauses:
            if not c.holds:
                lines.append(f"condition {rep.condition_id} clause ({c.number}) fails: {c.description} {c.diagnostic}")
    return lines


def describe(report: ConditionReport) -> dict[str, Any]:
    return {
        "condition": report.condition_id,
        "overall": report.overall,
        "informational": report.informational,
        "clauses": [{"clause": c.number, "holds": c.holds, "description": c.description,
                     "diagnostic": c.diagnostic} for c in report.clauses],
    }

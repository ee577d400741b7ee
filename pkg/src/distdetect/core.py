"""
Belief-simplex arithmetic.

Bayes updates, KL divergence, the variational form of the posterior, and
weighted arithmetic / geometric mixing of beliefs. Everything here is a pure
function of its inputs; beliefs are plain 1-D float arrays.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

Belief = np.ndarray

INPUT_TOL = 1e-9


class BeliefError(ValueError):
    """Invalid belief, weight vector or signal model."""


class DimensionError(BeliefError):
    pass


class UnknownSignalError(BeliefError):
    pass


class DegenerateSupportError(BeliefError):
    """All mass vanished after an update (disjoint supports or a zero prior)."""


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StateSpace:
    """Ordered candidate states with the index of the true one."""

    labels: tuple
    true_index: int

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 2:
            raise BeliefError("a state space needs at least two states")
        if len(set(labels)) != len(labels):
            raise BeliefError(f"state labels must be unique: {labels}")
        if not 0 <= self.true_index < len(labels):
            raise BeliefError(f"true_index {self.true_index} out of range for {len(labels)} states")

    @property
    def m(self) -> int:
        return len(self.labels)

    @property
    def true_label(self):
        return self.labels[self.true_index]


@dataclass(frozen=True, eq=False)
class SignalModel:
    """
    An agent's likelihood table over (state, signal).

    ``likelihood[k, s]`` is the probability of observing ``alphabet[s]`` if
    state ``k`` were true. Entries must be strictly positive unless
    ``allow_zero`` is set (degenerate rows are handy for sampler tests).
    """

    alphabet: tuple
    likelihood: np.ndarray
    allow_zero: bool = field(default=False)

    def __post_init__(self):
        alphabet = tuple(self.alphabet)
        lik = np.array(self.likelihood, dtype=float)
        object.__setattr__(self, "alphabet", alphabet)
        if len(set(alphabet)) != len(alphabet):
            raise BeliefError(f"signal labels must be unique: {alphabet}")
        if lik.ndim != 2 or lik.shape[1] != len(alphabet):
            raise DimensionError(
                f"likelihood must be (states, {len(alphabet)}), got shape {lik.shape}")
        if not np.all(np.isfinite(lik)):
            raise BeliefError("likelihood entries must be finite")
        if self.allow_zero:
            if np.any(lik < 0):
                raise BeliefError("likelihood entries must be nonnegative")
        elif np.any(lik <= 0):
            raise BeliefError("likelihood entries must be strictly positive")
        row_sums = lik.sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > INPUT_TOL):
            raise BeliefError(f"likelihood rows must sum to 1, got {row_sums}")
        lik.setflags(write=False)
        object.__setattr__(self, "likelihood", lik)

    @property
    def m(self) -> int:
        return self.likelihood.shape[0]

    def signal_index(self, signal: Hashable) -> int:
        try:
            return self.alphabet.index(signal)
        except ValueError:
            raise UnknownSignalError(
                f"signal {signal!r} not in alphabet {self.alphabet}") from None

    def column(self, signal: Hashable) -> np.ndarray:
        """Likelihood of ``signal`` under every state."""
        return self.likelihood[:, self.signal_index(signal)]

    def __eq__(self, other):
        if not isinstance(other, SignalModel):
            return NotImplemented
        return (self.alphabet == other.alphabet
                and np.array_equal(self.likelihood, other.likelihood))

    def __hash__(self):
        return hash((self.alphabet, self.likelihood.tobytes()))


# ---------------------------------------------------------------------------
# Validation helpers
# ---------------------------------------------------------------------------


def as_belief(p, m: int | None = None, tol: float = INPUT_TOL) -> Belief:
    """Validate ``p`` as a probability vector and return it as a float array."""
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 1:
        raise DimensionError(f"belief must be 1-D, got shape {arr.shape}")
    if m is not None and arr.shape[0] != m:
        raise DimensionError(f"belief has {arr.shape[0]} entries, expected {m}")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise BeliefError(f"belief entries must be finite and nonnegative: {arr}")
    total = arr.sum()
    if abs(total - 1.0) > tol:
        raise BeliefError(f"belief must sum to 1 (got {total!r})")
    return arr


def as_weights(weights, count: int, tol: float = INPUT_TOL) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.shape[0] != count:
        raise DimensionError(f"expected {count} weights, got shape {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise BeliefError(f"weights must be nonnegative: {w}")
    if abs(w.sum() - 1.0) > tol:
        raise BeliefError(f"weights must sum to 1 (got {w.sum()!r})")
    return w


def _stack(beliefs: Sequence) -> np.ndarray:
    if len(beliefs) == 0:
        raise BeliefError("need at least one belief to mix")
    rows = [as_belief(b) for b in beliefs]
    m = rows[0].shape[0]
    for r in rows[1:]:
        if r.shape[0] != m:
            raise DimensionError("beliefs to mix have different dimensions")
    return np.vstack(rows)


def _normalize(x: np.ndarray) -> np.ndarray:
    return x / x.sum()


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def bayes_update(prior, signal, model: SignalModel) -> Belief:
    """
    Posterior after observing ``signal``.

    Parameters
    ----------
    prior : array_like
        Belief over the model's states.
    signal : hashable
        A member of ``model.alphabet``.
    model : SignalModel
        The observing agent's likelihood table.

    Returns
    -------
    ndarray
        ``prior * l(signal|.)`` renormalized. Zero-prior states stay zero.

    Raises
    ------
    DegenerateSupportError
        If the prior has no mass where the likelihood is positive.
    """
    p = as_belief(prior, model.m)
    unnorm = p * model.column(signal)
    z = unnorm.sum()
    if not z > 0:
        raise DegenerateSupportError("degenerate prior: no mass where the signal is possible")
    return unnorm / z


def kl_divergence(p, q) -> float:
    """D(p||q) with 0 log 0 = 0; mass of p outside supp(q) gives +inf."""
    p = as_belief(p)
    q = as_belief(q, p.shape[0])
    support = p > 0
    if np.any(q[support] == 0):
        return float("inf")
    val = float(np.sum(p[support] * np.log(p[support] / q[support])))
    # rounding can push identical inputs a hair below zero
    return max(val, 0.0)


def _objective_rows(points: np.ndarray, prior: np.ndarray, loglik: np.ndarray) -> np.ndarray:
    """Variational objective evaluated on each row of ``points``."""
    pos = points > 0
    safe_pts = np.where(pos, points, 1.0)
    safe_prior = np.where(prior > 0, prior, 1.0)
    terms = np.where(pos, points * (np.log(safe_pts) - np.log(safe_prior) - loglik), 0.0)
    vals = terms.sum(axis=1)
    off_support = np.any(pos & (prior == 0), axis=1)
    vals[off_support] = np.inf
    return vals


def posterior_objective(candidate, prior, signal, model: SignalModel) -> float:
    """
    ``D(candidate||prior) - sum_k candidate(k) log l(signal|k)``.

    Bayes' posterior is the minimizer over the simplex. Returns +inf when the
    candidate puts mass where the prior has none.
    """
    prior = as_belief(prior, model.m)
    cand = as_belief(candidate, model.m)
    loglik = np.log(model.column(signal))
    return float(_objective_rows(cand[None, :], prior, loglik)[0])


def simplex_grid(m: int, grid_step: float) -> np.ndarray:
    """All points of the (m-1)-simplex whose coordinates are multiples of ``grid_step``.

    Rows come out in lexicographic order of their integer coordinates.
    """
    steps = round(1.0 / grid_step)
    if steps < 1 or abs(steps * grid_step - 1.0) > 1e-9:
        raise BeliefError(f"1/grid_step must be an integer, got grid_step={grid_step}")
    pts = [c + (steps - sum(c),)
           for c in itertools.product(range(steps + 1), repeat=m - 1)
           if sum(c) <= steps]
    return np.array(pts, dtype=float) / steps


def solve_posterior_bruteforce(prior, signal, model: SignalModel, grid_step: float = 0.01) -> Belief:
    """Minimize the posterior objective by exhaustive search over a simplex grid.

    Meant as a desk-scale oracle for :func:`bayes_update`; ties go to the
    first point in lexicographic order.
    """
    if not 0 < grid_step <= 0.1:
        raise BeliefError(f"grid_step must lie in (0, 0.1], got {grid_step}")
    if model.m > 4:
        raise BeliefError(f"brute-force oracle supports at most 4 states, got {model.m}")
    prior = as_belief(prior, model.m)
    loglik = np.log(model.column(signal))
    grid = simplex_grid(model.m, grid_step)
    vals = _objective_rows(grid, prior, loglik)
    return grid[int(np.argmin(vals))]


def linear_mix(beliefs: Sequence, weights) -> Belief:
    """Weighted arithmetic mean (convex combination) of beliefs."""
    stack = _stack(beliefs)
    w = as_weights(weights, stack.shape[0])
    return _normalize(w @ stack)


def geometric_mix(beliefs: Sequence, weights) -> Belief:
    """
    Normalized weighted geometric mean, ``prod_j b_j(k)^w_j``.

    Computed in log space with max subtraction. A zero entry in any belief
    carrying positive weight zeroes that state in the result.

    Raises
    ------
    DegenerateSupportError
        If no state survives (positively weighted beliefs with disjoint support).
    """
    stack = _stack(beliefs)
    w = as_weights(weights, stack.shape[0])
    used = w > 0
    return _log_pool(stack[used], w[used])


def _log_pool(stack: np.ndarray, w: np.ndarray, extra_log: np.ndarray | None = None) -> Belief:
    zero = np.any(stack == 0, axis=0)
    logs = np.log(np.where(stack > 0, stack, 1.0))
    x = w @ logs
    if extra_log is not None:
        x = x + extra_log
    x[zero] = -np.inf
    if np.all(zero):
        raise DegenerateSupportError("geometric mixing of beliefs with disjoint support")
    x = x - x[~zero].max()
    return _normalize(np.exp(x))

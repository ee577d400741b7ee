"""
Synchronous simulation of belief dynamics.

A round draws one private signal per agent from its true-state likelihood row,
then every agent updates from the same round-``t`` snapshot. Rules that pool
posteriors run in two phases: all Bayes posteriors first, then aggregation.

``run_round`` uses a vectorized kernel over the whole network;
``run_round_per_agent`` composes the per-agent operators in :mod:`.rules` and
exists so the two can be checked against each other.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import rules
from .core import BeliefError, DegenerateSupportError, as_belief, bayes_update
from .network import Network
from .rules import NeighborhoodView, RuleKind

INIT_SCHEMES = ("simplex", "naive")
SIGNAL_BLOCK = 1024


class TrialAborted(RuntimeError):
    def __init__(self, message, rule=None, round_index=None, agent=None):
        super().__init__(message)
        self.rule = rule
        self.round_index = round_index
        self.agent = agent


class AgentDegenerateError(DegenerateSupportError):
    def __init__(self, agent: int, what: str):
        super().__init__(f"agent {agent}: {what}")
        self.agent = agent


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RoundState:
    t: int
    beliefs: np.ndarray  # (n, m), row i is agent i's belief

    def __post_init__(self):
        b = np.array(self.beliefs, dtype=float)
        if b.ndim != 2:
            raise BeliefError(f"round state needs an (agents, states) array, got {b.shape}")
        for row in b:
            as_belief(row)
        b.setflags(write=False)
        object.__setattr__(self, "beliefs", b)


@dataclass(frozen=True)
class TrialConfig:
    """Inputs of one simulation run.

    ``initial_beliefs=None`` draws fresh beliefs from the trial seed using
    ``init_scheme``. ``lambda_overrides`` switches BLoAD to its log-linear
    form with the given per-agent observation weights.
    """

    rule: RuleKind
    network: Network
    seed: int = 0
    threshold: float = 1e-3
    max_rounds: int = 100_000
    initial_beliefs: Optional[np.ndarray] = None
    init_scheme: str = "simplex"
    lambda_overrides: Optional[tuple] = None
    record_trajectory: bool = False

    def __post_init__(self):
        object.__setattr__(self, "rule", RuleKind.parse(self.rule))
        if not 0 < self.threshold < 1:
            raise ValueError(f"threshold must lie in (0, 1), got {self.threshold}")
        if self.max_rounds < 1:
            raise ValueError(f"max_rounds must be >= 1, got {self.max_rounds}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.init_scheme not in INIT_SCHEMES:
            raise ValueError(f"init_scheme must be one of {INIT_SCHEMES}, got {self.init_scheme!r}")
        if self.lambda_overrides is not None:
            lam = tuple(float(x) for x in self.lambda_overrides)
            if len(lam) != self.network.n or not all(x > 0 for x in lam):
                raise ValueError("lambda_overrides needs one positive weight per agent")
            if self.rule is not RuleKind.BLoAD:
                raise ValueError("lambda_overrides only applies to the BLoAD (log-linear) rule")
            object.__setattr__(self, "lambda_overrides", lam)


@dataclass(frozen=True, eq=False)
class TrialResult:
    converged: bool
    rounds: int
    final_beliefs: np.ndarray
    seed: int
    trajectory: Optional[list] = None

    def same_as(self, other: "TrialResult") -> bool:
        """Bit-for-bit equality, trajectories included."""
        if (self.converged, self.rounds, self.seed) != (other.converged, other.rounds, other.seed):
            return False
        if not np.array_equal(self.final_beliefs, other.final_beliefs):
            return False
        if (self.trajectory is None) != (other.trajectory is None):
            return False
        if self.trajectory is None:
            return True
        return len(self.trajectory) == len(other.trajectory) and all(
            np.array_equal(a, b) for a, b in zip(self.trajectory, other.trajectory))


# ---------------------------------------------------------------------------
# Randomness
# ---------------------------------------------------------------------------


def derive_seed(master_seed: int, index: int) -> int:
    """Per-trial 64-bit seed: counter ``index`` split off ``master_seed``."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def trial_generators(seed: int) -> tuple:
    """Independent generators (initial beliefs, signals) for one trial seed."""
    init_ss, signal_ss = np.random.SeedSequence(int(seed)).spawn(2)
    return np.random.default_rng(init_ss), np.random.default_rng(signal_ss)


def sample_initial_beliefs(rng: np.random.Generator, n: int, m: int, scheme: str = "simplex") -> np.ndarray:
    """
    One random belief per agent, shape (n, m).

    ``simplex`` is uniform on the simplex (normalized unit exponentials, i.e.
    flat Dirichlet). ``naive`` normalizes independent uniforms on [0, 1],
    which is not uniform on the simplex; it is kept for sensitivity checks.
    """
    if n < 1 or m < 1:
        raise ValueError(f"need n, m >= 1, got n={n}, m={m}")
    if scheme == "simplex":
        raw = rng.standard_exponential((n, m))
    elif scheme == "naive":
        raw = rng.random((n, m))
    else:
        raise ValueError(f"unknown init scheme {scheme!r}")
    return raw / raw.sum(axis=1, keepdims=True)


def _signal_cdf(net: Network) -> np.ndarray:
    rows = np.stack([mdl.likelihood[net.true_index] for mdl in net.models])
    return np.cumsum(rows, axis=1)


def _inverse_cdf(u: np.ndarray, cdf: np.ndarray) -> np.ndarray:
    # smallest s with u < cdf[s]; the last signal absorbs rounding in the cdf tail
    return (u[..., None] >= cdf[..., :-1]).sum(axis=-1)


def sample_signal_indices(rng: np.random.Generator, net: Network, rounds: int | None = None) -> np.ndarray:
    """Signal indices for one round (shape (n,)) or ``rounds`` rounds (shape (rounds, n)).

    Drawing a block consumes the generator exactly as the same number of
    single-round draws would.
    """
    cdf = _signal_cdf(net)
    if rounds is None:
        return _inverse_cdf(rng.random(net.n), cdf)
    return _inverse_cdf(rng.random((rounds, net.n)), cdf[None, :, :])


def sample_signals(rng: np.random.Generator, net: Network) -> list:
    """One signal label per agent, drawn independently from its true-state row."""
    alphabet = net.alphabet
    return [alphabet[s] for s in sample_signal_indices(rng, net)]


# ---------------------------------------------------------------------------
# Vectorized round kernel
# ---------------------------------------------------------------------------


def _weighted_logs(w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``w @ log(b)`` with 0*log 0 = 0 and (positive weight)*log 0 = -inf."""
    if b.min() > 0:
        return w @ np.log(b)
    zero = b == 0
    out = w @ np.log(np.where(zero, 1.0, b))
    out[((w > 0).astype(float) @ zero.astype(float)) > 0] = -np.inf
    return out


class RoundKernel:
    """
    Precomputed network arrays for fast synchronous rounds.

    :meth:`step` does no validity checks. A row whose update has no surviving
    mass comes out as all-NaN (0/0 in a normalization, or a softmax of an
    all -inf row) and NaN never disappears from later rounds, so callers
    detect degeneracy by looking for NaN. Call it under
    ``np.errstate(divide="ignore", invalid="ignore")``.
    """

    def __init__(self, net: Network, rule, lambdas: Sequence[float] | None = None):
        self.rule = RuleKind.parse(rule)
        self.n = net.n
        self.w = np.array(net.weights)
        self.self_w = np.diag(self.w).copy()
        self.self_diag = np.diag(self.self_w)
        self.off_w = self.w - self.self_diag
        self.self_active = (self.self_w > 0)[:, None]
        self.all_self_active = bool(self.self_active.all())
        self.lik = net.likelihood_tensor()
        with np.errstate(divide="ignore"):
            self.loglik = np.log(self.lik)
        self.rows = np.arange(net.n)
        self.ones = np.ones(net.m)
        self.lambdas = None if lambdas is None else np.asarray(lambdas, dtype=float)[:, None]
        if self.lambdas is not None and self.rule is not RuleKind.BLoAD:
            raise ValueError("observation weights only apply to the BLoAD rule")
        self.needs_loglik = self.rule is RuleKind.LoAB or self.lambdas is not None

    def gather(self, sigs: np.ndarray):
        """Per-agent likelihood rows (and their logs when needed) for signal indices.

        ``sigs`` may be one round (n,) or a block (rounds, n).
        """
        lik = self.lik[self.rows, sigs]
        loglik = self.loglik[self.rows, sigs] if self.needs_loglik else None
        return lik, loglik

    def _norm(self, x):
        return x / (x @ self.ones)[:, None]

    def _softmax(self, x):
        e = np.exp(x - x.max(axis=1, keepdims=True))
        return self._norm(e)

    def _own_posteriors(self, b, lik):
        post = self._norm(b * lik)
        if not self.all_self_active:
            # zero self-weight: the posterior is never used, so it must not leak NaN
            post = np.where(self.self_active, post, 0.0)
        return post

    def step(self, b: np.ndarray, lik: np.ndarray, loglik: np.ndarray | None = None) -> np.ndarray:
        rule = self.rule
        if rule is RuleKind.LoAB:
            return self._softmax(_weighted_logs(self.w, b) + loglik)
        if rule is RuleKind.LiAB:
            return self._norm((self.w @ b) * lik)
        if rule is RuleKind.BLoA:
            return self._softmax(_weighted_logs(self.w, self._norm(b * lik)))
        if rule is RuleKind.BLiA:
            return self._norm(self.w @ self._norm(b * lik))
        if rule is RuleKind.BLiAD:
            post = self._own_posteriors(b, lik)
            return self._norm(self.self_w[:, None] * post + self.off_w @ b)
        if self.lambdas is not None:
            return self._softmax(self.lambdas * loglik + _weighted_logs(self.w, b))
        post = self._own_posteriors(b, lik)
        return self._softmax(_weighted_logs(self.self_diag, post) + _weighted_logs(self.off_w, b))

    def advance(self, b: np.ndarray, sig: np.ndarray) -> np.ndarray:
        """One checked round; raises :class:`AgentDegenerateError` naming the agent."""
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.step(b, *self.gather(sig))
        _raise_if_degenerate(out)
        return out


def _raise_if_degenerate(beliefs: np.ndarray) -> None:
    bad = np.isnan(beliefs).any(axis=1)
    if bad.any():
        raise AgentDegenerateError(int(np.flatnonzero(bad)[0]), "update left no state with positive mass")


def _signal_indices(net: Network, signals: Sequence) -> np.ndarray:
    if len(signals) != net.n:
        raise ValueError(f"need {net.n} signals, got {len(signals)}")
    return np.array([mdl.signal_index(s) for mdl, s in zip(net.models, signals)])


def run_round(state: RoundState, net: Network, rule, signals: Sequence,
              lambda_overrides: Sequence[float] | None = None) -> RoundState:
    """Advance every agent one synchronous round given this round's signals."""
    kernel = RoundKernel(net, rule, lambda_overrides)
    b = np.asarray(state.beliefs, dtype=float)
    return RoundState(state.t + 1, kernel.advance(b, _signal_indices(net, signals)))


def run_round_per_agent(state: RoundState, net: Network, rule, signals: Sequence,
                        lambda_overrides: Sequence[float] | None = None) -> RoundState:
    """Same contract as :func:`run_round`, built from the per-agent rule operators."""
    rule = RuleKind.parse(rule)
    if len(signals) != net.n:
        raise ValueError(f"need {net.n} signals, got {len(signals)}")
    beliefs = state.beliefs
    posteriors = None
    if rule.aggregates_posteriors:
        # phase one: every agent's own posterior from the same snapshot
        posteriors = [bayes_update(beliefs[i], signals[i], net.models[i]) for i in range(net.n)]
    out = []
    for i in range(net.n):
        members = net.closed_neighborhood(i)
        view = NeighborhoodView(
            self_index=0,
            priors=tuple(beliefs[j] for j in members),
            weights=net.weights[i, members],
            posteriors=None if posteriors is None else tuple(posteriors[j] for j in members),
        )
        try:
            if lambda_overrides is not None and rule is RuleKind.BLoAD:
                out.append(rules.step_log_linear(view, signals[i], net.models[i], lambda_overrides[i]))
            else:
                out.append(rules.step(rule, view, signals[i], net.models[i]))
        except DegenerateSupportError as exc:
            raise AgentDegenerateError(i, str(exc)) from exc
    return RoundState(state.t + 1, np.vstack(out))


def has_converged(state: RoundState, true_index: int, threshold: float) -> bool:
    """Every agent's belief on the true state is within ``threshold`` of one."""
    return bool(np.all(np.abs(np.asarray(state.beliefs)[:, true_index] - 1.0) <= threshold))


# ---------------------------------------------------------------------------
# Trials and experiments
# ---------------------------------------------------------------------------


def initial_beliefs_for(config: TrialConfig, rng: np.random.Generator) -> np.ndarray:
    net = config.network
    if config.initial_beliefs is None:
        return sample_initial_beliefs(rng, net.n, net.m, config.init_scheme)
    b = np.array(config.initial_beliefs, dtype=float)
    if b.shape != (net.n, net.m):
        raise ValueError(f"initial beliefs must have shape {(net.n, net.m)}, got {b.shape}")
    for row in b:
        as_belief(row)
    return b


def run_trial(config: TrialConfig) -> TrialResult:
    """
    Simulate until every agent detects the true state or ``max_rounds`` runs out.

    Deterministic in ``config``: the seed fixes both the initial beliefs (when
    not given explicitly) and the signal stream.
    """
    net = config.network
    init_rng, signal_rng = trial_generators(config.seed)
    b = initial_beliefs_for(config, init_rng)
    kernel = RoundKernel(net, config.rule, config.lambda_overrides)
    cdf = _signal_cdf(net)[None, :, :]
    ti, eps = net.true_index, config.threshold
    trajectory = [b.copy()] if config.record_trajectory else None

    def done(beliefs):
        return np.abs(beliefs[:, ti] - 1.0).max()

    t = 0
    converged = bool(done(b) <= eps)
    with np.errstate(divide="ignore", invalid="ignore"):
        while not converged and t < config.max_rounds:
            block = min(SIGNAL_BLOCK, config.max_rounds - t)
            liks, logliks = kernel.gather(_inverse_cdf(signal_rng.random((block, net.n)), cdf))
            for r in range(block):
                b = kernel.step(b, liks[r], None if logliks is None else logliks[r])
                t += 1
                if trajectory is not None:
                    trajectory.append(b)
                gap = done(b)
                if gap <= eps:
                    converged = True
                    break
                if gap != gap:  # NaN: some agent's update degenerated this round
                    try:
                        _raise_if_degenerate(b)
                    except AgentDegenerateError as exc:
                        raise TrialAborted(f"{config.rule.value} aborted at round {t}: {exc}",
                                           config.rule, t, exc.agent) from exc
    return TrialResult(converged, t, b, int(config.seed), trajectory)


def summarize_rounds(rounds: Sequence[int], converged: Sequence[bool]) -> dict:
    """
    Statistics of rounds-to-detection over converged trials.

    Non-converged trials are excluded from mean/std/min/max and show up only
    in ``convergence_fraction``. Std is the population standard deviation.
    Statistics of an empty set are NaN.
    """
    if len(rounds) != len(converged) or not rounds:
        raise ValueError("need matching, nonempty rounds and converged sequences")
    done = [int(r) for r, c in zip(rounds, converged) if c]
    if done:
        arr = np.array(done, dtype=float)
        mean, std, lo, hi = float(arr.mean()), float(arr.std()), float(arr.min()), float(arr.max())
    else:
        mean = std = lo = hi = math.nan
    return {
        "trials": len(rounds),
        "converged": len(done),
        "convergence_fraction": len(done) / len(rounds),
        "mean_rounds": mean,
        "std_rounds": std,
        "min_rounds": lo,
        "max_rounds": hi,
    }


@dataclass(frozen=True, eq=False)
class ExperimentSummary:
    rule: RuleKind
    master_seed: int
    results: tuple = field(repr=False)

    @property
    def seeds(self) -> list:
        return [r.seed for r in self.results]

    @property
    def rounds(self) -> np.ndarray:
        return np.array([r.rounds for r in self.results])

    @property
    def converged(self) -> np.ndarray:
        return np.array([r.converged for r in self.results])

    @property
    def stats(self) -> dict:
        return summarize_rounds(list(self.rounds), list(self.converged))

    @property
    def mean(self) -> float:
        return self.stats["mean_rounds"]

    @property
    def std(self) -> float:
        return self.stats["std_rounds"]

    @property
    def min(self) -> float:
        return self.stats["min_rounds"]

    @property
    def max(self) -> float:
        return self.stats["max_rounds"]

    @property
    def convergence_fraction(self) -> float:
        return self.stats["convergence_fraction"]


def trial_configs(base: TrialConfig, trials: int, seed_stream: int) -> list:
    return [replace(base, seed=derive_seed(seed_stream, k)) for k in range(trials)]


def run_experiment(base: TrialConfig, trials: int, seed_stream: int, workers: int = 1) -> ExperimentSummary:
    """
    Independent trials of ``base`` with per-trial seeds split from ``seed_stream``.

    Trial ``k`` always gets ``derive_seed(seed_stream, k)``, so two rules run
    with the same stream see the same initial beliefs and signal streams.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    configs = trial_configs(base, trials, seed_stream)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_trial, configs))
    else:
        results = [run_trial(c) for c in configs]
    return ExperimentSummary(base.rule, int(seed_stream), tuple(results))

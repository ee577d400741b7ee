"""Ring-lattice detection scenarios with two complementary agent types."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SignalModel, StateSpace
from .network import Network, NetworkError, make_ring_lattice

STATES = StateSpace(("theta1", "theta2", "theta3"), true_index=2)
SIGNALS = ("s1", "s2")

# Rows are states theta1..theta3, columns signals s1, s2.
# Type 1 agents cannot tell theta1 from theta3; type 2 agents cannot tell theta2 from theta3.
TYPE1 = SignalModel(SIGNALS, [[0.8, 0.2], [0.5, 0.5], [0.8, 0.2]])
TYPE2 = SignalModel(SIGNALS, [[0.2, 0.8], [0.8, 0.2], [0.8, 0.2]])

PRESETS = ("clustered", "mixed")


@dataclass(frozen=True)
class ScenarioPreset:
    name: str
    n: int = 20
    k: int = 5

    def __post_init__(self):
        if self.name not in PRESETS:
            raise NetworkError(f"unknown preset {self.name!r}; choose from {PRESETS}")
        if self.n < 2 or self.n % 2:
            raise NetworkError(f"preset needs an even number of agents, got n={self.n}")
        if self.k % 2 == 0 or not 1 <= self.k <= self.n:
            raise NetworkError(f"k must be odd with 1 <= k <= n, got k={self.k}")

    @property
    def label(self) -> str:
        if (self.n, self.k) == (20, 5):
            return self.name
        return f"{self.name}-n{self.n}-k{self.k}"


def agent_types(preset: ScenarioPreset) -> list:
    """1 or 2 per agent around the ring."""
    if preset.name == "clustered":
        return [1 if i < preset.n // 2 else 2 for i in range(preset.n)]
    return [1 if i % 2 == 0 else 2 for i in range(preset.n)]


def build_scenario(preset: ScenarioPreset) -> Network:
    """Uniform-weight ring lattice with half the agents of each type.

    ``clustered`` puts type 1 on agents ``0 .. n/2 - 1``; ``mixed`` alternates
    types around the ring starting with type 1 at agent 0.
    """
    weights = make_ring_lattice(preset.n, preset.k)
    models = [TYPE1 if t == 1 else TYPE2 for t in agent_types(preset)]
    return Network(weights, models, STATES)


def build_inline(desc: dict) -> Network:
    """
    Network from a config mapping.

    Keys: ``states`` (labels), ``true_state`` (label or index), ``signals``,
    either ``ring: {n, k}`` or ``weights`` (row-stochastic matrix), and either
    ``likelihoods`` (one states-by-signals table per agent) or ``types``
    (name -> table) together with ``agents`` (one type name per agent).
    """
    try:
        labels = tuple(desc["states"])
        true_state = desc["true_state"]
        signals = tuple(desc["signals"])
    except KeyError as exc:
        raise NetworkError(f"inline scenario is missing key {exc}") from None
    true_index = true_state if isinstance(true_state, int) else labels.index(true_state)
    states = StateSpace(labels, true_index)

    if "ring" in desc:
        weights = make_ring_lattice(int(desc["ring"]["n"]), int(desc["ring"]["k"]))
    elif "weights" in desc:
        weights = np.asarray(desc["weights"], dtype=float)
    else:
        raise NetworkError("inline scenario needs 'ring' or 'weights'")

    if "likelihoods" in desc:
        models = [SignalModel(signals, table) for table in desc["likelihoods"]]
    elif "types" in desc and "agents" in desc:
        by_type = {name: SignalModel(signals, table) for name, table in desc["types"].items()}
        try:
            models = [by_type[t] for t in desc["agents"]]
        except KeyError as exc:
            raise NetworkError(f"agent type {exc} is not defined under 'types'") from None
    else:
        raise NetworkError("inline scenario needs 'likelihoods' or 'types' + 'agents'")
    return Network(weights, models, states)

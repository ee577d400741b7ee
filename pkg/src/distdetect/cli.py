"""
Command-line experiment harness.

Runs every (scenario, rule) cell for a number of seeded trials, writes one
CSV row per trial plus a JSON summary, and prints a comparison table.

CSV columns: ``rule,scenario,trial,seed,converged,rounds``.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from .engine import (
    INIT_SCHEMES,
    TrialConfig,
    derive_seed,
    initial_beliefs_for,
    run_experiment,
    summarize_rounds,
    trial_generators,
)
from .network import Network, check_conditions, condition_warnings
from .rules import RuleKind
from .scenarios import PRESETS, ScenarioPreset, build_inline, build_scenario

OUTPUT_DIR_ENV = "DISTDETECT_OUTPUT_DIR"
CSV_COLUMNS = ("rule", "scenario", "trial", "seed", "converged", "rounds")


class ConfigError(ValueError):
    pass


def default_output_path() -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV, "results")) / "results.csv"


@dataclass
class ExperimentSpec:
    scenarios: list = field(default_factory=lambda: list(PRESETS))
    rules: list = field(default_factory=lambda: list(RuleKind))
    trials: int = 100
    master_seed: int = 0
    threshold: float = 1e-3
    max_rounds: int = 100_000
    output_path: Path = field(default_factory=default_output_path)
    emit_trajectories: bool = False
    init_scheme: str = "simplex"

    def __post_init__(self):
        try:
            self.rules = [RuleKind.parse(r) for r in self.rules]
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not self.rules:
            raise ConfigError("at least one rule is required")
        if not self.scenarios:
            raise ConfigError("at least one scenario is required")
        if int(self.trials) < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if not 0 <= int(self.master_seed) < 2 ** 64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.master_seed}")
        if not 0 < float(self.threshold) < 1:
            raise ConfigError(f"threshold must lie in (0, 1), got {self.threshold}")
        if int(self.max_rounds) < 1:
            raise ConfigError(f"max-rounds must be >= 1, got {self.max_rounds}")
        if self.init_scheme not in INIT_SCHEMES:
            raise ConfigError(f"init_scheme must be one of {INIT_SCHEMES}")
        self.trials = int(self.trials)
        self.master_seed = int(self.master_seed)
        self.threshold = float(self.threshold)
        self.max_rounds = int(self.max_rounds)
        self.output_path = Path(self.output_path)

    @property
    def summary_path(self) -> Path:
        return self.output_path.with_suffix(".summary.json")

    @property
    def trajectory_dir(self) -> Path:
        return self.output_path.with_name(self.output_path.stem + "_trajectories")


def resolve_scenario(entry) -> tuple:
    """(label, Network) for a preset name, a preset mapping or an inline description."""
    if isinstance(entry, str):
        preset = ScenarioPreset(entry)
        return preset.label, build_scenario(preset)
    if isinstance(entry, dict):
        if "preset" in entry:
            preset = ScenarioPreset(entry["preset"], int(entry.get("n", 20)), int(entry.get("k", 5)))
            return entry.get("name", preset.label), build_scenario(preset)
        if "name" not in entry:
            raise ConfigError("inline scenarios need a 'name'")
        return entry["name"], build_inline(entry)
    raise ConfigError(f"cannot interpret scenario {entry!r}")


# config keys -> ExperimentSpec fields
_CONFIG_KEYS = {
    "scenario": "scenarios",
    "scenarios": "scenarios",
    "rule": "rules",
    "rules": "rules",
    "trials": "trials",
    "seed": "master_seed",
    "master_seed": "master_seed",
    "threshold": "threshold",
    "max_rounds": "max_rounds",
    "output": "output_path",
    "output_path": "output_path",
    "trajectories": "emit_trajectories",
    "emit_trajectories": "emit_trajectories",
    "init_scheme": "init_scheme",
}


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping at the top level")
    out = {}
    for key, value in raw.items():
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        name = _CONFIG_KEYS[key]
        if name in ("scenarios", "rules") and not isinstance(value, list):
            value = [value]
        out[name] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="distdetect",
        description="Compare distributed detection rules on ring-lattice scenarios.")
    p.add_argument("--config", help="YAML experiment file; flags below override its values")
    p.add_argument("--rule", action="append",
                   help="rule name (repeatable or comma-separated): " + ", ".join(k.value for k in RuleKind))
    p.add_argument("--scenario", action="append", help="preset name (repeatable): clustered, mixed")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--threshold", type=float)
    p.add_argument("--max-rounds", type=int)
    p.add_argument("--output", help=f"CSV path (default ${OUTPUT_DIR_ENV}/results.csv or results/results.csv)")
    p.add_argument("--trajectories", action="store_true", default=None,
                   help="dump per-round beliefs for every trial")
    p.add_argument("--init-scheme", choices=INIT_SCHEMES)
    return p


def spec_from_args(argv: Optional[Sequence[str]] = None) -> ExperimentSpec:
    args = build_parser().parse_args(argv)
    values = load_config(args.config) if args.config else {}
    if args.rule:
        values["rules"] = [r for item in args.rule for r in item.split(",") if r.strip()]
    if args.scenario:
        values["scenarios"] = [s for item in args.scenario for s in item.split(",") if s.strip()]
    for attr, name in (("trials", "trials"), ("seed", "master_seed"), ("threshold", "threshold"),
                       ("max_rounds", "max_rounds"), ("output", "output_path"),
                       ("trajectories", "emit_trajectories"), ("init_scheme", "init_scheme")):
        value = getattr(args, attr)
        if value is not None:
            values[name] = value
    return ExperimentSpec(**values)


def _json_number(x):
    return None if isinstance(x, float) and math.isnan(x) else x


def _write_trajectory(path: Path, trajectory: list, net: Network) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "agent", *net.states.labels])
        for t, beliefs in enumerate(trajectory):
            for i, row in enumerate(beliefs):
                writer.writerow([t, i, *(repr(float(x)) for x in row)])


def _check_writable(path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a"):
        pass


def run_cli(spec: ExperimentSpec, out=None, err=None) -> int:
    """Run every (scenario, rule) cell of ``spec``; returns a process exit status."""
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    try:
        scenarios = [resolve_scenario(s) for s in spec.scenarios]
    except (ValueError, KeyError) as exc:
        print(f"error: invalid scenario: {exc}", file=err)
        return 2
    labels = [label for label, _ in scenarios]
    if len(set(labels)) != len(labels):
        print(f"error: duplicate scenario names {labels}", file=err)
        return 2
    try:
        _check_writable(spec.output_path)
        if spec.emit_trajectories:
            spec.trajectory_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: output not writable: {exc}", file=err)
        return 2

    rows, cells, warnings = [], [], []
    for label, net in scenarios:
        for rule in spec.rules:
            base = TrialConfig(rule, net, threshold=spec.threshold, max_rounds=spec.max_rounds,
                               init_scheme=spec.init_scheme, record_trajectory=spec.emit_trajectories)
            # conditions are checked against trial 0's initial beliefs
            first = TrialConfig(rule, net, seed=derive_seed(spec.master_seed, 0), init_scheme=spec.init_scheme)
            init = initial_beliefs_for(first, trial_generators(first.seed)[0])
            for line in condition_warnings(check_conditions(net, rule, init)):
                msg = f"warning: {label}/{rule.value}: {line}"
                warnings.append(msg)
                print(msg, file=err)
            try:
                summary = run_experiment(base, spec.trials, spec.master_seed)
            except Exception as exc:  # noqa: BLE001 - any runtime failure ends the run with a diagnostic
                print(f"error: {label}/{rule.value}: {exc}", file=err)
                return 1
            for k, res in enumerate(summary.results):
                rows.append((rule.value, label, k, res.seed, int(res.converged), res.rounds))
                if spec.emit_trajectories:
                    _write_trajectory(spec.trajectory_dir / f"{label}_{rule.value}_trial{k}.csv",
                                      res.trajectory, net)
            stats = summarize_rounds([r.rounds for r in summary.results],
                                     [r.converged for r in summary.results])
            cells.append({"rule": rule.value, "scenario": label, **stats,
                          "flagged": stats["convergence_fraction"] < 1})

    with open(spec.output_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        writer.writerows(rows)
    summary_doc = {
        "master_seed": spec.master_seed,
        "trials": spec.trials,
        "threshold": spec.threshold,
        "max_rounds": spec.max_rounds,
        "init_scheme": spec.init_scheme,
        "csv": spec.output_path.name,
        "cells": [{k: _json_number(v) for k, v in c.items()} for c in cells],
        "warnings": warnings,
    }
    with open(spec.summary_path, "w") as fh:
        json.dump(summary_doc, fh, indent=2)
        fh.write("\n")
    print(format_table(cells), file=out)
    return 0


def format_table(cells: list) -> str:
    head = f"{'scenario':<12} {'rule':<6} {'mean':>10} {'std':>10} {'min':>8} {'max':>8} {'conv':>6}"
    lines = [head, "-" * len(head)]
    for c in cells:
        flag = "  !" if c["flagged"] else ""
        lines.append(f"{c['scenario']:<12} {c['rule']:<6} {c['mean_rounds']:>10.1f} {c['std_rounds']:>10.1f} "
                     f"{c['min_rounds']:>8.0f} {c['max_rounds']:>8.0f} {c['convergence_fraction']:>6.2f}{flag}")
    return "\n".join(lines)


def read_results_csv(path) -> list:
    """Rows of a results CSV with typed fields."""
    with open(path, newline="") as fh:
        return [{"rule": r["rule"], "scenario": r["scenario"], "trial": int(r["trial"]),
                 "seed": int(r["seed"]), "converged": r["converged"] == "1", "rounds": int(r["rounds"])}
                for r in csv.DictReader(fh)]


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        spec = spec_from_args(argv)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return run_cli(spec)


if __name__ == "__main__":
    sys.exit(main())

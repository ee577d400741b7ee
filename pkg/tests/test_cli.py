import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import yaml

from distdetect.cli import (
    CSV_COLUMNS,
    ConfigError,
    ExperimentSpec,
    main,
    read_results_csv,
    run_cli,
    spec_from_args,
)
from distdetect.engine import TrialConfig, derive_seed, run_trial, summarize_rounds
from distdetect.network import is_globally_identifiable, observationally_equivalent_set
from distdetect.rules import RuleKind
from distdetect.scenarios import TYPE1, TYPE2, ScenarioPreset, agent_types, build_scenario


class TestScenarios:
    def test_clustered(self):
        net = build_scenario(ScenarioPreset("clustered"))
        assert net.n == 20
        assert is_globally_identifiable(net)
        assert all(observationally_equivalent_set(m, 2) != {2} for m in net.models)
        assert agent_types(ScenarioPreset("clustered")) == [1] * 10 + [2] * 10

    def test_mixed_alternates(self):
        net = build_scenario(ScenarioPreset("mixed"))
        assert all(net.models[i] == (TYPE1 if i % 2 == 0 else TYPE2) for i in range(20))
        # every type-1 agent sits between two type-2 agents and vice versa
        types = agent_types(ScenarioPreset("mixed"))
        assert all(types[(i - 1) % 20] != types[i] != types[(i + 1) % 20] for i in range(20))

    def test_two_isolated_agents(self):
        net = build_scenario(ScenarioPreset("clustered", n=2, k=1))
        np.testing.assert_array_equal(net.weights, np.eye(2))
        assert is_globally_identifiable(net)

    def test_deterministic(self):
        a = build_scenario(ScenarioPreset("mixed"))
        b = build_scenario(ScenarioPreset("mixed"))
        np.testing.assert_array_equal(a.weights, b.weights)
        assert a.models == b.models

    @pytest.mark.parametrize("kw", [dict(name="ring"), dict(name="mixed", n=7), dict(name="mixed", k=4)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ScenarioPreset(**kw)


def small_spec(tmp_path, **kw):
    defaults = dict(rules=["BLoA", "BLiA"], scenarios=["clustered", "mixed"], trials=3,
                    master_seed=11, output_path=tmp_path / "out.csv")
    defaults.update(kw)
    return ExperimentSpec(**defaults)


class TestSpec:
    def test_defaults_mirror_reference_setup(self, monkeypatch):
        monkeypatch.delenv("DISTDETECT_OUTPUT_DIR", raising=False)
        spec = ExperimentSpec()
        assert spec.trials == 100 and spec.threshold == 1e-3 and spec.max_rounds == 100_000
        assert spec.rules == list(RuleKind) and spec.scenarios == ["clustered", "mixed"]
        assert spec.output_path == Path("results/results.csv")

    def test_env_output_dir(self, monkeypatch, tmp_path):
        monkeypatch.setenv("DISTDETECT_OUTPUT_DIR", str(tmp_path))
        assert spec_from_args([]).output_path == tmp_path / "results.csv"

    def test_config_then_flags(self, tmp_path):
        cfg = tmp_path / "exp.yaml"
        cfg.write_text(yaml.safe_dump({"rules": ["LoAB", "LiAB"], "trials": 7, "seed": 5,
                                       "scenarios": ["mixed"], "threshold": 0.01}))
        spec = spec_from_args(["--config", str(cfg), "--trials", "2", "--rule", "BLoA,BLiA", "--rule", "BLoAD"])
        assert spec.trials == 2
        assert spec.rules == [RuleKind.BLoA, RuleKind.BLiA, RuleKind.BLoAD]
        assert spec.master_seed == 5 and spec.scenarios == ["mixed"] and spec.threshold == 0.01

    def test_invalid_values(self, tmp_path):
        with pytest.raises(ConfigError):
            small_spec(tmp_path, rules=["nope"])
        with pytest.raises(ConfigError):
            small_spec(tmp_path, trials=0)
        with pytest.raises(ConfigError):
            small_spec(tmp_path, threshold=1.5)
        with pytest.raises(ConfigError):
            small_spec(tmp_path, master_seed=2**64)

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "exp.yaml"
        cfg.write_text("trails: 3\n")
        with pytest.raises(ConfigError):
            spec_from_args(["--config", str(cfg)])


class TestRun:
    def test_outputs(self, tmp_path, capsys):
        spec = small_spec(tmp_path)
        assert run_cli(spec) == 0
        with open(spec.output_path, newline="") as fh:
            header = next(csv.reader(fh))
        assert tuple(header) == CSV_COLUMNS
        rows = read_results_csv(spec.output_path)
        assert len(rows) == 2 * 2 * 3
        assert [r["seed"] for r in rows[:3]] == [derive_seed(11, k) for k in range(3)]
        assert "BLoA" in capsys.readouterr().out

    def test_summary_recomputes_from_csv(self, tmp_path):
        spec = small_spec(tmp_path, rules=list(RuleKind), trials=2)
        assert run_cli(spec) == 0
        rows = read_results_csv(spec.output_path)
        doc = json.loads(spec.summary_path.read_text())
        assert len(doc["cells"]) == 12
        for cell in doc["cells"]:
            mine = [r for r in rows if r["rule"] == cell["rule"] and r["scenario"] == cell["scenario"]]
            again = summarize_rounds([r["rounds"] for r in mine], [r["converged"] for r in mine])
            for key, value in again.items():
                assert cell[key] == value

    def test_byte_identical_reruns(self, tmp_path):
        a = small_spec(tmp_path, output_path=tmp_path / "a.csv")
        b = small_spec(tmp_path, output_path=tmp_path / "b.csv")
        assert run_cli(a) == 0 and run_cli(b) == 0
        assert a.output_path.read_bytes() == b.output_path.read_bytes()

    def test_trajectory_dump_matches_trial(self, tmp_path):
        spec = small_spec(tmp_path, rules=["LoAB"], scenarios=["mixed"], trials=1, emit_trajectories=True)
        assert run_cli(spec) == 0
        path = spec.trajectory_dir / "mixed_LoAB_trial0.csv"
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        res = run_trial(TrialConfig("LoAB", build_scenario(ScenarioPreset("mixed")),
                                    seed=derive_seed(11, 0), record_trajectory=True))
        assert len(rows) == 20 * (res.rounds + 1)
        dumped = np.array([[float(r[s]) for s in ("theta1", "theta2", "theta3")] for r in rows])
        np.testing.assert_array_equal(dumped, np.vstack(res.trajectory))

    def test_inline_scenario(self, tmp_path):
        cfg = tmp_path / "exp.yaml"
        cfg.write_text(yaml.safe_dump({
            "rules": ["BLoA"], "trials": 2, "output": str(tmp_path / "inline.csv"),
            "scenarios": [
                {"name": "tiny", "states": ["a", "b", "c"], "true_state": "c", "signals": ["x", "y"],
                 "ring": {"n": 4, "k": 3},
                 "types": {"A": [[0.8, 0.2], [0.5, 0.5], [0.8, 0.2]], "B": [[0.2, 0.8], [0.8, 0.2], [0.8, 0.2]]},
                 "agents": ["A", "B", "A", "B"]},
                {"preset": "mixed", "n": 10, "k": 3},
            ]}))
        assert main(["--config", str(cfg)]) == 0
        rows = read_results_csv(tmp_path / "inline.csv")
        assert {r["scenario"] for r in rows} == {"tiny", "mixed-n10-k3"}
        assert all(r["converged"] for r in rows)

    def test_failures_exit_nonzero(self, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        assert run_cli(small_spec(tmp_path, output_path=blocker / "sub" / "out.csv")) == 2
        assert main(["--rule", "nope", "--output", str(tmp_path / "o.csv")]) == 2
        bad = tmp_path / "bad.yaml"
        bad.write_text("rules: [unclosed\n")
        assert main(["--config", str(bad)]) == 2
        assert main(["--config", str(tmp_path / "missing.yaml")]) == 2
        assert run_cli(small_spec(tmp_path, scenarios=["ring"])) == 2
        assert "error" in capsys.readouterr().err

    def test_condition_warnings_are_not_fatal(self, tmp_path, capsys):
        cfg = tmp_path / "exp.yaml"
        cfg.write_text(yaml.safe_dump({
            "rules": ["BLoA"], "trials": 1, "max_rounds": 20, "output": str(tmp_path / "w.csv"),
            "scenarios": [{"name": "alltype1", "states": ["a", "b", "c"], "true_state": 2, "signals": ["x", "y"],
                           "ring": {"n": 4, "k": 3}, "likelihoods": [[[0.8, 0.2], [0.5, 0.5], [0.8, 0.2]]] * 4}]}))
        assert main(["--config", str(cfg)]) == 0
        err = capsys.readouterr().err
        assert "condition 2 clause (3)" in err
        doc = json.loads((tmp_path / "w.summary.json").read_text())
        assert doc["cells"][0]["flagged"] and doc["cells"][0]["mean_rounds"] is None

    def test_module_entry_point(self, tmp_path):
        out = tmp_path / "m.csv"
        proc = subprocess.run([sys.executable, "-m", "distdetect", "--rule", "BLoA", "--scenario", "mixed",
                               "--trials", "2", "--seed", "3", "--output", str(out)],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert len(read_results_csv(out)) == 2

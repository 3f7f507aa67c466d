import json
import os

import pytest

from qgnoise import backend
from qgnoise import _kernels_numpy
from qgnoise.cli import main
from qgnoise.experiment import (
    DataError,
    ExperimentConfig,
    analyze,
    collect_records,
    config_digest,
    config_from_dict,
    load_config,
    run_sweep,
    theory_table,
)
from qgnoise.graphs import parse_dataset, planted_target
from qgnoise.training import TrainConfig
from qgnoise.validate import run_property_suite


def mini_config(out_dir, **overrides):
    raw = {
        "dataset": {"synthetic": {"count": 100, "seed": 3}},
        "split_seed": 11,
        "n_seeds": 2,
        "noise": {"epsilons": [0.0, 0.005], "sigma_coeff": 0.2, "gate_count": "per-molecule"},
        "train": {"max_epochs": 25, "patience": 10, "init_seed": 100,
                  "hidden_dims": [16, 12, 8]},
        "output_dir": str(out_dir),
        "workers": 1,
    }
    raw.update(overrides)
    return config_from_dict(raw)


class TestConfig:
    def test_defaults(self):
        cfg = config_from_dict({"dataset": {"synthetic": {"count": 10, "seed": 1}}})
        assert cfg.n_seeds == 55
        assert cfg.epsilons == (0.0, 0.005, 0.010, 0.015)
        assert cfg.sigma_coeff == 0.2
        assert cfg.gate_count is None
        assert cfg.train.max_epochs == 200
        assert cfg.train.learning_rate == 5e-3
        assert cfg.train.patience == 15
        assert cfg.train.batch_size == 32

    def test_zero_epsilon_required(self):
        with pytest.raises(DataError):
            config_from_dict({"dataset": {"synthetic": {}},
                              "noise": {"epsilons": [0.005, 0.01]}})

    def test_duplicate_epsilons_rejected(self):
        with pytest.raises(DataError):
            config_from_dict({"dataset": {"synthetic": {}},
                              "noise": {"epsilons": [0.0, 0.005, 0.005]}})

    def test_dataset_required_exclusive(self):
        with pytest.raises(DataError):
            config_from_dict({"dataset": {}})
        with pytest.raises(DataError):
            config_from_dict({"dataset": {"path": "x", "synthetic": {}}})

    def test_digest_ignores_execution_knobs(self, tmp_path):
        a = mini_config(tmp_path / "a")
        b = mini_config(tmp_path / "b", n_seeds=5, workers=2)
        assert config_digest(a) == config_digest(b)

    def test_digest_tracks_run_shaping_fields(self, tmp_path):
        a = mini_config(tmp_path / "a")
        b = mini_config(tmp_path / "a", split_seed=12)
        assert config_digest(a) != config_digest(b)

    def test_load_config_file(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"dataset": {"synthetic": {"count": 12, "seed": 0}}}))
        cfg = load_config(path)
        assert cfg.dataset == {"synthetic": {"count": 12, "seed": 0}}

    def test_malformed_config(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("{nope")
        with pytest.raises(DataError):
            load_config(path)


class TestGenDataCli:
    def test_writes_parseable_dataset(self, tmp_path):
        out = tmp_path / "data.jsonl"
        assert main(["gen-data", "--count", "30", "--seed", "5", "--out", str(out)]) == 0
        graphs = parse_dataset(out)
        assert len(graphs) == 30
        assert all(g.target == planted_target(g.atoms, g.bonds) for g in graphs)


@pytest.fixture(scope="module")
def finished_sweep(tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("sweep")
    cfg = mini_config(out_dir)
    runs_path = run_sweep(cfg)
    lines = [json.loads(l) for l in open(runs_path, encoding="utf-8")]
    return cfg, runs_path, lines


class TestSweep:
    def test_grid_size(self, finished_sweep):
        _, _, lines = finished_sweep
        ok = [l for l in lines if l["status"] == "ok"]
        assert len(ok) == 4
        assert {(l["init_seed"], l["epsilon"]) for l in ok} == {
            (100, 0.0), (100, 0.005), (101, 0.0), (101, 0.005)
        }

    def test_cross_epsilon_digest_identity(self, finished_sweep):
        _, _, lines = finished_sweep
        for seed in (100, 101):
            digests = {l["initial_params_digest"] for l in lines if l["init_seed"] == seed}
            assert len(digests) == 1

    def test_lines_carry_version_and_digest(self, finished_sweep):
        cfg, _, lines = finished_sweep
        for line in lines:
            assert line["config_digest"] == config_digest(cfg)
            assert line["code_version"]

    def test_checkpoints_exist(self, finished_sweep):
        _, _, lines = finished_sweep
        for line in lines:
            assert os.path.exists(line["checkpoint_path"])

    def test_refuses_nonresume_append(self, finished_sweep):
        cfg, _, _ = finished_sweep
        with pytest.raises(DataError, match="--resume"):
            run_sweep(cfg)

    def test_resume_completes_interrupted(self, finished_sweep, tmp_path):
        cfg_full, _, lines = finished_sweep
        out_dir = tmp_path / "resumed"
        cfg = mini_config(out_dir)
        os.makedirs(out_dir)
        with open(out_dir / "runs.jsonl", "w", encoding="utf-8") as f:
            for line in lines[:2]:
                f.write(json.dumps(line) + "\n")
        runs_path = run_sweep(cfg, resume=True)
        resumed = [json.loads(l) for l in open(runs_path, encoding="utf-8")]
        assert len(resumed) == 4

        def comparable(rows):
            return {
                (l["init_seed"], l["epsilon"]): (
                    l["r2_train"], l["r2_val"], l["r2_test"],
                    l["epochs_run"], l["early_stopped"], l["initial_params_digest"],
                )
                for l in rows if l["status"] == "ok"
            }

        assert comparable(resumed) == comparable(lines)

    def test_resume_rejects_other_config(self, finished_sweep):
        cfg, _, _ = finished_sweep
        other = mini_config(cfg.output_dir, split_seed=99)
        with pytest.raises(DataError, match="digest"):
            run_sweep(other, resume=True)


class TestAnalyze:
    def test_report_and_tables(self, finished_sweep, tmp_path):
        cfg, runs_path, _ = finished_sweep
        report = analyze(runs_path, cfg, tmp_path / "report")
        assert sum(report["category_fractions"].values()) == pytest.approx(1.0, abs=1e-12)
        assert len(report["seeds"]) == 2
        for name in ("report.json", "waterfall.csv", "optimal_epsilon_histogram.csv",
                     "dose_response.csv", "scatter_baseline_vs_delta.csv"):
            assert (tmp_path / "report" / name).exists()

    def test_byte_identical_reruns(self, finished_sweep, tmp_path):
        cfg, runs_path, _ = finished_sweep
        analyze(runs_path, cfg, tmp_path / "r1")
        analyze(runs_path, cfg, tmp_path / "r2")
        for name in ("report.json", "waterfall.csv"):
            a = (tmp_path / "r1" / name).read_bytes()
            b = (tmp_path / "r2" / name).read_bytes()
            assert a == b

    def test_missing_pair_names_cell(self, finished_sweep, tmp_path):
        cfg, runs_path, lines = finished_sweep
        partial = tmp_path / "partial.jsonl"
        with open(partial, "w", encoding="utf-8") as f:
            for line in lines[:-1]:
                f.write(json.dumps(line) + "\n")
        dropped = lines[-1]
        with pytest.raises(DataError, match=f"seed={dropped['init_seed']}"):
            collect_records(partial, cfg)

    def test_mixed_digest_rejected_unless_forced(self, finished_sweep, tmp_path):
        cfg, runs_path, lines = finished_sweep
        tampered = tmp_path / "tampered.jsonl"
        with open(tampered, "w", encoding="utf-8") as f:
            for k, line in enumerate(lines):
                if k == 0:
                    line = dict(line, config_digest="deadbeefdeadbeef")
                f.write(json.dumps(line) + "\n")
        with pytest.raises(DataError, match="digest"):
            collect_records(tampered, cfg)
        per_seed, _ = collect_records(tampered, cfg, force=True)
        assert len(per_seed) == 2


class TestTheory:
    def test_per_molecule_rows(self, tmp_path):
        cfg = mini_config(tmp_path / "t")
        table = theory_table(cfg)
        assert table["summary"]["n_molecules"] == 100
        for row in table["rows"]:
            assert row["epsilon_opt"] == pytest.approx(0.6931471805599453 / row["gate_count"])

    def test_fixed_gate_count_override(self, tmp_path):
        cfg = mini_config(tmp_path / "t", noise={"epsilons": [0.0, 0.005], "gate_count": 80})
        table = theory_table(cfg)
        values = {row["epsilon_opt"] for row in table["rows"]}
        assert values == {pytest.approx(0.6931471805599453 / 80)}


class TestCliExitCodes:
    def test_usage_error(self):
        assert main(["sweep"]) == 1
        assert main(["no-such-command"]) == 1

    def test_data_error_missing_runs(self, tmp_path):
        cfg_path = tmp_path / "c.json"
        cfg_path.write_text(json.dumps({"dataset": {"synthetic": {"count": 12, "seed": 0}}}))
        code = main(["analyze", "--runs", str(tmp_path / "none.jsonl"),
                     "--config", str(cfg_path), "--out", str(tmp_path / "o")])
        assert code == 2

    def test_data_error_missing_dataset_file(self, tmp_path):
        cfg_path = tmp_path / "c.json"
        cfg_path.write_text(json.dumps({
            "dataset": {"path": str(tmp_path / "absent.jsonl")},
            "output_dir": str(tmp_path / "out"),
        }))
        assert main(["sweep", "--config", str(cfg_path)]) == 2


class TestValidateSuite:
    def test_pristine_suite_passes(self):
        results = run_property_suite()
        assert all(r.passed for r in results), [r for r in results if not r.passed]

    def test_ry_corruption_breaks_gradient_property(self, monkeypatch):
        previous = backend.name
        backend.select("numpy")
        monkeypatch.setattr(_kernels_numpy, "RY_ANGLE_WARP", 0.3)
        try:
            results = {r.name: r for r in run_property_suite()}
        finally:
            monkeypatch.setattr(_kernels_numpy, "RY_ANGLE_WARP", 0.0)
            backend.select(previous)
        assert not results["gradient-consistency"].passed

    def test_validate_cli_flags_corruption(self, tmp_path, monkeypatch):
        cfg_path = tmp_path / "c.json"
        cfg_path.write_text(json.dumps({"dataset": {"synthetic": {"count": 30, "seed": 2}}}))
        previous = backend.name
        backend.select("numpy")
        monkeypatch.setattr(_kernels_numpy, "RY_ANGLE_WARP", 0.3)
        try:
            code = main(["validate", "--config", str(cfg_path)])
        finally:
            monkeypatch.setattr(_kernels_numpy, "RY_ANGLE_WARP", 0.0)
            backend.select(previous)
        assert code == 3

import json
from pathlib import Path

import numpy as np
import pytest

from qfedsim import cli, data
from qfedsim.cli import ExperimentConfig
from qfedsim.errors import ConfigError


@pytest.fixture()
def small_cfg(tmp_path):
    """A config small enough for fast CLI integration tests."""
    cfg = ExperimentConfig(
        seed=5,
        out=str(tmp_path / "out"),
        n_train=48,
        n_test=48,
        n_clients=2,
        n_rounds=1,
        local_epochs=1,
        batch_size=16,
        noise_levels=(0.0, 0.02),
        bias_instances=3,
        shots=(200, 2000),
        shot_trials=3,
        synth_clients=8,
        synth_dim=10,
        synth_rounds=400,
        synth_u_q=(0.5,),
        synth_kappa_b=(1.0, 10.0),
    )
    path = tmp_path / "cfg.ini"
    cli.save_config(cfg, path)
    return cfg, path


class TestConfig:
    def test_roundtrip_identity(self, tmp_path):
        cfg = ExperimentConfig(seed=9, noise_levels=(0.01,), sample_size=4)
        path = tmp_path / "c.ini"
        cli.save_config(cfg, path)
        assert cli.load_config(path) == cfg

    def test_unknown_key_named(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[dataset]\nn_train = 10\nbogus_key = 1\n")
        with pytest.raises(ConfigError, match="bogus_key"):
            cli.load_config(path)

    def test_unknown_section_rejected(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[plotting]\ncolor = red\n")
        with pytest.raises(ConfigError, match="plotting"):
            cli.load_config(path)

    def test_out_of_range_value_named(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text("[dataset]\nflip_p = 0.9\n")
        with pytest.raises(ConfigError, match="flip_p"):
            cli.load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            cli.load_config(tmp_path / "absent.ini")


class TestExitCodes:
    def test_config_error_is_1(self, tmp_path):
        bad = tmp_path / "bad.ini"
        bad.write_text("[dataset]\nnope = 1\n")
        assert cli.main(["gen-data", "--config", str(bad)]) == 1

    def test_bad_flag_is_1(self):
        assert cli.main(["no-such-command"]) == 1

    def test_runtime_error_is_2(self, tmp_path):
        # 2 samples over 8 clients cannot produce nonempty shards
        cfg = ExperimentConfig(n_train=2, out=str(tmp_path / "o"))
        path = tmp_path / "c.ini"
        cli.save_config(cfg, path)
        assert cli.main(["gen-data", "--config", str(path)]) == 2

    def test_success_is_0(self, small_cfg, tmp_path):
        _, path = small_cfg
        assert cli.main(["gen-data", "--config", str(path)]) == 0


class TestGenData:
    def test_outputs(self, small_cfg):
        cfg, path = small_cfg
        assert cli.main(["gen-data", "--config", str(path)]) == 0
        out = Path(cfg.out)
        train = data.load_dataset_csv(out / "train.csv")
        test = data.load_dataset_csv(out / "test.csv")
        part = data.load_partition_json(out / "partition.json")
        assert len(train) == 48 and len(test) == 48
        assert sorted(i for s in part.shards for i in s) == list(range(48))


class TestBiasSweep:
    def test_csv_shape_and_zero_level(self, small_cfg):
        cfg, path = small_cfg
        assert cli.main(["bias-sweep", "--config", str(path)]) == 0
        lines = (Path(cfg.out) / "bias_sweep.csv").read_text().splitlines()
        assert lines[0] == "p,raw_mean,raw_std,zne_mean,zne_std"
        assert len(lines) == 3
        zero_row = [float(v) for v in lines[1].split(",")]
        assert zero_row[0] == 0.0
        assert zero_row[1] <= 1e-10 and zero_row[3] <= 1e-10
        noisy = [float(v) for v in lines[2].split(",")]
        assert noisy[3] < noisy[1]  # zne beats raw at p > 0

    def test_deterministic_bytes(self, small_cfg, tmp_path):
        cfg, path = small_cfg
        outs = []
        for tag in ("a", "b"):
            out = tmp_path / tag
            assert cli.main(
                ["bias-sweep", "--config", str(path), "--out", str(out)]
            ) == 0
            outs.append((out / "bias_sweep.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_workers_do_not_change_output(self, small_cfg, tmp_path):
        cfg, path = small_cfg
        outs = []
        for tag, workers in (("w1", "1"), ("w2", "2")):
            out = tmp_path / tag
            assert cli.main(
                [
                    "bias-sweep",
                    "--config",
                    str(path),
                    "--out",
                    str(out),
                    "--workers",
                    workers,
                ]
            ) == 0
            outs.append((out / "bias_sweep.csv").read_bytes())
        assert outs[0] == outs[1]


class TestShotSweep:
    def test_variance_decreases_with_shots(self, small_cfg):
        cfg, path = small_cfg
        assert cli.main(["shot-sweep", "--config", str(path)]) == 0
        lines = (Path(cfg.out) / "shot_sweep.csv").read_text().splitlines()
        assert lines[0] == "shots,total_variance,wall_ms"
        variances = [float(line.split(",")[1]) for line in lines[1:]]
        assert variances[1] < variances[0]


class TestSynthFloor:
    def test_sweep_rows_and_kappa_ordering(self, small_cfg):
        cfg, path = small_cfg
        assert cli.main(["synth-floor", "--config", str(path)]) == 0
        lines = (Path(cfg.out) / "synth_floor.csv").read_text().splitlines()
        assert lines[0].startswith("algo,u_q,kappa_b")
        rows = [line.split(",") for line in lines[1:]]
        assert len(rows) == 3 * 1 * 2  # algos x u_q x kappa_b
        qa = {float(r[2]): float(r[6]) for r in rows if r[0] == "qanchor"}
        assert qa[10.0] <= qa[1.0]

    def test_deterministic_bytes(self, small_cfg, tmp_path):
        cfg, path = small_cfg
        outs = []
        for tag in ("a", "b"):
            out = tmp_path / tag
            assert cli.main(
                ["synth-floor", "--config", str(path), "--out", str(out)]
            ) == 0
            outs.append((out / "synth_floor.csv").read_bytes())
        assert outs[0] == outs[1]


class TestFlCompare:
    def test_small_run_outputs(self, small_cfg):
        cfg, path = small_cfg
        assert cli.main(["fl-compare", "--config", str(path)]) == 0
        out = Path(cfg.out)
        summary = json.loads((out / "fl_summary.json").read_text())
        assert set(summary) >= {"init", "fedavg", "scaffold", "qanchor"}
        for algo in ("fedavg", "scaffold", "qanchor"):
            lines = (out / f"fl_{algo}.csv").read_text().splitlines()
            assert lines[0] == (
                "round,algo,train_loss,train_acc,test_loss,test_acc,grad_evals"
            )
            assert len(lines) == cfg.n_rounds + 1
            assert np.isfinite(summary[algo]["final_test_acc"])

    def test_zero_rounds_summary_is_init(self, small_cfg, tmp_path):
        cfg, path = small_cfg
        cfg.n_rounds = 0
        cfg.out = str(tmp_path / "zero")
        path0 = tmp_path / "zero.ini"
        cli.save_config(cfg, path0)
        assert cli.main(["fl-compare", "--config", str(path0)]) == 0
        summary = json.loads(
            (Path(cfg.out) / "fl_summary.json").read_text()
        )
        for algo in ("fedavg", "scaffold", "qanchor"):
            assert summary[algo]["final_test_acc"] == summary["init"]["test_acc"]
            assert summary[algo]["final_train_loss"] == summary["init"]["train_loss"]

    def test_seed_flag_overrides(self, small_cfg, tmp_path):
        cfg, path = small_cfg
        out_a = tmp_path / "sa"
        out_b = tmp_path / "sb"
        for out, seed in ((out_a, "5"), (out_b, "99")):
            assert cli.main(
                [
                    "bias-sweep",
                    "--config",
                    str(path),
                    "--out",
                    str(out),
                    "--seed",
                    seed,
                ]
            ) == 0
        assert (out_a / "bias_sweep.csv").read_bytes() != (
            out_b / "bias_sweep.csv"
        ).read_bytes()

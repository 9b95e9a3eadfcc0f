import json
import subprocess

import numpy as np
import pytest

from gmmadapt.cli import main

SMALL_CONFIG = {
    "seed": 3,
    "shift": {"kind": "OPDA", "n_shared": 3, "n_source_private": 2, "n_target_private": 2},
    "domain": {
        "d_in": 8,
        "class_sep": 5.0,
        "rotation_seed": 2,
        "rotation_strength": 1.0,
        "translation_scale": 1.0,
        "noise_sigma_source": 1.0,
        "noise_sigma_target": 1.3,
    },
    "fd": 32,
    "fd_r": 8,
    "n_b": 16,
    "n_batches": 12,
    "n_init": 5,
    "source_epochs": 4,
    "n_source_train": 400,
    "n_source_holdout": 100,
}


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(SMALL_CONFIG))
    return path


RUN_FILES = [
    "config.resolved.json",
    "metrics.jsonl",
    "metrics.csv",
    "thresholds.csv",
    "model.ckpt",
    "gmm.ckpt",
    "summary.json",
]


class TestMemoryCommand:
    def test_paper_scale_row(self, capsys):
        assert main(["memory", "--classes", "345:345"]) == 0
        out = capsys.readouterr().out
        header, row = out.strip().splitlines()
        assert header == "n_classes,n_gmm,n_queue,n_teacher,ratio_queue,ratio_teacher"
        cells = row.split(",")
        assert cells[:4] == ["345", "740025", "33288188", "24000000"]
        assert float(cells[4]) == pytest.approx(0.0222, abs=5e-4)
        assert float(cells[5]) == pytest.approx(0.0308, abs=5e-4)

    def test_span_rows_and_csv(self, tmp_path, capsys):
        out_path = tmp_path / "memory.csv"
        assert main(["memory", "--classes", "1:5", "--out", str(out_path)]) == 0
        lines = out_path.read_text().strip().splitlines()
        assert len(lines) == 6
        assert capsys.readouterr().out.strip().splitlines() == lines

    def test_invalid_fd_r_exits_config(self, capsys):
        assert main(["memory", "--fd-r", "0", "--classes", "12:12"]) == 2
        assert "config error" in capsys.readouterr().err


class TestAdaptCommand:
    def test_run_layout_and_determinism(self, tmp_path, small_config, capsys):
        out_a = tmp_path / "run_a"
        out_b = tmp_path / "run_b"
        assert main(["adapt", "--config", str(small_config), "--out", str(out_a)]) == 0
        assert main(["adapt", "--config", str(small_config), "--out", str(out_b)]) == 0
        for name in RUN_FILES:
            assert (out_a / name).exists(), name
        assert (out_a / "metrics.jsonl").read_bytes() == (out_b / "metrics.jsonl").read_bytes()
        assert (out_a / "summary.json").read_bytes() == (out_b / "summary.json").read_bytes()

        resolved = json.loads((out_a / "config.resolved.json").read_text())
        assert resolved["seed"] == 3
        assert resolved["derived"]["unknown_marker"] == 5
        assert "tau" in resolved["derived"]

        csv_lines = (out_a / "metrics.csv").read_text().splitlines()
        assert len(csv_lines) == 1 + 12
        thr_lines = (out_a / "thresholds.csv").read_text().splitlines()
        assert thr_lines[0] == "batch,tau_k,tau_u"

    def test_flag_overrides_config(self, tmp_path, small_config):
        out = tmp_path / "run"
        assert main(["adapt", "--config", str(small_config), "--out", str(out),
                     "--n-batches", "7"]) == 0
        resolved = json.loads((out / "config.resolved.json").read_text())
        assert resolved["n_batches"] == 7
        assert len((out / "metrics.jsonl").read_text().splitlines()) == 7

    def test_short_run_never_freezes_warns(self, tmp_path, small_config):
        out = tmp_path / "run"
        assert main(["adapt", "--config", str(small_config), "--out", str(out),
                     "--n-batches", "4"]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["thresholds_frozen"] is False
        assert summary["warnings"]

    def test_loss_mode_none_leaves_model_at_source(self, tmp_path, small_config):
        from gmmadapt.toy_model import ToyModel

        ckpt = tmp_path / "source.ckpt"
        assert main(["train-source", "--config", str(small_config), "--out", str(ckpt)]) == 0
        out = tmp_path / "run"
        assert main(["adapt", "--config", str(small_config), "--out", str(out),
                     "--model", str(ckpt), "--loss-mode", "none"]) == 0
        source = ToyModel.load(ckpt)
        final = ToyModel.load(out / "model.ckpt")
        for k in source.params:
            np.testing.assert_array_equal(source.params[k], final.params[k])

    def test_bad_config_exits_2(self, tmp_path, small_config, capsys):
        out = tmp_path / "run"
        code = main(["adapt", "--config", str(small_config), "--out", str(out),
                     "--p-reject", "150"])
        assert code == 2
        assert not (out / "summary.json").exists()

    def test_env_var_output_root(self, tmp_path, small_config, monkeypatch):
        monkeypatch.setenv("GMMADAPT_RUNS", str(tmp_path / "root"))
        assert main(["adapt", "--config", str(small_config)]) == 0
        assert (tmp_path / "root" / "adapt" / "summary.json").exists()


class TestReplayCommand:
    def test_replay_reproduces_summary(self, tmp_path, small_config, capsys):
        out = tmp_path / "run"
        assert main(["adapt", "--config", str(small_config), "--out", str(out)]) == 0
        replay_out = tmp_path / "summary.replay.json"
        assert main(["replay", str(out), "--out", str(replay_out)]) == 0
        assert replay_out.read_text() == (out / "summary.json").read_text()


class TestSweepCommand:
    def test_lambda_sweep_table(self, tmp_path, small_config, capsys):
        out = tmp_path / "sweep"
        assert main(["sweep", "--config", str(small_config), "--out", str(out),
                     "--parameter", "lambda", "--values", "0,1", "--repeats", "2"]) == 0
        lines = (out / "sweep.csv").read_text().strip().splitlines()
        assert lines[0] == "parameter,value,n_runs,mean_primary_metric,std_primary_metric"
        assert len(lines) == 3
        assert (out / "lam=0_rep0" / "summary.json").exists()
        assert (out / "lam=1_rep1" / "summary.json").exists()

    def test_batch_size_sweep_with_compensation(self, tmp_path, small_config):
        out = tmp_path / "sweep"
        assert main(["sweep", "--config", str(small_config), "--out", str(out),
                     "--parameter", "N_b", "--values", "8,16", "--repeats", "1",
                     "--compensate-n-init"]) == 0
        resolved = json.loads((out / "n_b=8_rep0" / "config.resolved.json").read_text())
        # base n_init=5, n_b=16 -> compensated n_init = 10 at n_b=8
        assert resolved["n_init"] == 10
        assert resolved["n_b"] == 8

    def test_unknown_parameter_rejected(self, tmp_path, small_config, capsys):
        assert main(["sweep", "--config", str(small_config), "--out", str(tmp_path / "s"),
                     "--parameter", "nope", "--values", "1"]) == 2

    def test_single_value_single_repeat_degenerates_to_adapt(self, tmp_path, small_config):
        out = tmp_path / "sweep"
        assert main(["sweep", "--config", str(small_config), "--out", str(out),
                     "--parameter", "lr", "--values", "0.0001", "--repeats", "1"]) == 0
        run_dir = out / "lr=0.0001_rep0"
        alone = tmp_path / "alone"
        assert main(["adapt", "--config", str(small_config), "--out", str(alone),
                     "--lr", "0.0001"]) == 0
        assert (run_dir / "metrics.jsonl").read_bytes() == (alone / "metrics.jsonl").read_bytes()


class TestInstalledEntryPoint:
    def test_console_script_memory(self):
        proc = subprocess.run(
            ["gmmadapt", "memory", "--classes", "12:12"],
            capture_output=True, text=True, timeout=60,
        )
        assert proc.returncode == 0
        assert "25740" in proc.stdout

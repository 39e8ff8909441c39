"""CLI: file formats, exit codes, resolved configs, reproducibility."""

import json
from pathlib import Path

import numpy as np
from click.testing import CliRunner

from tsbridge.cli import main
from tsbridge.factors import load_factor_model, pca_transform, reconstruct
from tsbridge.series import read_paths_csv, read_table_csv, write_table_csv

TRUTH_HEADER = ["path_id", "kappa", "theta", "xi_vol", "rho", "r", "v0"]


def run_cli(args, **kwargs):
    return CliRunner().invoke(main, args, catch_exceptions=False, **kwargs)


def tiny_dataset(out_dir: Path, paths=12, length=6, seed=3):
    result = run_cli([
        "simulate-heston", "--paths", str(paths), "--length", str(length),
        "--dt", "0.01", "--seed", str(seed), "--out", str(out_dir),
    ])
    assert result.exit_code == 0, result.output
    return out_dir / "paths.csv"


def tiny_train(tmp_path: Path, data_csv: Path, extra=(), name="run"):
    out = tmp_path / name
    result = run_cli([
        "train", "--data", str(data_csv), "--out", str(out), "--seed", "7",
        "--epochs", "3", "--outer", "1", "--d-model", "8", "--n-head", "2",
        "--batch-size", "4", *extra,
    ])
    assert result.exit_code == 0, result.output
    return out


class TestSimulateHeston:
    def test_default_ranges_in_truth_file(self, tmp_path):
        tiny_dataset(tmp_path, paths=20)
        truth = read_table_csv(tmp_path / "truth.csv", TRUTH_HEADER)
        assert truth.shape == (20, 7)
        lows = [0.5, 0.5, 0.1, -0.9, 0.01]
        highs = [4.0, 1.5, 0.9, 0.9, 0.1]
        for j, (lo, hi) in enumerate(zip(lows, highs)):
            col = truth[:, j + 1]
            assert col.min() >= lo and col.max() <= hi

    def test_desk_scale_flags(self, tmp_path):
        result = run_cli([
            "simulate-heston", "--paths", "5", "--length", "50",
            "--seed", "0", "--out", str(tmp_path),
        ])
        assert result.exit_code == 0
        ds = read_paths_csv(tmp_path / "paths.csv")
        assert ds.values.shape == (5, 50, 2)

    def test_seed_reproducibility_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        tiny_dataset(a, seed=11)
        tiny_dataset(b, seed=11)
        assert (a / "paths.csv").read_bytes() == (b / "paths.csv").read_bytes()
        assert (a / "truth.csv").read_bytes() == (b / "truth.csv").read_bytes()

    def test_resolved_config_rerun_reproduces(self, tmp_path):
        a = tmp_path / "a"
        tiny_dataset(a, seed=5)
        b = tmp_path / "b"
        result = run_cli([
            "simulate-heston", "--config", str(a / "resolved_config.json"),
            "--out", str(b),
        ])
        assert result.exit_code == 0
        assert (a / "paths.csv").read_bytes() == (b / "paths.csv").read_bytes()

    def test_env_var_out_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("TSBRIDGE_OUT", str(tmp_path / "envout"))
        result = run_cli(["simulate-heston", "--paths", "2", "--length", "4", "--seed", "0"])
        assert result.exit_code == 0
        assert (tmp_path / "envout" / "paths.csv").exists()


class TestTrainGenerate:
    def test_train_writes_artifacts(self, tmp_path):
        data = tiny_dataset(tmp_path / "data")
        out = tiny_train(tmp_path, data)
        assert (out / "checkpoint.ckpt").exists()
        trace = read_table_csv(out / "loss_trace.csv", ["outer", "epoch", "loss"])
        assert trace.shape == (3, 3)
        resolved = json.loads((out / "resolved_config.json").read_text())
        assert resolved["command"] == "train" and resolved["n_epoch"] == 3

    def test_beta_bound_exits_2(self, tmp_path):
        data = tiny_dataset(tmp_path / "data")
        result = CliRunner().invoke(main, [
            "train", "--data", str(data), "--out", str(tmp_path / "x"),
            "--beta", "0.5", "--epochs", "1", "--outer", "1",
            "--d-model", "8", "--n-head", "2",
        ])
        assert result.exit_code == 2

    def test_sb_mode_flag_recorded(self, tmp_path):
        data = tiny_dataset(tmp_path / "data")
        out = tiny_train(tmp_path, data, extra=("--sb-mode",), name="sb")
        resolved = json.loads((out / "resolved_config.json").read_text())
        assert resolved["sb_mode"] is True

    def test_generate_reproducible_and_m1(self, tmp_path):
        data = tiny_dataset(tmp_path / "data")
        out = tiny_train(tmp_path, data)
        for name in ("g1", "g2"):
            result = run_cli([
                "generate", "--checkpoint", str(out / "checkpoint.ckpt"),
                "--paths", "3", "--seed", "9", "--out", str(tmp_path / name),
            ])
            assert result.exit_code == 0, result.output
        assert (tmp_path / "g1" / "synthetic.csv").read_bytes() == \
            (tmp_path / "g2" / "synthetic.csv").read_bytes()
        result = run_cli([
            "generate", "--checkpoint", str(out / "checkpoint.ckpt"),
            "--paths", "1", "--seed", "0", "--out", str(tmp_path / "m1"),
        ])
        assert result.exit_code == 0
        assert read_paths_csv(tmp_path / "m1" / "synthetic.csv").n_paths == 1

    def test_generate_version_mismatch_exits_3(self, tmp_path):
        data = tiny_dataset(tmp_path / "data")
        out = tiny_train(tmp_path, data)
        ckpt = out / "checkpoint.ckpt"
        raw = bytearray(ckpt.read_bytes())
        raw[14:18] = (77).to_bytes(4, "little")
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(bytes(raw))
        result = CliRunner().invoke(main, [
            "generate", "--checkpoint", str(bad), "--paths", "1",
            "--out", str(tmp_path / "gv"),
        ])
        assert result.exit_code == 3
        assert "77" in result.output

    def test_resume_refuses_grid_mismatch(self, tmp_path):
        data = tiny_dataset(tmp_path / "data", length=6)
        out = tiny_train(tmp_path, data)
        other = tiny_dataset(tmp_path / "other", length=8)
        result = CliRunner().invoke(main, [
            "train", "--data", str(other), "--out", str(tmp_path / "r"),
            "--resume", str(out / "checkpoint.ckpt"),
            "--epochs", "1", "--outer", "1", "--d-model", "8", "--n-head", "2",
            "--batch-size", "4",
        ])
        assert result.exit_code == 2
        assert "grid" in result.output

    def test_resume_continues(self, tmp_path):
        data = tiny_dataset(tmp_path / "data")
        out = tiny_train(tmp_path, data)
        result = run_cli([
            "train", "--data", str(data), "--out", str(tmp_path / "resumed"),
            "--resume", str(out / "checkpoint.ckpt"), "--seed", "8",
            "--epochs", "2", "--outer", "1", "--d-model", "8", "--n-head", "2",
            "--batch-size", "4",
        ])
        assert result.exit_code == 0, result.output

    def test_rerun_from_resolved_config_byte_identical(self, tmp_path):
        data = tiny_dataset(tmp_path / "data")
        out = tiny_train(tmp_path, data)
        rerun = tmp_path / "rerun"
        result = run_cli([
            "train", "--config", str(out / "resolved_config.json"),
            "--out", str(rerun),
        ])
        assert result.exit_code == 0, result.output
        assert (out / "checkpoint.ckpt").read_bytes() == (rerun / "checkpoint.ckpt").read_bytes()
        assert (out / "loss_trace.csv").read_bytes() == (rerun / "loss_trace.csv").read_bytes()

    def test_unknown_config_key_exits_2(self, tmp_path):
        data = tiny_dataset(tmp_path / "data")
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"command": "train", "bogus_key": 1}))
        result = CliRunner().invoke(main, [
            "train", "--data", str(data), "--config", str(cfg),
            "--out", str(tmp_path / "x"),
        ])
        assert result.exit_code == 2
        assert "bogus_key" in result.output


class TestHestonBench:
    def test_identical_inputs_identical_histograms(self, tmp_path):
        data = tiny_dataset(tmp_path / "data", paths=8, length=30)
        out = tmp_path / "bench"
        result = run_cli([
            "heston-bench", str(data), str(data), str(data),
            "--dt", "0.01", "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        report = json.loads((out / "calibration_report.json").read_text())
        for payload in report["histograms"].values():
            assert payload["counts"]["data"] == payload["counts"]["sbbts"]
            assert payload["counts"]["data"] == payload["counts"]["sb_mode"]
        assert (out / "estimates.csv").exists()
        assert (out / "histograms.csv").exists()

    def test_missing_file_exits_3(self, tmp_path):
        data = tiny_dataset(tmp_path / "data", paths=4, length=20)
        result = CliRunner().invoke(main, [
            "heston-bench", str(data), str(tmp_path / "nope.csv"), str(data),
            "--out", str(tmp_path / "x"),
        ])
        assert result.exit_code == 3

    def test_wrong_columns_exit_3(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("path_id,date_index,a,b\n0,0,1.0,2.0\n0,1,1.0,2.0\n")
        data = tiny_dataset(tmp_path / "data", paths=4, length=20)
        result = CliRunner().invoke(main, [
            "heston-bench", str(data), str(bad), str(data), "--out", str(tmp_path / "x"),
        ])
        assert result.exit_code == 3


class TestEval:
    def test_identical_inputs_zero_gaps(self, tmp_path):
        data = tiny_dataset(tmp_path / "data", paths=10, length=30)
        out = tmp_path / "eval"
        result = run_cli(["eval", str(data), str(data), "--out", str(out)])
        assert result.exit_code == 0, result.output
        report = json.loads((out / "eval_report.json").read_text())
        assert all(v == 0.0 for v in report["tail_risk_gap"].values())
        tail = (out / "tail_risk.csv").read_text().splitlines()
        assert tail[0] == "metric,real,synth,gap"
        assert {"acf.csv", "correlation_real.csv", "correlation_synth.csv",
                "histogram.csv"} <= {p.name for p in out.iterdir()}
        assert report["histogram"]["real"] == report["histogram"]["synth"]

    def test_missing_file_exits_3(self, tmp_path):
        data = tiny_dataset(tmp_path / "data", paths=4, length=10)
        result = CliRunner().invoke(main, [
            "eval", str(data), str(tmp_path / "missing.csv"), "--out", str(tmp_path / "x"),
        ])
        assert result.exit_code == 3

    def test_dimension_mismatch_exits_3(self, tmp_path):
        data = tiny_dataset(tmp_path / "data", paths=4, length=10)
        one_dim = tmp_path / "one.csv"
        rows = ["path_id,date_index,y0"]
        for p in range(3):
            for t in range(10):
                rows.append(f"{p},{t},{0.1 * t}")
        one_dim.write_text("\n".join(rows) + "\n")
        result = CliRunner().invoke(main, [
            "eval", str(data), str(one_dim), "--out", str(tmp_path / "x"),
        ])
        assert result.exit_code == 3


def write_returns_csv(path: Path, returns: np.ndarray):
    names = [f"inst{j}" for j in range(returns.shape[1])]
    write_table_csv(path, names, [[float(v) for v in row] for row in returns])
    return names


class TestFactorCommands:
    def _returns(self, n=320, d=6, seed=0):
        rng = np.random.default_rng(seed)
        loadings = rng.normal(size=(d, 2))
        return rng.normal(size=(n, 2)) @ loadings.T + 0.05 * rng.normal(size=(n, d))

    def test_factor_fit_and_reconstruction_round_trip(self, tmp_path):
        returns = self._returns()
        csv_path = tmp_path / "returns.csv"
        write_returns_csv(csv_path, returns)
        out = tmp_path / "fit"
        result = run_cli([
            "factor-fit", str(csv_path), "--factors", "4", "--clusters", "2",
            "--seed", "1", "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        model, names = load_factor_model(out / "factor_model.bin")
        assert names[0] == "inst0"
        factors_mat = pca_transform(model.pca, returns)
        residuals = returns - (factors_mat @ model.pca.components.T + model.pca.mean)
        recon = reconstruct(factors_mat, model, residuals)
        np.testing.assert_allclose(recon, returns, atol=1e-8)

    def test_factor_fit_too_many_factors_exits_2(self, tmp_path):
        csv_path = tmp_path / "returns.csv"
        write_returns_csv(csv_path, self._returns(n=50, d=4))
        result = CliRunner().invoke(main, [
            "factor-fit", str(csv_path), "--factors", "10", "--out", str(tmp_path / "x"),
        ])
        assert result.exit_code == 2

    def test_augment_noise_mode(self, tmp_path):
        returns = self._returns(n=40, d=3)
        csv_path = tmp_path / "returns.csv"
        write_returns_csv(csv_path, returns)
        out = tmp_path / "aug"
        result = run_cli([
            "augment", str(csv_path), "--mode", "noise", "--copies", "2",
            "--lambda", "0.5", "--window", "30", "--seed", "2", "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        inputs = (out / "augmented_inputs.csv").read_text().splitlines()
        # 11 windows x 2 copies x 29 input rows + header
        assert len(inputs) == 1 + 11 * 2 * 29
        targets = (out / "augmented_targets.csv").read_text().splitlines()
        assert len(targets) == 1 + 11 * 2
        assert set(targets[1].split(",")[1:]) <= {"0", "1"}

    def test_augment_generator_mode(self, tmp_path):
        returns = self._returns(n=60, d=4)
        csv_path = tmp_path / "returns.csv"
        write_returns_csv(csv_path, returns)
        fit_out = tmp_path / "fit"
        assert run_cli([
            "factor-fit", str(csv_path), "--factors", "2", "--clusters", "2",
            "--seed", "1", "--out", str(fit_out),
        ]).exit_code == 0
        # train a tiny generator on sliding factor windows of length 5
        model, _ = load_factor_model(fit_out / "factor_model.bin")
        factor_series = pca_transform(model.pca, returns)
        from tsbridge.factors import sliding_windows
        from tsbridge.series import TimeGrid, TimeSeriesDataset, write_paths_csv

        windows = sliding_windows(factor_series, length=5)
        ds = TimeSeriesDataset(values=windows, grid=TimeGrid.uniform(4),
                               dim_names=["f0", "f1"])
        data_csv = tmp_path / "factor_windows.csv"
        write_paths_csv(data_csv, ds)
        train_out = tiny_train(tmp_path, data_csv, name="factor_gen")
        out = tmp_path / "aug_gen"
        result = run_cli([
            "augment", str(csv_path), "--mode", "generator",
            "--model", str(fit_out / "factor_model.bin"),
            "--checkpoint", str(train_out / "checkpoint.ckpt"),
            "--window", "5", "--paths", "3", "--seed", "4", "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        targets = (out / "augmented_targets.csv").read_text().splitlines()
        assert len(targets) == 1 + 3

    def test_features_command(self, tmp_path):
        rng = np.random.default_rng(21)
        returns = rng.normal(size=(260, 3))
        csv_path = tmp_path / "returns.csv"
        write_returns_csv(csv_path, returns)
        out = tmp_path / "feat"
        result = run_cli([
            "features", str(csv_path), "--start", "255", "--end", "257",
            "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        lines = (out / "features.csv").read_text().splitlines()
        assert len(lines) == 1 + 3 * 3  # 3 dates x 3 instruments
        header = lines[0].split(",")
        assert header[:3] == ["date_index", "instrument", "feature.return_t-1_market"]
        assert "feature.cum_ret_252" in header
        assert "feature.mkt_mean_21" in header

    def test_features_range_before_horizon_exits_2(self, tmp_path):
        csv_path = tmp_path / "returns.csv"
        write_returns_csv(csv_path, np.random.default_rng(22).normal(size=(300, 2)))
        result = CliRunner().invoke(main, [
            "features", str(csv_path), "--start", "10", "--end", "12",
            "--out", str(tmp_path / "x"),
        ])
        assert result.exit_code == 2

    def test_augment_generator_missing_model_exits_2(self, tmp_path):
        csv_path = tmp_path / "returns.csv"
        write_returns_csv(csv_path, self._returns(n=40, d=3))
        result = CliRunner().invoke(main, [
            "augment", str(csv_path), "--mode", "generator", "--out", str(tmp_path / "x"),
        ])
        assert result.exit_code == 2


class TestThreadsFlag:
    def test_invalid_threads_rejected(self, tmp_path):
        result = CliRunner().invoke(main, [
            "simulate-heston", "--paths", "2", "--length", "4",
            "--threads", "0", "--out", str(tmp_path),
        ])
        assert result.exit_code == 2

    def test_outputs_independent_of_threads(self, tmp_path):
        for name, threads in (("t1", "1"), ("t4", "4")):
            result = run_cli([
                "simulate-heston", "--paths", "4", "--length", "6", "--seed", "2",
                "--threads", threads, "--out", str(tmp_path / name),
            ])
            assert result.exit_code == 0
        assert (tmp_path / "t1" / "paths.csv").read_bytes() == \
            (tmp_path / "t4" / "paths.csv").read_bytes()

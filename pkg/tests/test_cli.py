import json

import numpy as np
import pytest

from persreg import storage
from persreg.cli import auroc_rank_sum, main
from persreg.model import HyperParams
from persreg.optimizer import fit


def run_cli(*args):
    return main([str(a) for a in args])


@pytest.fixture
def sim_dir(tmp_path):
    out = tmp_path / "sim"
    assert run_cli("simulate", "--n", 60, "--p", 2, "--k", 3, "--seed", 5, "--out", out) == 0
    return out


class TestSimulate:
    def test_writes_expected_files(self, sim_dir):
        for name in ("X.csv", "Y.csv", "U.csv", "omega_true.csv", "meta.json"):
            assert (sim_dir / name).exists()
        _, X = storage.read_matrix_csv(sim_dir / "X.csv")
        _, omega = storage.read_matrix_csv(sim_dir / "omega_true.csv")
        assert X.shape == (60, 2)
        assert omega.shape == (60, 2)
        meta = storage.load_json(sim_dir / "meta.json")
        assert meta["seed"] == 5
        assert sorted(meta["train_rows"] + meta["test_rows"]) == list(range(60))

    def test_rerun_is_byte_identical(self, sim_dir, tmp_path):
        again = tmp_path / "again"
        run_cli("simulate", "--n", 60, "--p", 2, "--k", 3, "--seed", 5, "--out", again)
        for name in ("X.csv", "Y.csv", "U.csv", "omega_true.csv", "meta.json"):
            assert (sim_dir / name).read_bytes() == (again / name).read_bytes()

    def test_zero_samples_is_input_error(self, tmp_path):
        assert run_cli(
            "simulate", "--n", 0, "--p", 2, "--k", 3, "--seed", 1, "--out", tmp_path / "x"
        ) == 2


def train_args(sim_dir, out, *extra):
    return (
        "train",
        "--x", sim_dir / "X.csv",
        "--y", sim_dir / "Y.csv",
        "--u", sim_dir / "U.csv",
        "--out", out,
        "--seed", 5,
        *extra,
    )


class TestTrain:
    def test_outputs_and_shapes(self, sim_dir, tmp_path):
        out = tmp_path / "fit"
        assert run_cli(*train_args(sim_dir, out, "--max-iters", 30)) == 0
        model = storage.load_model(out / "model.json")
        assert model.weights.shape == (3,)
        _, Z = storage.read_matrix_csv(out / "Z_embedding.csv")
        assert Z.shape == (60, model.factorization.latent_dim)
        _, phi = storage.read_matrix_csv(out / "phi.csv")
        assert phi.shape == (3, 1)

    def test_model_roundtrip_is_byte_identical(self, sim_dir, tmp_path):
        out = tmp_path / "fit"
        run_cli(*train_args(sim_dir, out, "--max-iters", 10))
        path = out / "model.json"
        model = storage.load_model(path)
        storage.save_model(out / "model2.json", model)
        assert path.read_bytes() == (out / "model2.json").read_bytes()

    def test_zero_iterations_equals_initialization(self, sim_dir, tmp_path):
        out = tmp_path / "fit0"
        assert run_cli(*train_args(sim_dir, out, "--max-iters", 0)) == 0
        cli_model = storage.load_model(out / "model.json")
        _, X = storage.read_matrix_csv(sim_dir / "X.csv")
        _, Y = storage.read_matrix_csv(sim_dir / "Y.csv")
        table = storage.read_covariates_csv(sim_dir / "U.csv")
        from persreg.model import Dataset

        ds = Dataset(predictors=X, responses=Y[:, 0], covariates=table)
        api_model = fit(ds, HyperParams(max_iters=0), seed=5)
        assert np.array_equal(
            cli_model.factorization.loadings, api_model.factorization.loadings
        )
        assert np.array_equal(cli_model.weights, api_model.weights)

    def test_instrumented_trace_respects_step_bound(self, sim_dir, tmp_path):
        out = tmp_path / "fit_tr"
        assert run_cli(
            *train_args(
                sim_dir, out, "--max-iters", 40, "--distance-match", 0.0,
                "--rate-floor", 1.0, "--instrument",
            )
        ) == 0
        records = storage.read_trace_jsonl(out / "trace.jsonl")
        assert len(records) == 40
        for r in records:
            assert set(r) >= {"t", "alpha", "objective", "com_step", "com_drift",
                              "mean_neighbors", "step_bound", "drift_bound"}
            assert r["com_step"] <= r["step_bound"] + 1e-10

    def test_unknown_config_key_rejected(self, sim_dir, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"l1": 0.1, "momentum": 0.9}))
        assert run_cli(*train_args(sim_dir, tmp_path / "f", "--config", cfg)) == 2

    def test_config_merged_under_flags(self, sim_dir, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"max_iters": 5, "l1": 0.7}))
        out = tmp_path / "fit_cfg"
        assert run_cli(*train_args(sim_dir, out, "--config", cfg, "--l1", 0.2)) == 0
        model = storage.load_model(out / "model.json")
        assert model.hyper.max_iters == 5  # from config
        assert model.hyper.l1 == 0.2  # flag wins

    def test_dimension_mismatch_is_input_error(self, sim_dir, tmp_path):
        other = tmp_path / "other"
        run_cli("simulate", "--n", 30, "--p", 2, "--k", 3, "--seed", 1, "--out", other)
        code = run_cli(
            "train",
            "--x", sim_dir / "X.csv",
            "--y", other / "Y.csv",
            "--u", sim_dir / "U.csv",
            "--out", tmp_path / "bad",
            "--seed", 1,
        )
        assert code == 2

    @pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
    def test_numerical_blowup_is_exit_3(self, sim_dir, tmp_path):
        code = run_cli(
            *train_args(
                sim_dir, tmp_path / "boom", "--max-iters", 50,
                "--distance-match", 0.0, "--lr-init", 1e300,
            )
        )
        assert code == 3


@pytest.fixture
def fitted(sim_dir, tmp_path):
    out = tmp_path / "fit"
    run_cli(*train_args(sim_dir, out, "--max-iters", 30))
    return out


class TestPredict:
    def test_nearest_copy_roundtrip(self, sim_dir, fitted, tmp_path):
        # predicting at a training covariate row with one neighbor echoes
        # that row's coefficients
        model = storage.load_model(fitted / "model.json")
        _, X = storage.read_matrix_csv(sim_dir / "X.csv")
        test_x = tmp_path / "tx.csv"
        test_u = tmp_path / "tu.csv"
        storage.write_matrix_csv(test_x, X[3:4], ["x0", "x1"])
        storage.write_covariates_csv(test_u, model.train_covariates.take([3]))
        out = tmp_path / "pred.csv"
        assert run_cli(
            "predict", "--model", fitted / "model.json", "--x", test_x,
            "--u", test_u, "--out", out, "--n-neighbors", 1, "--include-theta",
        ) == 0
        lines = out.read_text().splitlines()
        cells = lines[1].split(",")
        assert cells[2] == "3"
        theta = model.factorization.dictionary.T @ model.factorization.loadings[:, 3]
        got = np.array([float(v) for v in cells[3:]])
        assert np.array_equal(got, theta)

    def test_empty_input_gives_header_only(self, fitted, tmp_path):
        test_x = tmp_path / "tx.csv"
        test_u = tmp_path / "tu.csv"
        test_x.write_text("x0,x1\n")
        test_u.write_text("u0,u1,u2\n")
        out = tmp_path / "pred.csv"
        assert run_cli(
            "predict", "--model", fitted / "model.json", "--x", test_x,
            "--u", test_u, "--out", out,
        ) == 0
        assert out.read_text() == "row_id,y_hat,neighbor_ids\n"

    def test_corrupted_model_is_input_error(self, sim_dir, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{\"task\": \"regression\"}")
        code = run_cli(
            "predict", "--model", bad, "--x", sim_dir / "X.csv",
            "--u", sim_dir / "U.csv", "--out", tmp_path / "p.csv",
        )
        assert code == 2

    def test_schema_mismatch_is_input_error(self, sim_dir, fitted, tmp_path):
        narrow = tmp_path / "tu.csv"
        narrow.write_text("u0,u1\n0.1,0.2\n")
        code = run_cli(
            "predict", "--model", fitted / "model.json", "--x", sim_dir / "X.csv",
            "--u", narrow, "--out", tmp_path / "p.csv",
        )
        assert code == 2


class TestClassificationPipeline:
    def test_end_to_end(self, sim_dir, tmp_path):
        # relabel the simulated responses and run the logistic path
        _, Y = storage.read_matrix_csv(sim_dir / "Y.csv")
        labels = (Y[:, 0] > np.median(Y[:, 0])).astype(float)
        ycsv = tmp_path / "labels.csv"
        storage.write_matrix_csv(ycsv, labels, ["y"])
        out = tmp_path / "clf"
        assert run_cli(
            "train", "--x", sim_dir / "X.csv", "--y", ycsv,
            "--u", sim_dir / "U.csv", "--out", out, "--seed", 5,
            "--task", "classification", "--max-iters", 20,
        ) == 0
        pred = tmp_path / "pred.csv"
        assert run_cli(
            "predict", "--model", out / "model.json", "--x", sim_dir / "X.csv",
            "--u", sim_dir / "U.csv", "--out", pred,
        ) == 0
        y_hat = np.array([
            float(line.split(",")[1]) for line in pred.read_text().splitlines()[1:]
        ])
        assert np.all((y_hat > 0.0) & (y_hat < 1.0))
        metrics = tmp_path / "m.json"
        assert run_cli(
            "evaluate", "--predictions", pred, "--responses", ycsv,
            "--out", metrics, "--task", "classification",
        ) == 0
        got = storage.load_json(metrics)
        assert {"auroc", "accuracy", "mse", "r2"} <= set(got)
        assert got["auroc"] > 0.5  # better than chance on training data


class TestEvaluate:
    def write_predictions(self, path, values):
        lines = ["row_id,y_hat,neighbor_ids"]
        lines += [f"{i},{float(v)!r},0" for i, v in enumerate(values)]
        path.write_text("\n".join(lines) + "\n")

    def test_perfect_predictions(self, tmp_path):
        y = [0.5, 1.5, -0.25, 2.0]
        pred = tmp_path / "p.csv"
        self.write_predictions(pred, y)
        truth = tmp_path / "y.csv"
        storage.write_matrix_csv(truth, np.array(y), ["y"])
        out = tmp_path / "m.json"
        assert run_cli("evaluate", "--predictions", pred, "--responses", truth, "--out", out) == 0
        metrics = storage.load_json(out)
        assert metrics["r2"] == pytest.approx(1.0)
        assert metrics["mse"] == 0.0

    def test_uninformative_classifier_auroc(self, tmp_path):
        pred = tmp_path / "p.csv"
        self.write_predictions(pred, [0.5, 0.5, 0.5, 0.5])
        truth = tmp_path / "y.csv"
        storage.write_matrix_csv(truth, np.array([0.0, 1.0, 0.0, 1.0]), ["y"])
        out = tmp_path / "m.json"
        assert run_cli(
            "evaluate", "--predictions", pred, "--responses", truth,
            "--out", out, "--task", "classification",
        ) == 0
        assert storage.load_json(out)["auroc"] == pytest.approx(0.5)

    def test_four_point_auroc_hand_case(self, tmp_path):
        pred = tmp_path / "p.csv"
        self.write_predictions(pred, [0.1, 0.4, 0.35, 0.8])
        truth = tmp_path / "y.csv"
        storage.write_matrix_csv(truth, np.array([0.0, 0.0, 1.0, 1.0]), ["y"])
        out = tmp_path / "m.json"
        run_cli(
            "evaluate", "--predictions", pred, "--responses", truth,
            "--out", out, "--task", "classification",
        )
        assert storage.load_json(out)["auroc"] == pytest.approx(0.75)

    def test_length_mismatch_is_input_error(self, tmp_path):
        pred = tmp_path / "p.csv"
        self.write_predictions(pred, [0.1, 0.2])
        truth = tmp_path / "y.csv"
        storage.write_matrix_csv(truth, np.array([1.0]), ["y"])
        assert run_cli(
            "evaluate", "--predictions", pred, "--responses", truth,
            "--out", tmp_path / "m.json",
        ) == 2

    def test_recovery_against_truth(self, sim_dir, fitted, tmp_path):
        meta = storage.load_json(sim_dir / "meta.json")
        _, omega = storage.read_matrix_csv(sim_dir / "omega_true.csv")
        pred = tmp_path / "p.csv"
        _, Y = storage.read_matrix_csv(sim_dir / "Y.csv")
        self.write_predictions(pred, list(Y[:, 0]))
        out = tmp_path / "m.json"
        assert run_cli(
            "evaluate", "--predictions", pred, "--responses", sim_dir / "Y.csv",
            "--out", out, "--omega-true", sim_dir / "omega_true.csv",
            "--model", fitted / "model.json",
        ) == 0
        metrics = storage.load_json(out)
        model = storage.load_model(fitted / "model.json")
        est = model.factorization.dictionary.T @ model.factorization.loadings
        assert metrics["recovery"] == pytest.approx(np.linalg.norm(est - omega.T))
        assert meta["n"] == 60


def test_auroc_rank_sum_ties_and_separation():
    assert auroc_rank_sum([0.2, 0.8], [0.0, 1.0]) == 1.0
    assert auroc_rank_sum([0.8, 0.2], [0.0, 1.0]) == 0.0
    assert auroc_rank_sum([0.5, 0.5, 0.5], [0.0, 1.0, 0.0]) == 0.5

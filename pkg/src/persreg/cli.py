"""Command-line entry point: simulate, train, predict, evaluate.

Exit codes: 0 on success, 2 for input or validation problems, 3 for
numerical failures inside the solvers.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import storage
from .model import CLASSIFICATION, REGRESSION, TASKS, Dataset, HyperParams
from .objective import NumericalError
from .optimizer import fit
from .population import ElasticNetConvergenceError
from .predictor import predict_point
from .simulate import generate
from .storage import ensure_dir

HYPER_KEYS = tuple(storage.hyper_to_dict(HyperParams()))
CONFIG_KEYS = HYPER_KEYS + ("task",)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="persreg",
        description="Per-sample linear and logistic models with a learned "
        "covariate metric.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="write a synthetic dataset")
    sim.add_argument("--n", type=int, required=True, help="number of samples")
    sim.add_argument("--p", type=int, required=True, help="number of predictors")
    sim.add_argument("--k", type=int, required=True, help="number of covariates")
    sim.add_argument("--seed", type=int, required=True)
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--noise-std", type=float, default=0.1)
    sim.add_argument(
        "--normalize-rows",
        action="store_true",
        help="rescale predictor rows to unit l1 norm",
    )

    tr = sub.add_parser("train", help="fit a personalized model")
    tr.add_argument("--x", required=True, help="predictors CSV")
    tr.add_argument("--y", required=True, help="responses CSV")
    tr.add_argument("--u", required=True, help="covariates CSV")
    tr.add_argument("--schema", help="covariate schema JSON")
    tr.add_argument("--out", required=True, help="output directory")
    tr.add_argument("--seed", type=int, required=True)
    tr.add_argument("--task", choices=TASKS)
    tr.add_argument("--config", help="JSON config merged under explicit flags")
    tr.add_argument("--trace", action="store_true", help="write trace.jsonl")
    tr.add_argument(
        "--instrument",
        action="store_true",
        help="add center-of-mass bound fields to the trace (implies --trace)",
    )
    for key in HYPER_KEYS:
        flag = "--" + key.replace("_", "-")
        if key in ("latent_dim", "n_neighbors", "max_iters"):
            tr.add_argument(flag, type=int, default=None)
        else:
            tr.add_argument(flag, type=float, default=None)

    pr = sub.add_parser("predict", help="predict with a trained model")
    pr.add_argument("--model", required=True, help="model.json path")
    pr.add_argument("--x", required=True, help="test predictors CSV")
    pr.add_argument("--u", required=True, help="test covariates CSV")
    pr.add_argument("--out", required=True, help="predictions CSV path")
    pr.add_argument("--n-neighbors", type=int, default=None)
    pr.add_argument(
        "--include-theta",
        action="store_true",
        help="append the assembled coefficient columns",
    )

    ev = sub.add_parser("evaluate", help="score predictions against truth")
    ev.add_argument("--predictions", required=True)
    ev.add_argument("--responses", required=True, help="true responses CSV")
    ev.add_argument("--out", required=True, help="metrics JSON path")
    ev.add_argument("--task", choices=TASKS, default=REGRESSION)
    ev.add_argument("--omega-true", help="true coefficients CSV (row per sample)")
    ev.add_argument("--model", help="model.json, required with --omega-true")
    return parser


def run_simulate(args) -> int:
    if args.n < 1 or args.p < 1 or args.k < 1:
        raise ValueError("--n, --p and --k must all be >= 1")
    inst = generate(
        args.n,
        args.p,
        args.k,
        seed=args.seed,
        noise_std=args.noise_std,
        normalize_rows=args.normalize_rows,
    )
    out = ensure_dir(args.out)
    ds = inst.dataset
    storage.write_matrix_csv(
        out / "X.csv", ds.predictors, [f"x{j}" for j in range(ds.p)]
    )
    storage.write_matrix_csv(out / "Y.csv", ds.responses, ["y"])
    storage.write_covariates_csv(out / "U.csv", ds.covariates)
    storage.write_matrix_csv(
        out / "omega_true.csv",
        inst.coefficients_true.T,
        [f"theta{j}" for j in range(ds.p)],
    )
    storage.dump_json(
        out / "meta.json",
        {
            "seed": inst.seed,
            "n": ds.n,
            "p": ds.p,
            "k": ds.k,
            "noise_std": args.noise_std,
            "normalized_rows": bool(args.normalize_rows),
            "train_rows": inst.train_rows.tolist(),
            "test_rows": inst.test_rows.tolist(),
        },
    )
    return 0


def _hyper_from_args(args) -> HyperParams:
    overrides = {}
    if args.config:
        config = storage.load_json(args.config)
        if not isinstance(config, dict):
            raise ValueError("config file must hold a JSON object")
        unknown = set(config) - set(CONFIG_KEYS)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        overrides.update({k: v for k, v in config.items() if k in HYPER_KEYS})
    for key in HYPER_KEYS:
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    # an explicit fixed radius replaces the automatic target
    if overrides.get("radius") is not None and "target_neighbors" not in overrides:
        overrides["target_neighbors"] = None
    return HyperParams(**overrides)


def _task_from_args(args) -> str | None:
    if args.task:
        return args.task
    if args.config:
        config = storage.load_json(args.config)
        if isinstance(config, dict):
            return config.get("task")
    return None


def run_train(args) -> int:
    hyper = _hyper_from_args(args)
    _, X = storage.read_matrix_csv(args.x)
    _, Y = storage.read_matrix_csv(args.y)
    if Y.shape[1] != 1:
        raise ValueError("responses CSV must have exactly one column")
    kinds = storage.read_schema(args.schema) if args.schema else None
    table = storage.read_covariates_csv(args.u, kinds=kinds)
    task = _task_from_args(args) or REGRESSION
    dataset = Dataset(
        predictors=X, responses=Y[:, 0], covariates=table, task=task
    )

    records = []
    tracing = args.trace or args.instrument
    model = fit(
        dataset,
        hyper,
        seed=args.seed,
        instrument=args.instrument,
        trace_fn=records.append if tracing else None,
    )

    out = ensure_dir(args.out)
    storage.save_model(out / "model.json", model)
    storage.write_matrix_csv(
        out / "Z_embedding.csv",
        model.factorization.loadings.T,
        [f"z{j}" for j in range(model.factorization.latent_dim)],
    )
    storage.write_matrix_csv(out / "phi.csv", model.weights, ["phi"])
    if tracing:
        storage.write_trace_jsonl(out / "trace.jsonl", records)
    return 0


def run_predict(args) -> int:
    model = storage.load_model(args.model)
    if args.n_neighbors is not None:
        model = type(model)(
            factorization=model.factorization,
            weights=model.weights,
            population_coef=model.population_coef,
            train_covariates=model.train_covariates,
            task=model.task,
            hyper=model.hyper.with_overrides(n_neighbors=args.n_neighbors),
        )
    _, X = storage.read_matrix_csv(args.x)
    table = storage.read_covariates_csv(args.u, kinds=list(model.train_covariates.kinds))
    if X.shape[0] != len(table) and X.size:
        raise ValueError("test predictors and covariates must have equal rows")
    if X.size and X.shape[1] != model.n_predictors:
        raise ValueError(
            f"test predictors have {X.shape[1]} columns, model expects "
            f"{model.n_predictors}"
        )

    header = ["row_id", "y_hat", "neighbor_ids"]
    if args.include_theta:
        header += [f"theta{j}" for j in range(model.n_predictors)]
    lines = [",".join(header)]
    for i in range(X.shape[0]):
        pred = predict_point(model, X[i], table.row(i))
        cells = [
            str(i),
            repr(float(pred.y_hat)),
            ";".join(str(int(j)) for j in pred.neighbor_ids),
        ]
        if args.include_theta:
            cells += [repr(float(v)) for v in pred.coefficients]
        lines.append(",".join(cells))
    with open(args.out, "w") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")
    return 0


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=float)
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc_rank_sum(scores, labels) -> float:
    """Area under the ROC curve via the rank-sum statistic (ties midranked)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    n_pos = int(np.sum(labels == 1.0))
    n_neg = int(np.sum(labels == 0.0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC needs both classes present")
    ranks = _midranks(scores)
    pos_sum = float(np.sum(ranks[labels == 1.0]))
    return (pos_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _read_predictions(path) -> np.ndarray:
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln]
    if not lines:
        raise ValueError(f"{path}: empty predictions file")
    header = lines[0].split(",")
    if "y_hat" not in header:
        raise ValueError(f"{path}: missing y_hat column")
    col = header.index("y_hat")
    return np.array([float(ln.split(",")[col]) for ln in lines[1:]], dtype=float)


def run_evaluate(args) -> int:
    y_hat = _read_predictions(args.predictions)
    _, truth = storage.read_matrix_csv(args.responses)
    if truth.shape[1] != 1:
        raise ValueError("responses CSV must have exactly one column")
    y_true = truth[:, 0]
    if y_hat.shape[0] != y_true.shape[0]:
        raise ValueError(
            f"got {y_hat.shape[0]} predictions for {y_true.shape[0]} responses"
        )

    metrics: dict = {}
    if y_true.size:
        metrics["mse"] = float(np.mean((y_hat - y_true) ** 2))
        degenerate = (
            y_true.size < 2
            or float(np.std(y_hat)) == 0.0
            or float(np.std(y_true)) == 0.0
        )
        if degenerate:
            metrics["r2"] = 0.0
            metrics["r2_degenerate"] = True
        else:
            corr = float(np.corrcoef(y_hat, y_true)[0, 1])
            metrics["r2"] = corr * corr
    else:
        metrics["mse"] = 0.0
        metrics["r2"] = 0.0
        metrics["r2_degenerate"] = True

    if args.task == CLASSIFICATION:
        if not np.all(np.isin(y_true, (0.0, 1.0))):
            raise ValueError("classification truth must be 0/1")
        metrics["auroc"] = auroc_rank_sum(y_hat, y_true)
        metrics["accuracy"] = float(np.mean((y_hat >= 0.5) == (y_true == 1.0)))

    if args.omega_true:
        if not args.model:
            raise ValueError("--omega-true requires --model for the estimate")
        model = storage.load_model(args.model)
        _, omega_rows = storage.read_matrix_csv(args.omega_true)
        estimated = model.factorization.dictionary.T @ model.factorization.loadings
        if omega_rows.T.shape != estimated.shape:
            raise ValueError(
                f"true coefficients {omega_rows.T.shape} do not match the "
                f"model's {estimated.shape}"
            )
        metrics["recovery"] = float(np.linalg.norm(estimated - omega_rows.T))

    storage.dump_json(args.out, metrics)
    return 0


_HANDLERS = {
    "simulate": run_simulate,
    "train": run_train,
    "predict": run_predict,
    "evaluate": run_evaluate,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except (NumericalError, ElasticNetConvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

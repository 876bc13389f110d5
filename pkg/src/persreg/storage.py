"""CSV and JSON serialization for the command-line workflow.

Numbers are written with shortest round-trip formatting (Python's repr), so
re-serializing parsed artifacts is byte-identical and seeded pipelines can
be compared file for file.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .model import (
    CATEGORICAL,
    CONTINUOUS,
    CovariateTable,
    Factorization,
    HyperParams,
    TrainedModel,
)


def _fmt(value) -> str:
    return repr(float(value))


def write_matrix_csv(path, matrix, header) -> None:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim == 1:
        matrix = matrix[:, None]
    if len(header) != matrix.shape[1]:
        raise ValueError("header width must match matrix")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in matrix:
            writer.writerow([_fmt(v) for v in row])


def read_matrix_csv(path) -> tuple:
    """Returns (header, float matrix with one row per data line)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty CSV") from None
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{line_no}: expected {len(header)} cells")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise ValueError(f"{path}:{line_no}: non-numeric cell") from None
    matrix = np.asarray(rows, dtype=float) if rows else np.empty((0, len(header)))
    return header, matrix


def write_covariates_csv(path, table: CovariateTable) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(table.names)
        for i in range(len(table)):
            row = []
            for col, kind in zip(table.columns, table.kinds):
                row.append(_fmt(col[i]) if kind == CONTINUOUS else str(col[i]))
            writer.writerow(row)


def read_covariates_csv(path, kinds=None) -> CovariateTable:
    """Read a covariate table; without an explicit schema, columns that parse
    as numbers become continuous and the rest categorical."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            names = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty CSV") from None
        raw = [row for row in reader if row]
    for line_no, row in enumerate(raw, start=2):
        if len(row) != len(names):
            raise ValueError(f"{path}:{line_no}: expected {len(names)} cells")
    columns = list(zip(*raw)) if raw else [() for _ in names]
    if kinds is None:
        kinds = []
        for col in columns:
            try:
                [float(v) for v in col]
                kinds.append(CONTINUOUS)
            except ValueError:
                kinds.append(CATEGORICAL)
    if len(kinds) != len(names):
        raise ValueError("schema does not cover every covariate column")
    parsed = []
    for col, kind in zip(columns, kinds):
        if kind == CONTINUOUS:
            parsed.append(np.array([float(v) for v in col], dtype=float))
        elif kind == CATEGORICAL:
            parsed.append(np.array([str(v) for v in col], dtype=object))
        else:
            raise ValueError(f"unknown covariate kind {kind!r}")
    return CovariateTable.from_columns(parsed, kinds, names)


def read_schema(path) -> list:
    data = load_json(path)
    if not isinstance(data, dict) or "columns" not in data:
        raise ValueError(f"{path}: schema must be an object with a 'columns' list")
    kinds = []
    for entry in data["columns"]:
        if not isinstance(entry, dict) or "kind" not in entry:
            raise ValueError(f"{path}: each schema column needs a 'kind'")
        kinds.append(entry["kind"])
    return kinds


def dump_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


def hyper_to_dict(hyper: HyperParams) -> dict:
    return {
        "l1": hyper.l1,
        "distance_match": hyper.distance_match,
        "weights_anchor": hyper.weights_anchor,
        "latent_dim": hyper.latent_dim,
        "radius": hyper.radius,
        "target_neighbors": hyper.target_neighbors,
        "lr_init": hyper.lr_init,
        "lr_decay": hyper.lr_decay,
        "init_noise": hyper.init_noise,
        "rate_floor": hyper.rate_floor,
        "n_neighbors": hyper.n_neighbors,
        "max_iters": hyper.max_iters,
        "rel_tol": hyper.rel_tol,
    }


def hyper_from_dict(data: dict) -> HyperParams:
    allowed = set(hyper_to_dict(HyperParams()))
    unknown = set(data) - allowed
    if unknown:
        raise ValueError(f"unknown hyperparameter keys: {sorted(unknown)}")
    return HyperParams(**data)


def model_to_dict(model: TrainedModel) -> dict:
    table = model.train_covariates
    rows = []
    for i in range(len(table)):
        row = []
        for col, kind in zip(table.columns, table.kinds):
            row.append(float(col[i]) if kind == CONTINUOUS else str(col[i]))
        rows.append(row)
    return {
        "task": model.task,
        "hyper": hyper_to_dict(model.hyper),
        "dictionary": model.factorization.dictionary.tolist(),
        "loadings": model.factorization.loadings.tolist(),
        "weights": model.weights.tolist(),
        "population_coef": model.population_coef.tolist(),
        "covariates": {
            "names": list(table.names),
            "kinds": list(table.kinds),
            "rows": rows,
        },
    }


def model_from_dict(data: dict) -> TrainedModel:
    try:
        cov = data["covariates"]
        names, kinds, rows = cov["names"], cov["kinds"], cov["rows"]
        columns = list(zip(*rows)) if rows else [() for _ in names]
        table = CovariateTable.from_columns(
            [
                np.array(col, dtype=float if kind == CONTINUOUS else object)
                for col, kind in zip(columns, kinds)
            ],
            kinds,
            names,
        )
        fact = Factorization(
            loadings=np.asarray(data["loadings"], dtype=float),
            dictionary=np.asarray(data["dictionary"], dtype=float),
        )
        return TrainedModel(
            factorization=fact,
            weights=np.asarray(data["weights"], dtype=float),
            population_coef=np.asarray(data["population_coef"], dtype=float),
            train_covariates=table,
            task=data["task"],
            hyper=hyper_from_dict(data["hyper"]),
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed model file: {exc}") from exc


def save_model(path, model: TrainedModel) -> None:
    dump_json(path, model_to_dict(model))


def load_model(path) -> TrainedModel:
    return model_from_dict(load_json(path))


def write_trace_jsonl(path, records) -> None:
    with open(path, "w") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True))
            fh.write("\n")


def read_trace_jsonl(path) -> list:
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def ensure_dir(path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path

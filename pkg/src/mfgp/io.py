"""CSV and model-file formats.

CSV files carry a header row and write every float as ``%.16e`` (17
significant digits), so identical arrays always give identical bytes.

Model files are JSON::

    {"format": "mfgp-model", "format_version": 1,
     "operator": {...}, "hyperparameters": {...}, "dataset": {...},
     "nlml": float, "jitter": float}

The Cholesky factor is not stored; loading re-conditions the GP on the
stored dataset. Files with a newer ``format_version`` are rejected.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .model import HyperParams, MultiFidelityDataset, TrainedModel, build_model
from .operators import LinearOperatorSpec

MODEL_FORMAT = "mfgp-model"
MODEL_FORMAT_VERSION = 1


class FormatError(ValueError):
    """A file does not follow the documented layout."""


def fmt(value) -> str:
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.16e}"


def x_columns(dim: int) -> list[str]:
    return [f"x_{d + 1}" for d in range(dim)]


def write_csv(path, header: list[str], rows) -> None:
    """Write ``rows`` (strings pass through, numbers go through :func:`fmt`)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_table(path, required: list[str] | None = None) -> tuple[list[str], np.ndarray]:
    """Header and float rows of a CSV file."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise FormatError(f"{path}: missing header row")
    header = [h.strip() for h in rows[0]]
    if required is not None and header != required:
        raise FormatError(f"{path}: expected columns {required}, got {header}")
    data = np.empty((len(rows) - 1, len(header)))
    for i, r in enumerate(rows[1:]):
        if len(r) != len(header):
            raise FormatError(f"{path}, line {i + 2}: expected {len(header)} fields, got {len(r)}")
        try:
            data[i] = [float(c) for c in r]
        except ValueError as exc:
            raise FormatError(f"{path}, line {i + 2}: {exc}") from None
    return header, data


def _dim_from_header(path, header, trailing: list[str]) -> int:
    dim = len(header) - len(trailing)
    if dim < 1 or header != x_columns(dim) + trailing:
        raise FormatError(f"{path}: expected columns x_1..x_D followed by {trailing}, got {header}")
    return dim


def read_observations(path) -> tuple[np.ndarray, np.ndarray]:
    """``(X, y)`` from a dataset CSV with columns ``x_1..x_D, y``."""
    header, data = read_table(path)
    dim = _dim_from_header(path, header, ["y"])
    return data[:, :dim], data[:, dim]


def read_points(path) -> np.ndarray:
    """Query points from a CSV with columns ``x_1..x_D``."""
    header, data = read_table(path)
    _dim_from_header(path, header, [])
    return data


def write_observations(path, X, y) -> None:
    X = np.asarray(X, dtype=float)
    write_csv(path, x_columns(X.shape[1]) + ["y"], (list(x) + [v] for x, v in zip(X, y)))


PREDICTION_COLUMNS = ["u_mean", "u_std", "f_mean", "f_std"]


def write_predictions(path, X, u, f) -> None:
    """Prediction CSV: ``x_1..x_D, u_mean, u_std, f_mean, f_std``."""
    X = np.asarray(X, dtype=float)
    X = X.reshape(len(u.mean), X.shape[-1] if X.ndim == 2 else 1)
    rows = (list(X[i]) + [u.mean[i], u.std[i], f.mean[i], f.std[i]] for i in range(len(X)))
    write_csv(path, x_columns(X.shape[1]) + PREDICTION_COLUMNS, rows)


def write_history(path, history, dim: int) -> None:
    """Active-learning CSV: ``iteration, n2, x*_1..x*_D, max_Vf, rel_err_u, rel_err_f``."""
    header = ["iteration", "n2"] + [f"x*_{d + 1}" for d in range(dim)] + ["max_Vf", "rel_err_u", "rel_err_f"]
    rows = ([str(s.iteration), str(s.n_high)] + list(s.selected) + [s.max_var_f, s.rel_err_u, s.rel_err_f]
            for s in history.steps)
    write_csv(path, header, rows)


# ---------------------------------------------------------------------------
# model files
# ---------------------------------------------------------------------------


def model_to_dict(model: TrainedModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "format_version": MODEL_FORMAT_VERSION,
        "operator": model.operator.to_dict(),
        "hyperparameters": model.hyperparams.to_dict(),
        "dataset": model.dataset.to_dict(),
        "nlml": model.nlml_value,
        "jitter": model.jitter,
    }


def model_from_dict(d: dict) -> TrainedModel:
    if d.get("format") != MODEL_FORMAT:
        raise FormatError(f"not a model file (format={d.get('format')!r})")
    version = d.get("format_version")
    if not isinstance(version, int) or version < 1:
        raise FormatError(f"invalid model format_version {version!r}")
    if version > MODEL_FORMAT_VERSION:
        raise FormatError(f"model format_version {version} is newer than supported ({MODEL_FORMAT_VERSION})")
    try:
        op = LinearOperatorSpec.from_dict(d["operator"])
        hp = HyperParams.from_dict(d["hyperparameters"])
        data = MultiFidelityDataset.from_dict(d["dataset"])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"incomplete model file: {exc}") from None
    return build_model(data, op, hp)


def save_model(path, model: TrainedModel) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n", encoding="utf-8")


def load_model(path) -> TrainedModel:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}") from None
    return model_from_dict(d)

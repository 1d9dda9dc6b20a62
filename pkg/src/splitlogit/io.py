"""Delimited-text ingestion and the JSON model file."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import Dataset, HyperParams, SplitFit

__all__ = [
    "DataError",
    "Table",
    "read_table",
    "ingest",
    "parse_labels",
    "MODEL_FORMAT",
    "MODEL_VERSION",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
]

MODEL_FORMAT = "splitlogit-model"
MODEL_VERSION = 1
_MISSING = {"", "na", "nan", "null", "none", "?"}


class DataError(ValueError):
    """Input data cannot be used as given."""


@dataclass
class Table:
    names: List[str]
    x: np.ndarray
    labels: Optional[List[str]]


def read_table(path: str, label_column: Optional[str] = None, delimiter: str = ",",
               require_label: bool = True) -> Table:
    """Parse a headed delimited file into numeric predictors and raw labels.

    Every column except ``label_column`` is a predictor. Missing or
    non-numeric cells raise :class:`DataError` naming the row (1-based,
    header excluded) and column.
    """
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc.strerror}") from None
    with fh:
        rows = list(csv.reader(fh, delimiter=delimiter))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise DataError("duplicate column names in header")
    body = rows[1:]
    if not body:
        raise DataError(f"{path} has a header but no data rows")
    li = None
    if label_column is not None:
        if label_column not in header:
            if require_label:
                raise DataError(f"label column {label_column!r} not in header {header}")
        else:
            li = header.index(label_column)
    names = [h for i, h in enumerate(header) if i != li]
    x = np.empty((len(body), len(names)))
    labels = [] if li is not None else None
    missing = []
    for r, row in enumerate(body, start=1):
        if len(row) != len(header):
            raise DataError(f"row {r} has {len(row)} fields, header has {len(header)}")
        k = 0
        for i, cell in enumerate(row):
            cell = cell.strip()
            if i == li:
                if cell.lower() in _MISSING:
                    missing.append((r, header[i]))
                labels.append(cell)
                continue
            if cell.lower() in _MISSING:
                missing.append((r, header[i]))
                x[r - 1, k] = np.nan
            else:
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"row {r}, column {header[i]!r}: non-numeric value {cell!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"row {r}, column {header[i]!r}: non-finite value {cell!r}")
                x[r - 1, k] = v
            k += 1
    if missing:
        shown = ", ".join(f"row {r} column {c!r}" for r, c in missing[:20])
        more = f" (and {len(missing) - 20} more)" if len(missing) > 20 else ""
        raise DataError(f"missing values at {shown}{more}")
    return Table(names, x, labels)


def parse_labels(labels: Sequence[str], positive_label: Optional[str]) -> np.ndarray:
    if positive_label is not None:
        distinct = sorted(set(labels))
        if positive_label not in distinct:
            raise DataError(f"positive label {positive_label!r} does not occur; labels are {distinct}")
        if len(distinct) > 2:
            raise DataError(f"more than two distinct labels: {distinct}")
        return np.array([1.0 if v == positive_label else -1.0 for v in labels])
    out = np.empty(len(labels))
    for i, v in enumerate(labels):
        try:
            f = float(v)
        except ValueError:
            raise DataError(f"unparseable label {v!r} in row {i + 1}; "
                            "labels must be 0/1 or -1/+1 (or pass a positive label)") from None
        if f not in (-1.0, 0.0, 1.0):
            raise DataError(f"unparseable label {v!r} in row {i + 1}; labels must be 0/1 or -1/+1")
        out[i] = f
    vals = set(out.tolist())
    if {-1.0, 0.0} <= vals:
        raise DataError("labels mix the 0/1 and -1/+1 conventions")
    return np.where(out == 1.0, 1.0, -1.0)


def ingest(path: str, label_column: str, positive_label: Optional[str] = None,
           delimiter: str = ",") -> Dataset:
    """Read a labeled file into a standardized :class:`Dataset`.

    Constant predictor columns trigger a warning and are kept with their
    coefficients fixed at zero.
    """
    tab = read_table(path, label_column, delimiter)
    y = parse_labels(tab.labels, positive_label)
    return Dataset.from_raw(tab.x, y, tab.names)


# ---------------------------------------------------------------------------
# Model file
# ---------------------------------------------------------------------------

def _names(fit: SplitFit, names: Sequence[str]) -> List[str]:
    names = list(names) if names else [f"x{j + 1}" for j in range(fit.p)]
    if len(names) != fit.p:
        raise ValueError("number of feature names does not match the fit")
    return names


def model_to_dict(fit: SplitFit, col_means, col_scales, feature_names: Sequence[str] = ()) -> dict:
    """JSON-ready description of a fit on the original predictor scale."""
    names = _names(fit, feature_names)
    hp = fit.hyper
    trip = [{"model": g + 1, "variable": names[j], "value": float(fit.coefs_original[j, g])}
            for g in range(fit.g) for j in np.flatnonzero(fit.coefs_original[:, g])]
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "alpha": hp.alpha,
        "lambda_sparsity": hp.lambda_s,
        "lambda_diversity": hp.lambda_d,
        "groups": hp.g,
        "tol": hp.tol,
        "max_sweeps": hp.max_sweeps,
        "features": names,
        "col_means": [float(v) for v in col_means],
        "col_scales": [float(v) for v in col_scales],
        "intercepts": [float(v) for v in fit.intercepts_original],
        "coefficients": trip,
        "diagnostics": {
            "converged": bool(fit.converged),
            "sweeps": int(fit.sweeps_used),
            "objective": float(fit.objective_value),
        },
    }


def model_from_dict(d: dict) -> Tuple[SplitFit, List[str], np.ndarray, np.ndarray]:
    """Inverse of :func:`model_to_dict`: ``(fit, names, col_means, col_scales)``."""
    if d.get("format") != MODEL_FORMAT:
        raise DataError("not a model file")
    if d.get("version") != MODEL_VERSION:
        raise DataError(f"unsupported model file version {d.get('version')!r}")
    try:
        names = list(d["features"])
        means = np.asarray(d["col_means"], dtype=float)
        scales = np.asarray(d["col_scales"], dtype=float)
        hp = HyperParams(alpha=d["alpha"], lambda_s=d["lambda_sparsity"],
                         lambda_d=d["lambda_diversity"], g=d["groups"], tol=d["tol"],
                         max_sweeps=d["max_sweeps"])
        b0 = np.asarray(d["intercepts"], dtype=float)
        p, G = len(names), hp.g
        B = np.zeros((p, G))
        index = {nm: j for j, nm in enumerate(names)}
        for t in d["coefficients"]:
            B[index[t["variable"]], int(t["model"]) - 1] = float(t["value"])
        diag = d.get("diagnostics", {})
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed model file: {exc}") from None
    if b0.shape != (G,) or means.shape != (p,) or scales.shape != (p,):
        raise DataError("malformed model file: inconsistent dimensions")
    coefs_std = B * scales[:, None]
    b0_std = b0 + means @ B
    fit = SplitFit(b0_std, coefs_std, b0, B, hp, bool(diag.get("converged", True)),
                   int(diag.get("sweeps", 0)), float(diag.get("objective", float("nan"))))
    return fit, names, means, scales


def save_model(path: str, fit: SplitFit, data: Dataset) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(fit, data.col_means, data.col_scales, data.feature_names), fh, indent=1)
        fh.write("\n")


def load_model(path: str) -> Tuple[SplitFit, List[str], np.ndarray, np.ndarray]:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from None
    return model_from_dict(d)

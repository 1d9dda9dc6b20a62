"""Domain types and the pure math of split logistic regression.

Everything here is free of iteration logic: losses, penalties, the joint
objective, the ensembled predictor and the importance-ordered variable sets.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "Dataset",
    "HyperParams",
    "SplitFit",
    "ImportanceSets",
    "sigmoid",
    "logistic_loss",
    "sparsity_penalty",
    "diversity_penalty",
    "objective",
    "ensemble_linear_predictor",
    "ensemble_predict_proba",
    "ensemble_predict",
    "model_probabilities",
    "importance_sets",
]


# ---------------------------------------------------------------------------
# Scalar / vector helpers
# ---------------------------------------------------------------------------

def sigmoid(t):
    """Logistic function ``exp(t) / (1 + exp(t))``, overflow safe."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out if out.ndim else float(out)


def logistic_loss(margin):
    """``log(1 + exp(-margin))`` evaluated without overflow.

    ``margin`` is ``y * f(x)`` with ``y`` in {-1, +1}. Works elementwise on
    arrays and returns a float for scalar input.
    """
    m = np.asarray(margin, dtype=float)
    if not np.all(np.isfinite(m)):
        raise ValueError("margin must be finite")
    # log1p(exp(-|m|)) + max(-m, 0) is exact in both tails
    out = np.log1p(np.exp(-np.abs(m))) + np.maximum(-m, 0.0)
    return out if out.ndim else float(out)


def sparsity_penalty(beta_g, alpha: float) -> float:
    """Elastic-net penalty ``(1-alpha)/2 ||b||_2^2 + alpha ||b||_1`` (no intercept)."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    b = np.asarray(beta_g, dtype=float)
    return float(0.5 * (1.0 - alpha) * np.dot(b, b) + alpha * np.abs(b).sum())


def diversity_penalty(coefs) -> float:
    """Sum over ordered model pairs ``g != h`` of ``sum_j |b_jg| |b_jh|``.

    Each unordered pair is counted twice. ``coefs`` is a ``p x G`` matrix.
    """
    a = np.abs(np.asarray(coefs, dtype=float))
    if a.ndim == 1:
        a = a[:, None]
    if a.shape[1] < 1:
        raise ValueError("need at least one model")
    total = 0.0
    G = a.shape[1]
    for g in range(G):
        for h in range(G):
            if h != g:
                total += float(np.dot(a[:, g], a[:, h]))
    return total


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Dataset:
    """Standardized design with labels in {-1, +1}.

    ``x`` columns have mean 0 and mean-of-squares 1 (1/n convention).
    Constant columns are stored as zeros and carry ``col_scales == 0``;
    the solver never updates their coefficients.
    """

    x: np.ndarray
    y: np.ndarray
    col_means: np.ndarray
    col_scales: np.ndarray
    feature_names: tuple = field(default=())

    def __post_init__(self):
        x = np.asfortranarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 2:
            raise ValueError("x must be a 2-d array")
        if y.shape != (x.shape[0],):
            raise ValueError(f"y has shape {y.shape}, expected ({x.shape[0]},)")
        if not np.all((y == 1.0) | (y == -1.0)):
            raise ValueError("labels must be exactly -1 or +1")
        means = np.asarray(self.col_means, dtype=float)
        scales = np.asarray(self.col_scales, dtype=float)
        if means.shape != (x.shape[1],) or scales.shape != (x.shape[1],):
            raise ValueError("standardization metadata does not match x")
        names = tuple(self.feature_names) or tuple(f"x{j + 1}" for j in range(x.shape[1]))
        if len(names) != x.shape[1]:
            raise ValueError("feature_names length does not match x")
        for arr in (x, y, means, scales):
            arr.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "col_means", means)
        object.__setattr__(self, "col_scales", scales)
        object.__setattr__(self, "feature_names", names)

    @classmethod
    def from_raw(cls, x_raw, y, feature_names: Sequence[str] = ()) -> "Dataset":
        """Standardize raw predictors and map labels to {-1, +1}.

        Labels may be given as {0, 1} or {-1, +1}.
        """
        x_raw = np.asarray(x_raw, dtype=float)
        if x_raw.ndim != 2:
            raise ValueError("x must be a 2-d array")
        if not np.all(np.isfinite(x_raw)):
            raise ValueError("predictors contain non-finite values")
        y = _to_pm1(y)
        n = x_raw.shape[0]
        means = x_raw.mean(axis=0)
        centered = x_raw - means
        scales = np.sqrt((centered**2).sum(axis=0) / n)
        const = scales <= 1e-12 * np.maximum(1.0, np.abs(means))
        if np.any(const):
            names = list(feature_names) or [f"x{j + 1}" for j in range(x_raw.shape[1])]
            dropped = [names[j] for j in np.flatnonzero(const)]
            warnings.warn(f"constant columns kept with zero coefficients: {dropped}", stacklevel=2)
        scales = np.where(const, 0.0, scales)
        safe = np.where(const, 1.0, scales)
        x = np.where(const, 0.0, centered / safe)
        return cls(x, y, means, scales, tuple(feature_names))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def z(self) -> np.ndarray:
        """Labels recoded to {0, 1}."""
        return (self.y + 1.0) / 2.0

    @property
    def constant_mask(self) -> np.ndarray:
        return self.col_scales == 0.0

    def raw_x(self) -> np.ndarray:
        """Predictors back on their original scale."""
        return self.x * self.col_scales + self.col_means

    def subset(self, rows) -> "Dataset":
        """Rows ``rows`` re-standardized among themselves.

        The returned metadata still refers to the original measurement
        scale, so original-scale coefficients of a fit on the subset apply
        directly to raw rows of the parent.
        """
        rows = np.asarray(rows)
        return Dataset.from_raw_quiet(self.raw_x()[rows], self.y[rows], self.feature_names)

    @classmethod
    def from_raw_quiet(cls, x_raw, y, feature_names=()) -> "Dataset":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return cls.from_raw(x_raw, y, feature_names)

    def check_fittable(self) -> None:
        if np.all(self.y == 1.0) or np.all(self.y == -1.0):
            raise ValueError("both classes must be present to fit")


def _to_pm1(y) -> np.ndarray:
    y = np.asarray(y, dtype=float).ravel()
    vals = set(np.unique(y).tolist())
    if vals <= {-1.0, 1.0}:
        return y.copy()
    if vals <= {0.0, 1.0}:
        return 2.0 * y - 1.0
    raise ValueError(f"labels must be in {{0, 1}} or {{-1, +1}}, got {sorted(vals)}")


@dataclass(frozen=True)
class HyperParams:
    """Penalty levels and solver controls."""

    alpha: float = 0.75
    lambda_s: float = 0.0
    lambda_d: float = 0.0
    g: int = 10
    tol: float = 1e-12
    max_sweeps: int = 10000

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.lambda_s >= 0.0:
            raise ValueError(f"lambda_s must be nonnegative, got {self.lambda_s}")
        if not self.lambda_d >= 0.0:
            raise ValueError(f"lambda_d must be nonnegative, got {self.lambda_d}")
        if int(self.g) != self.g or self.g < 1:
            raise ValueError(f"g must be a positive integer, got {self.g}")
        if not self.tol > 0.0:
            raise ValueError("tol must be positive")
        if int(self.max_sweeps) != self.max_sweeps or self.max_sweeps < 1:
            raise ValueError("max_sweeps must be a positive integer")

    def replace(self, **changes) -> "HyperParams":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class SplitFit:
    """Fitted ensemble: G intercepts and a ``p x G`` coefficient matrix.

    ``intercepts``/``coefs`` are on the standardized scale of the training
    data; ``intercepts_original``/``coefs_original`` apply to raw inputs.
    """

    intercepts: np.ndarray
    coefs: np.ndarray
    intercepts_original: np.ndarray
    coefs_original: np.ndarray
    hyper: HyperParams
    converged: bool = True
    sweeps_used: int = 0
    objective_value: float = float("nan")

    def __post_init__(self):
        for name in ("intercepts", "coefs", "intercepts_original", "coefs_original"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.coefs.ndim != 2 or self.coefs.shape[1] != self.intercepts.shape[0]:
            raise ValueError("coefs must be p x G with G matching intercepts")
        if self.coefs_original.shape != self.coefs.shape:
            raise ValueError("original-scale coefficients have the wrong shape")

    @classmethod
    def from_standardized(cls, intercepts, coefs, data: Dataset, hyper: HyperParams, **kw) -> "SplitFit":
        intercepts = np.asarray(intercepts, dtype=float)
        coefs = np.asarray(coefs, dtype=float)
        scales = data.col_scales
        safe = np.where(scales == 0.0, 1.0, scales)
        coefs_orig = np.where((scales == 0.0)[:, None], 0.0, coefs / safe[:, None])
        icpt_orig = intercepts - data.col_means @ coefs_orig
        return cls(intercepts, coefs, icpt_orig, coefs_orig, hyper, **kw)

    @property
    def g(self) -> int:
        return self.coefs.shape[1]

    @property
    def p(self) -> int:
        return self.coefs.shape[0]

    def ensemble_intercept(self, original: bool = False) -> float:
        b0 = self.intercepts_original if original else self.intercepts
        return float(b0.mean())

    def ensemble_coefs(self, original: bool = False) -> np.ndarray:
        b = self.coefs_original if original else self.coefs
        return b.mean(axis=1)

    def flipped(self) -> "SplitFit":
        """Same fit with every parameter negated."""
        return SplitFit(-self.intercepts, -self.coefs, -self.intercepts_original,
                        -self.coefs_original, self.hyper, self.converged, self.sweeps_used)


@dataclass(frozen=True)
class ImportanceSets:
    """Nested variable sets ``A_1 ⊇ A_2 ⊇ ... ⊇ A_G``.

    ``sets[k - 1]`` holds the variables selected by at least ``k`` models.
    """

    sets: tuple
    multiplicity: np.ndarray

    def __getitem__(self, k: int) -> frozenset:
        if not 1 <= k <= len(self.sets):
            raise IndexError(f"k must be in 1..{len(self.sets)}")
        return self.sets[k - 1]

    def sizes(self) -> list:
        return [len(s) for s in self.sets]


# ---------------------------------------------------------------------------
# Objective and prediction
# ---------------------------------------------------------------------------

def _check_dims(fit: SplitFit, data: Dataset) -> None:
    if fit.p != data.p:
        raise ValueError(f"fit has p={fit.p} coefficients but data has p={data.p} columns")


def objective(fit: SplitFit, data: Dataset) -> float:
    """Joint penalized objective of all G models on ``data``.

    ``sum_g [mean loss_g + lambda_s P_s(b_g)] + lambda_d / 2 * sum_{g<h} P_d(b_g, b_h)``.
    """
    _check_dims(fit, data)
    hp = fit.hyper
    eta = fit.intercepts[None, :] + data.x @ fit.coefs
    loss = logistic_loss(data.y[:, None] * eta).mean(axis=0).sum()
    sparse = sum(sparsity_penalty(fit.coefs[:, g], hp.alpha) for g in range(fit.g))
    # each unordered pair once, matching the block weights u_jg of the solver
    return float(loss + hp.lambda_s * sparse + 0.25 * hp.lambda_d * diversity_penalty(fit.coefs))


def ensemble_linear_predictor(fit: SplitFit, x_new, original: bool = False) -> np.ndarray:
    """Average of the G linear predictors, ``b0_bar + x^T b_bar``."""
    x = np.asarray(x_new, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("inputs must be finite")
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != fit.p:
        raise ValueError(f"expected {fit.p} predictors, got {x.shape[1]}")
    eta = fit.ensemble_intercept(original) + x @ fit.ensemble_coefs(original)
    return eta[0] if single else eta


def ensemble_predict_proba(fit: SplitFit, x_new, original: bool = False):
    """P(y = +1 | x) of the ensembled model.

    ``original`` selects raw-scale inputs instead of standardized ones.
    """
    return sigmoid(ensemble_linear_predictor(fit, x_new, original))


def ensemble_predict(fit: SplitFit, x_new, original: bool = False):
    """Class labels in {-1, +1}; probability exactly 0.5 maps to +1."""
    prob = ensemble_predict_proba(fit, x_new, original)
    return np.where(np.asarray(prob) >= 0.5, 1.0, -1.0)


def model_probabilities(fit: SplitFit, x_new, original: bool = False) -> np.ndarray:
    """``m x G`` matrix of each individual model's probability."""
    x = np.atleast_2d(np.asarray(x_new, dtype=float))
    b0 = fit.intercepts_original if original else fit.intercepts
    b = fit.coefs_original if original else fit.coefs
    return sigmoid(b0[None, :] + x @ b)


def importance_sets(fit: SplitFit) -> ImportanceSets:
    mult = (fit.coefs != 0.0).sum(axis=1).astype(int)
    sets = tuple(frozenset(np.flatnonzero(mult >= k).tolist()) for k in range(1, fit.g + 1))
    return ImportanceSets(sets, mult)


def null_intercept(data: Dataset) -> float:
    """Logit of the class +1 proportion."""
    q = float(np.mean(data.y == 1.0))
    return math.log(q / (1.0 - q))


def zero_fit(data: Dataset, hyper: HyperParams, intercept: Optional[float] = 0.0) -> SplitFit:
    icpt = np.full(hyper.g, intercept)
    return SplitFit.from_standardized(icpt, np.zeros((data.p, hyper.g)), data, hyper)

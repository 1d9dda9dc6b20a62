"""Penalty grids, K-fold cross-validation and the alternating grid search."""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import Dataset, HyperParams, SplitFit, diversity_penalty, logistic_loss
from .solver import ConvergenceWarning, fit

log = logging.getLogger(__name__)

__all__ = [
    "Grid",
    "CvPoint",
    "CvPass",
    "CvReport",
    "make_grid",
    "grid_ratio",
    "lambda_s_max",
    "lambda_d_max",
    "stratified_folds",
    "cv_loss",
    "cv_path",
    "alternating_search",
    "NoSignalError",
]

DEFAULT_GRID_SIZE = 100
DEFAULT_MAX_PASSES = 10
# relative improvement the CV loss must show for a pass to be accepted
MIN_REL_DECREASE = 1e-6
BISECTION_STEPS = 20
BRACKET_REL_WIDTH = 0.01
RIDGE_NULL_COEF = 1e-3
LAMBDA_D_FLOOR = 1e-8
# tolerance of the many fits made while searching; the final refit uses the
# (tighter) tolerance of its hyperparameters
CV_TOL = 1e-8


class NoSignalError(ValueError):
    """No predictor is correlated with the response at all."""


@dataclass(frozen=True)
class Grid:
    values: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in ("sparsity", "diversity"):
            raise ValueError(f"unknown grid kind {self.kind!r}")
        v = np.asarray(self.values, dtype=float)
        if v.size > 1 and np.any(np.diff(v) >= 0):
            raise ValueError("grid values must be strictly descending")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)


def grid_ratio(n: int, p: int) -> float:
    """Smallest-to-largest grid ratio: 1e-4 when p < n, else 1e-2."""
    return 1e-4 if p < n else 1e-2


def make_grid(kind: str, l: int, lambda_max: float, n: int, p: int) -> Grid:
    """``l`` log-equispaced values from ``lambda_max`` down to ``eps * lambda_max``."""
    if not lambda_max > 0:
        raise ValueError("lambda_max must be positive")
    if l < 1:
        raise ValueError("grid size must be at least 1")
    if l == 1:
        return Grid(np.array([float(lambda_max)]), kind)
    eps = grid_ratio(n, p)
    values = lambda_max * np.power(eps, np.arange(l) / (l - 1))
    values[0] = lambda_max
    values[-1] = eps * lambda_max
    return Grid(values, kind)


# ---------------------------------------------------------------------------
# Search for the grid anchors
# ---------------------------------------------------------------------------

def _smallest_true(pred, start: float, floor: float = 0.0) -> float:
    """Smallest positive ``lam`` with ``pred(lam)`` true, to 1% relative width.

    A bracket is found by doubling or halving from ``start``; at most
    ``BISECTION_STEPS`` geometric bisections follow.
    """
    lam = float(start)
    if pred(lam):
        hi = lam
        lo = None
        for _ in range(60):
            cand = hi / 2.0
            if cand < floor:
                return hi
            if pred(cand):
                hi = cand
            else:
                lo = cand
                break
        if lo is None:
            return hi
    else:
        lo = lam
        hi = None
        for _ in range(60):
            cand = lo * 2.0
            if pred(cand):
                hi = cand
                break
            lo = cand
        if hi is None:
            raise RuntimeError("could not bracket the penalty boundary")
    for _ in range(BISECTION_STEPS):
        if hi / lo <= 1.0 + BRACKET_REL_WIDTH:
            break
        mid = math.sqrt(lo * hi)
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _quiet_fit(data, hp, init=None):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        return fit(data, hp, init)


def lambda_s_max(data: Dataset, alpha: float, g: int, lambda_d: float = 0.0,
                 tol: float = HyperParams.tol, max_sweeps: int = HyperParams.max_sweeps) -> float:
    """Smallest sparsity penalty for which every model is null.

    Closed form from the null-model optimality condition when
    ``lambda_d == 0`` and ``alpha > 0``; otherwise a bisection over fits.
    For ``alpha == 0`` no finite null point exists and the value at which
    every coefficient is at most ``RIDGE_NULL_COEF`` in size is returned.
    """
    data.check_fittable()
    q = float(np.mean(data.y == 1.0))
    score = np.abs(data.x.T @ (data.z - q)) / data.n
    score[data.constant_mask] = 0.0
    top = float(score.max())
    if top <= 1e-12:
        raise NoSignalError("no predictor has nonzero inner product with the centered response")
    if alpha > 0 and lambda_d == 0.0:
        # tiny safety factor so the fit at the grid top is null despite rounding
        return top / alpha * (1.0 + 1e-9)

    def hp(lam):
        return HyperParams(alpha=alpha, lambda_s=lam, lambda_d=lambda_d, g=g,
                           tol=tol, max_sweeps=max_sweeps)

    if alpha > 0:
        return _smallest_true(lambda lam: not np.any(_quiet_fit(data, hp(lam)).coefs),
                              top / alpha * (1.0 + 1e-9))
    return _smallest_true(lambda lam: np.abs(_quiet_fit(data, hp(lam)).coefs).max() <= RIDGE_NULL_COEF,
                          top / RIDGE_NULL_COEF)


def lambda_d_max(data: Dataset, alpha: float, g: int, lambda_s: float,
                 tol: float = HyperParams.tol, max_sweeps: int = HyperParams.max_sweeps) -> float:
    """Smallest diversity penalty whose fit has pairwise disjoint supports.

    Fits start from zero. When the models are already disjoint without a
    diversity penalty (every model null) ``LAMBDA_D_FLOOR`` is returned
    with a warning.
    """
    if g < 2:
        raise ValueError("the diversity penalty needs at least two models")

    def disjoint(lam):
        hp = HyperParams(alpha=alpha, lambda_s=lambda_s, lambda_d=lam, g=g,
                         tol=tol, max_sweeps=max_sweeps)
        return diversity_penalty(_quiet_fit(data, hp).coefs) == 0.0

    if disjoint(0.0):
        warnings.warn("all models are null at this sparsity level; "
                      "lambda_d_max falls back to the bracket floor", stacklevel=2)
        return LAMBDA_D_FLOOR
    return _smallest_true(disjoint, 1.0, floor=LAMBDA_D_FLOOR)


# ---------------------------------------------------------------------------
# Cross-validation
# ---------------------------------------------------------------------------

def stratified_folds(y, k: int, seed=0) -> np.ndarray:
    """Fold labels ``0..k-1`` from a seeded, class-stratified shuffle.

    Members of each class are dealt round-robin over the folds, continuing
    where the previous class stopped, so fold sizes differ by at most one.
    """
    y = np.asarray(y)
    n = y.shape[0]
    if k < 2 or k > n:
        raise ValueError(f"k must be in 2..{n}, got {k}")
    rng = np.random.default_rng(seed)
    folds = np.empty(n, dtype=int)
    offset = 0
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(idx.size)]
        folds[idx] = (offset + np.arange(idx.size)) % k
        offset = (offset + idx.size) % k
    return _check_folds(y, folds)


def _check_folds(y, folds):
    """Relabel folds to ``0..K-1``; every training part must hold both classes.

    A class confined to a single fold cannot be repaired by merging folds
    (the merged fold still holds the whole class), so this is an error.
    """
    _, folds = np.unique(folds, return_inverse=True)
    if folds.max() < 1:
        raise ValueError("at least two folds are needed")
    for cls in np.unique(y):
        where = np.unique(folds[y == cls])
        if where.size == 1:
            raise ValueError(f"every member of class {cls:+g} lies in fold {where[0] + 1}; "
                             "its training part would miss that class")
    return folds


@dataclass
class _Fold:
    train: Dataset
    x_test: np.ndarray
    y_test: np.ndarray


def _split(data: Dataset, folds: np.ndarray) -> List[_Fold]:
    raw = data.raw_x()
    out = []
    for f in range(int(folds.max()) + 1):
        test = folds == f
        train = Dataset.from_raw_quiet(raw[~test], data.y[~test], data.feature_names)
        out.append(_Fold(train, raw[test], data.y[test]))
    return out


def _holdout_loss(fit_: SplitFit, x_raw, y) -> float:
    eta = fit_.ensemble_intercept(True) + x_raw @ fit_.ensemble_coefs(True)
    return float(np.mean(logistic_loss(y * eta)))


def _tile(single: SplitFit, hyper: HyperParams) -> SplitFit:
    G = hyper.g
    return SplitFit(np.repeat(single.intercepts, G), np.repeat(single.coefs, G, axis=1),
                    np.repeat(single.intercepts_original, G),
                    np.repeat(single.coefs_original, G, axis=1), hyper,
                    single.converged, single.sweeps_used)


def _path_step(data: Dataset, hp: HyperParams, prev: Optional[SplitFit]) -> SplitFit:
    """Fit at ``hp`` warm-started from ``prev`` (the previous path point)."""
    if hp.lambda_d == 0.0 and hp.g > 1 and (prev is None or _is_collapsed(prev)):
        # without the diversity term identical models stay identical: fit one and tile
        return _tile(_quiet_fit(data, hp.replace(g=1), _first_model(prev)), hp)
    return _quiet_fit(data, hp, prev)


def _fold_path(fold: _Fold, hypers: Sequence[HyperParams]) -> np.ndarray:
    """Held-out losses along ``hypers``, warm-starting each fit from the last."""
    losses = np.empty(len(hypers))
    prev = None
    for i, hp in enumerate(hypers):
        prev = _path_step(fold.train, hp, prev)
        losses[i] = _holdout_loss(prev, fold.x_test, fold.y_test)
    return losses


def cv_path(data: Dataset, hypers: Sequence[HyperParams], folds: np.ndarray,
            threads: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """Mean and standard error of the held-out loss at each of ``hypers``.

    Within each fold the hyperparameters are visited in the given order
    with warm starts.
    """
    parts = _split(data, np.asarray(folds))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            per_fold = list(ex.map(lambda fo: _fold_path(fo, hypers), parts))
    else:
        per_fold = [_fold_path(fo, hypers) for fo in parts]
    L = np.vstack(per_fold)
    k = L.shape[0]
    mean = L.mean(axis=0)
    se = L.std(axis=0, ddof=1) / math.sqrt(k) if k > 1 else np.zeros(L.shape[1])
    return mean, se


def cv_loss(data: Dataset, hyper: HyperParams, k: int = 10, fold_assignment=None,
            seed=0, threads: int = 1) -> Tuple[float, float]:
    """K-fold cross-validated ensemble logistic loss and its standard error.

    ``fold_assignment`` holds labels ``1..k``; when omitted a stratified
    assignment is drawn from ``seed``.
    """
    if fold_assignment is None:
        folds = stratified_folds(data.y, k, seed)
    else:
        folds = np.asarray(fold_assignment, dtype=int) - 1
        if folds.shape != (data.n,) or folds.min() < 0:
            raise ValueError("fold_assignment must hold n labels in 1..k")
        folds = _check_folds(data.y, folds)
    mean, se = cv_path(data, [hyper], folds, threads)
    return float(mean[0]), float(se[0])


# ---------------------------------------------------------------------------
# Alternating search
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CvPoint:
    pass_index: int
    kind: str
    lambda_s: float
    lambda_d: float
    cv_loss: float
    cv_se: float


@dataclass(frozen=True)
class CvPass:
    index: int
    kind: str
    lambda_max: float
    best_loss: float
    best_lambda: float
    accepted: bool


@dataclass
class CvReport:
    """Everything the alternating search looked at and what it kept."""

    fold_assignment: np.ndarray
    alpha: float
    g: int
    points: List[CvPoint] = field(default_factory=list)
    passes: List[CvPass] = field(default_factory=list)
    lambda_s: float = float("nan")
    lambda_d: float = 0.0
    cv_loss: float = float("inf")

    @property
    def pass_count(self) -> int:
        return len(self.passes)

    def loss_trace(self) -> List[float]:
        """Accepted CV loss after each pass (non-increasing)."""
        out, cur = [], float("inf")
        for ps in self.passes:
            if ps.accepted:
                cur = ps.best_loss
            out.append(cur)
        return out

    def summary(self) -> dict:
        return {
            "alpha": self.alpha,
            "groups": self.g,
            "folds": int(self.fold_assignment.max()),
            "lambda_sparsity": self.lambda_s,
            "lambda_diversity": self.lambda_d,
            "cv_loss": self.cv_loss,
            "passes": self.pass_count,
        }


def _hp(alpha, g, ls, ld, tol, max_sweeps):
    return HyperParams(alpha=alpha, lambda_s=float(ls), lambda_d=float(ld), g=g,
                       tol=tol, max_sweeps=max_sweeps)


def alternating_search(data: Dataset, alpha: float = 0.75, g: int = 10, k: int = 10,
                       l_s: int = DEFAULT_GRID_SIZE, l_d: int = DEFAULT_GRID_SIZE, seed=0,
                       max_passes: int = DEFAULT_MAX_PASSES, threads: int = 1,
                       tol: float = HyperParams.tol, max_sweeps: int = HyperParams.max_sweeps,
                       lambda_s: Optional[float] = None, lambda_d: Optional[float] = None,
                       cv_tol: float = CV_TOL) -> Tuple[CvReport, SplitFit]:
    """Tune ``(lambda_s, lambda_d)`` by alternating one-dimensional grid searches.

    Starting from ``lambda_d = 0``, a pass over the sparsity grid (anchored
    at ``lambda_s_max`` for the current ``lambda_d``) is followed by a pass
    over the diversity grid (anchored at ``lambda_d_max`` for the current
    ``lambda_s``, with 0 appended), and so on. A pass's minimizer is kept
    only if it lowers the CV loss; the search stops at the first pass that
    does not, or after ``max_passes``. The returned fit is refit on all of
    ``data`` at the selected pair.

    Passing ``lambda_s`` (or ``lambda_d``) pins that penalty and runs a
    single pass over the other one.

    Fits made during the search (anchor searches and CV paths) use the
    convergence tolerance ``max(cv_tol, tol)``; the final refit uses ``tol``.
    """
    data.check_fittable()
    if lambda_s is not None and lambda_d is not None:
        raise ValueError("both penalties fixed: nothing to tune")
    folds = stratified_folds(data.y, k, seed)
    report = CvReport(folds + 1, alpha, g)
    search_tol = max(cv_tol, tol)
    mk = lambda ls, ld: _hp(alpha, g, ls, ld, search_tol, max_sweeps)

    def sparsity_pass(idx, ld):
        lmax = lambda_s_max(data, alpha, g, ld, search_tol, max_sweeps)
        grid = make_grid("sparsity", l_s, lmax, data.n, data.p).values
        mean, se = cv_path(data, [mk(ls, ld) for ls in grid], folds, threads)
        for ls, m, s in zip(grid, mean, se):
            report.points.append(CvPoint(idx, "sparsity", float(ls), float(ld), float(m), float(s)))
        j = int(np.argmin(mean))
        return lmax, float(grid[j]), float(mean[j]), [mk(ls, ld) for ls in grid[:j + 1]]

    def diversity_pass(idx, ls):
        lmax = lambda_d_max(data, alpha, g, ls, search_tol, max_sweeps)
        grid = np.append(make_grid("diversity", l_d, lmax, data.n, data.p).values, 0.0)
        mean, se = cv_path(data, [mk(ls, ld) for ld in grid], folds, threads)
        for ld, m, s in zip(grid, mean, se):
            report.points.append(CvPoint(idx, "diversity", float(ls), float(ld), float(m), float(s)))
        j = int(np.argmin(mean))
        return lmax, float(grid[j]), float(mean[j]), [mk(ls, ld) for ld in grid[:j + 1]]

    ls_opt = lambda_s
    ld_opt = 0.0 if lambda_d is None else float(lambda_d)
    best = float("inf")
    best_path = None
    if lambda_s is not None:
        order = ["diversity"] if g > 1 else []
    elif lambda_d is not None or g == 1:
        order = ["sparsity"]
    else:
        order = None  # alternate
    kind = "sparsity" if order is None else (order[0] if order else None)
    idx = 0
    while kind is not None and idx < max_passes:
        idx += 1
        if kind == "sparsity":
            lmax, lam, loss, path = sparsity_pass(idx, ld_opt)
        else:
            lmax, lam, loss, path = diversity_pass(idx, ls_opt)
        accepted = loss < best - MIN_REL_DECREASE * abs(best) if math.isfinite(best) else True
        if accepted:
            best, best_path = loss, path
            if kind == "sparsity":
                ls_opt = lam
            else:
                ld_opt = lam
        report.passes.append(CvPass(idx, kind, lmax, loss, lam, accepted))
        log.info("pass %d (%s): lambda_max=%.4g best=%.6g at %.4g%s", idx, kind, lmax, loss,
                 lam, "" if accepted else " (rejected)")
        if order is not None or not accepted:
            break
        kind = "diversity" if kind == "sparsity" else "sparsity"

    if ls_opt is None:
        raise RuntimeError("no sparsity penalty selected")
    report.lambda_s = float(ls_opt)
    report.lambda_d = float(ld_opt)
    report.cv_loss = best
    return report, _refit_along(data, best_path, tol)


def _refit_along(data: Dataset, path: Sequence[HyperParams], tol: float) -> SplitFit:
    """Full-data fit at ``path[-1]``, reached by the same warm-started
    sequence the cross-validation followed (the objective is not convex in
    all models jointly, so the starting point matters)."""
    prev = None
    for hp in path[:-1]:
        prev = _path_step(data, hp, prev)
    return fit(data, path[-1].replace(tol=tol), prev)


def _is_collapsed(f: SplitFit) -> bool:
    return bool(np.all(f.coefs == f.coefs[:, :1]) and np.all(f.intercepts == f.intercepts[0]))


def _first_model(f: Optional[SplitFit]) -> Optional[SplitFit]:
    if f is None:
        return None
    hp = f.hyper.replace(g=1)
    return SplitFit(f.intercepts[:1], f.coefs[:, :1], f.intercepts_original[:1],
                    f.coefs_original[:, :1], hp, f.converged, f.sweeps_used)

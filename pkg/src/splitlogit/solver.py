"""Block coordinate descent for the split logistic objective.

Each model block is updated by one cyclic pass of coordinate steps on an
IRLS quadratic surrogate of the logistic loss, taken at the model's current
parameters. Probabilities and weights are refreshed once per block; between
refreshes the surrogate residual is kept current so that every coordinate
step minimizes the surrogate exactly.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from . import _kernels as K
from .core import Dataset, HyperParams, SplitFit, sigmoid

log = logging.getLogger(__name__)

__all__ = [
    "WorkingState",
    "ConvergenceWarning",
    "soft_threshold",
    "update_intercept",
    "update_coefficient",
    "fit",
    "solution_path",
    "kkt_residuals",
    "FULL_SWEEP_EVERY",
    "MAX_HALVINGS",
]

FULL_SWEEP_EVERY = 10
MAX_HALVINGS = 5


class ConvergenceWarning(UserWarning):
    pass


def soft_threshold(v: float, t: float) -> float:
    """``sign(v) * max(|v| - t, 0)``."""
    if t < 0:
        raise ValueError("threshold must be nonnegative")
    return float(K.soft(float(v), float(t)))


@dataclass
class WorkingState:
    """Mutable per-fit state of the descent.

    ``p``/``w``/``eta_ref`` are the probabilities, clamped weights and
    linear predictor of each model at its last refresh; ``resid`` is the
    surrogate gradient residual ``z - p - w * (eta - eta_ref)``.
    All per-observation arrays are ``n x G``.
    """

    intercepts: np.ndarray
    coefs: np.ndarray
    eta: np.ndarray
    eta_ref: np.ndarray
    p: np.ndarray
    w: np.ndarray
    resid: np.ndarray
    active_sets: list

    @classmethod
    def initial(cls, data: Dataset, intercepts, coefs) -> "WorkingState":
        b0 = np.array(intercepts, dtype=float)
        B = np.array(coefs, dtype=float)
        if B.shape != (data.p, b0.shape[0]):
            raise ValueError("coefficient matrix does not match data and intercepts")
        eta = b0[None, :] + data.x @ B
        G = b0.shape[0]
        st = cls(b0, B, eta, eta.copy(), np.empty_like(eta), np.empty_like(eta),
                 np.empty_like(eta), [np.flatnonzero(B[:, g]) for g in range(G)])
        for g in range(G):
            st.refresh(g, data)
        return st

    def refresh(self, g: int, data: Dataset) -> None:
        """Re-expand the surrogate of model ``g`` at its current parameters."""
        w = np.empty(data.n)
        resid = np.empty(data.n)
        K.refresh(self.eta[:, g].copy(), data.z, w, resid)
        self.w[:, g] = w
        self.resid[:, g] = resid
        self.p[:, g] = sigmoid(self.eta[:, g])
        self.eta_ref[:, g] = self.eta[:, g]
        self.active_sets[g] = np.flatnonzero(self.coefs[:, g])

    def surrogate(self, g: int, data: Dataset, hyper: HyperParams, b0=None, beta=None) -> float:
        """Quadratic-surrogate block objective of model ``g`` (up to a constant).

        Evaluated at ``(b0, beta)``, defaulting to the current parameters.
        """
        b0 = self.intercepts[g] if b0 is None else b0
        beta = self.coefs[:, g] if beta is None else np.asarray(beta, dtype=float)
        z = data.z
        d = b0 + data.x @ beta - self.eta_ref[:, g]
        pr = self.p[:, g]
        w = self.w[:, g]
        quad = np.mean((pr - z) * d + 0.5 * w * d * d)
        others = np.abs(np.delete(self.coefs, g, axis=1)).sum(axis=1)
        u = hyper.alpha * hyper.lambda_s + 0.5 * hyper.lambda_d * others
        return float(quad + 0.5 * (1 - hyper.alpha) * hyper.lambda_s * beta @ beta
                     + np.abs(beta) @ u)


def update_intercept(state: WorkingState, g: int, data: Dataset) -> float:
    """Newton step on the intercept of model ``g``; applied in place."""
    w = state.w[:, g]
    if not np.all(w > 0):
        raise FloatingPointError("IRLS weights must be positive")
    delta = K.intercept_step(w, state.resid[:, g].copy())
    _apply(state, g, data, None, delta)
    return float(state.intercepts[g])


def update_coefficient(state: WorkingState, g: int, j: int, data: Dataset,
                       hyper: HyperParams) -> float:
    """Exact minimizer of the surrogate in coefficient ``(j, g)``; applied in place."""
    if not 0 <= j < data.p:
        raise IndexError(f"variable index {j} out of range")
    if data.col_scales[j] == 0.0:
        return float(state.coefs[j, g])
    old = float(state.coefs[j, g])
    new = K.coef_candidate(data.x[:, j], state.w[:, g].copy(), state.resid[:, g].copy(), old,
                           K.others_abs_sum(state.coefs, j, g), float(data.n),
                           hyper.alpha, hyper.lambda_s, hyper.lambda_d)
    if new != old:
        _apply(state, g, data, j, new - old)
    return float(new)


def _apply(state, g, data, j, delta):
    if delta == 0.0:
        return
    col = np.ones(data.n) if j is None else data.x[:, j]
    if j is None:
        state.intercepts[g] += delta
    else:
        state.coefs[j, g] += delta
    state.eta[:, g] += col * delta
    state.resid[:, g] -= state.w[:, g] * col * delta


def fit(data: Dataset, hyper: HyperParams, init: Optional[SplitFit] = None) -> SplitFit:
    """Minimize the split objective by cyclic block coordinate descent.

    Models are visited in order 1..G; within a model the intercept comes
    first, then the coefficients in column order. After the first full
    sweep only coordinates nonzero in some model are cycled, with a full
    sweep every ``FULL_SWEEP_EVERY`` restricted sweeps and before
    convergence is declared. Convergence: the ensemble-averaged parameters
    (intercept included) change by less than ``sqrt(tol)`` in every
    coordinate over one sweep.

    Starts from ``init`` when given, else from all zeros.
    """
    data.check_fittable()
    G = hyper.g
    if init is not None:
        if init.coefs.shape != (data.p, G):
            raise ValueError("warm start has the wrong shape")
        b0 = np.array(init.intercepts, dtype=float)
        B = np.array(init.coefs, dtype=float, order="C")
    else:
        b0 = np.zeros(G)
        B = np.zeros((data.p, G))
    free = ~data.constant_mask
    B[~free] = 0.0
    sweeps, status, obj = K.bcd(data.x, data.y, data.z, b0, B, free,
                                float(hyper.alpha), float(hyper.lambda_s), float(hyper.lambda_d),
                                float(hyper.tol), int(hyper.max_sweeps),
                                FULL_SWEEP_EVERY, MAX_HALVINGS)
    converged = status == K.STATUS_CONVERGED
    if not converged:
        why = "sweep limit reached" if status == K.STATUS_MAX_SWEEPS else \
            "objective increased even after damping"
        warnings.warn(f"no convergence after {sweeps} sweeps ({why}); "
                      f"lambda_s={hyper.lambda_s:.4g}, lambda_d={hyper.lambda_d:.4g}",
                      ConvergenceWarning, stacklevel=2)
    return SplitFit.from_standardized(b0, B, data, hyper, converged=converged,
                                      sweeps_used=int(sweeps), objective_value=float(obj))


def solution_path(data: Dataset, alpha: float, lambda_d: float, g: int,
                  lambda_s_grid: Sequence[float], init: Optional[SplitFit] = None,
                  **hyper_kw) -> List[SplitFit]:
    """Fits along a strictly descending sparsity grid, each warm-started
    from the previous solution."""
    grid = np.asarray(lambda_s_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("lambda_s_grid must be a nonempty 1-d sequence")
    if np.any(np.diff(grid) >= 0):
        raise ValueError("lambda_s_grid must be strictly descending")
    fits = []
    prev = init
    for lam in grid:
        hp = HyperParams(alpha=alpha, lambda_s=float(lam), lambda_d=lambda_d, g=g, **hyper_kw)
        prev = fit(data, hp, prev)
        fits.append(prev)
    return fits


def kkt_residuals(fit_: SplitFit, data: Dataset) -> np.ndarray:
    """Subgradient optimality violations, ``p x G``.

    For a nonzero coefficient this is the absolute value of the block
    gradient; for a zero coefficient it is how far the loss gradient exceeds
    the L1 weight ``u_jg``. Constant columns report zero.
    """
    hp = fit_.hyper
    B = fit_.coefs
    eta = fit_.intercepts[None, :] + data.x @ B
    prob = sigmoid(eta)
    grad = -(data.x.T @ (data.z[:, None] - prob)) / data.n
    absB = np.abs(B)
    others = absB.sum(axis=1, keepdims=True) - absB
    u = hp.alpha * hp.lambda_s + 0.5 * hp.lambda_d * others
    nz = B != 0.0
    res = np.where(nz,
                   np.abs(grad + (1 - hp.alpha) * hp.lambda_s * B + u * np.sign(B)),
                   np.maximum(np.abs(grad) - u, 0.0))
    res[data.constant_mask] = 0.0
    return res

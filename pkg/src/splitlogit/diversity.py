"""Diversity of an ensemble's members: disagreement-type measures and overlap.

All correctness-based measures take a boolean ``n x G`` matrix whose
entry ``(i, g)`` says whether model ``g`` classifies input ``i``
correctly, or the per-input counts ``l(x)`` of correct models.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Tuple

import numpy as np

from .core import SplitFit, ensemble_predict, model_probabilities, _to_pm1

__all__ = [
    "DiversityReport",
    "correctness_matrix",
    "entropy_measure",
    "pairwise_measures",
    "kw_variance",
    "generalized_diversity",
    "overlap",
    "diversity_report",
]


def _counts(correct_counts, g: int) -> np.ndarray:
    l = np.asarray(correct_counts)
    if g < 1:
        raise ValueError("g must be positive")
    if l.size and (l.min() < 0 or l.max() > g):
        raise ValueError(f"correct counts must lie in 0..{g}")
    return l.astype(float)


def correctness_matrix(fit: SplitFit, x, y, original: bool = True) -> np.ndarray:
    """``n x G`` booleans: does model ``g``'s own prediction match ``y_i``?

    A model predicts +1 when its probability is at least one half.
    """
    y = _to_pm1(y)
    pred = np.where(model_probabilities(fit, x, original) >= 0.5, 1.0, -1.0)
    return pred == y[:, None]


def entropy_measure(correct_counts, g: int) -> Tuple[np.ndarray, float]:
    """Per-input ``min(l, G - l) / (G - ceil(G/2))`` and its mean."""
    if g < 2:
        raise ValueError("the entropy measure needs at least two models")
    l = _counts(correct_counts, g)
    em = np.minimum(l, g - l) / (g - math.ceil(g / 2))
    return em, float(em.mean()) if em.size else float("nan")


def pairwise_measures(per_model_correct) -> Tuple[float, float]:
    """Mean disagreement and double-fault rates over ordered model pairs."""
    c = np.asarray(per_model_correct, dtype=bool)
    if c.ndim != 2 or c.shape[1] < 2:
        raise ValueError("need an n x G correctness matrix with G >= 2")
    G = c.shape[1]
    l = c.sum(axis=1)
    # ordered pairs that disagree: (correct, wrong) and (wrong, correct)
    dis = 2.0 * l * (G - l) / (G * (G - 1))
    wrong = G - l
    df = wrong * (wrong - 1.0) / (G * (G - 1))
    return float(dis.mean()), float(df.mean())


def kw_variance(correct_counts, g: int) -> float:
    """Mean of ``l (G - l) / G^2``."""
    l = _counts(correct_counts, g)
    return float(np.mean(l * (g - l)) / (g * g))


def generalized_diversity(correct_counts, g: int) -> float:
    """``1 - E[l(l-1)] / (G - 1) / E[l]``, using the empirical law of ``l``
    (the count of correct models); ``nan`` when no model is ever correct."""
    if g < 2:
        raise ValueError("generalized diversity needs at least two models")
    l = _counts(correct_counts, g).astype(np.int64)
    # 1 - sum l(l-1) / ((G-1) sum l), formed from exact integer sums so the
    # result is a single correctly rounded division
    total = int(l.sum())
    if total == 0:
        return float("nan")
    pairs = int(np.sum(l * (l - 1)))
    return ((g - 1) * total - pairs) / ((g - 1) * total)


def overlap(coefs) -> float:
    """Average fraction of models selecting each selected variable.

    ``nan`` when no variable is selected.
    """
    nz = np.asarray(coefs) != 0.0
    o = nz.mean(axis=1)
    sel = o > 0
    if not sel.any():
        return float("nan")
    return float(o[sel].mean())


@dataclass(frozen=True)
class DiversityReport:
    em: float
    dis: float
    df: float
    kw: float
    gd: float
    ov: float
    mr_ensemble: float
    mr_individual_mean: float
    per_model_mr: Tuple[float, ...]

    def to_record(self) -> dict:
        """Flat key-value form; per-model rates become ``mr_model_<g>``."""
        rec = asdict(self)
        per = rec.pop("per_model_mr")
        for g, v in enumerate(per, start=1):
            rec[f"mr_model_{g}"] = v
        return rec


def diversity_report(fit: SplitFit, x, y, original: bool = True) -> DiversityReport:
    """All diversity measures of ``fit`` on the labeled set ``(x, y)``."""
    if fit.g < 2:
        raise ValueError("diversity needs at least two models")
    y = _to_pm1(y)
    c = correctness_matrix(fit, x, y, original)
    l = c.sum(axis=1)
    G = fit.g
    _, em = entropy_measure(l, G)
    dis, df = pairwise_measures(c)
    per_model = 1.0 - c.mean(axis=0)
    mr = float(np.mean(ensemble_predict(fit, x, original) != y))
    return DiversityReport(
        em=em, dis=dis, df=df, kw=kw_variance(l, G), gd=generalized_diversity(l, G),
        ov=overlap(fit.coefs), mr_ensemble=mr, mr_individual_mean=float(per_model.mean()),
        per_model_mr=tuple(float(v) for v in per_model),
    )

"""Synthetic high-dimensional classification benchmarks.

Three correlation structures are supported for Gaussian predictors with
unit variances:

1. all predictors equicorrelated at ``rho``;
2. correlation ``rho1`` between active and inactive predictors and
   ``rho2`` within each of the two groups;
3. active predictors split into blocks of ``block_size``; ``rho2`` within
   a block and among the inactive predictors, ``rho1`` everywhere else.

Labels follow a logistic model in the active predictors whose intercept is
calibrated so that ``P(Y = 1)`` equals a target ``pi1``.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .core import Dataset, SplitFit, ensemble_predict, ensemble_predict_proba, logistic_loss, sigmoid
from .diversity import diversity_report
from .solver import kkt_residuals
from .tuning import alternating_search

log = logging.getLogger(__name__)

__all__ = [
    "ScenarioConfig",
    "MetricsRecord",
    "SimulatedData",
    "TRADEOFF_HEADER",
    "generate_coefficients",
    "generate_design",
    "factor_weights",
    "calibrate_intercept",
    "generate_labels",
    "simulate",
    "evaluate",
    "run_tradeoff_study",
    "write_tradeoff_csv",
]

CALIBRATION_DRAWS = 100_000
TEST_SIZE = 2000

TRADEOFF_HEADER = ("G", "MR", "MRbar", "EM", "OV", "DIS", "DF", "KW", "GD",
                   "n", "p", "zeta", "rho1", "rho2", "pi1", "reps", "seed")


@dataclass(frozen=True)
class ScenarioConfig:
    """Settings of one simulation scenario.

    For scenario 1 the common correlation is ``rho1`` and ``rho2`` must
    equal it (use :meth:`equicorrelated`).
    """

    scenario: int = 3
    n: int = 50
    p: int = 1500
    zeta: float = 0.2
    rho1: float = 0.2
    rho2: float = 0.5
    pi1: float = 0.4
    block_size: int = 25
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in (1, 2, 3):
            raise ValueError(f"scenario must be 1, 2 or 3, got {self.scenario}")
        if self.n < 2 or self.p < 1:
            raise ValueError("n must be at least 2 and p at least 1")
        if not 0.0 < self.zeta < 1.0:
            raise ValueError("zeta must lie in (0, 1)")
        if not 0.0 < self.pi1 < 1.0:
            raise ValueError("pi1 must lie in (0, 1)")
        for r in (self.rho1, self.rho2):
            if not -1.0 < r < 1.0:
                raise ValueError("correlations must lie in (-1, 1)")
        if self.scenario == 1 and self.rho1 != self.rho2:
            raise ValueError("scenario 1 has a single correlation: rho1 must equal rho2")
        if self.scenario in (2, 3) and not self.rho1 < self.rho2:
            raise ValueError("scenarios 2 and 3 require rho1 < rho2")
        if self.n_active < 1:
            raise ValueError("zeta * p rounds to zero active predictors")
        if self.scenario == 3 and self.n_active % self.block_size:
            raise ValueError(f"zeta * p = {self.n_active} is not a multiple of the block size "
                             f"{self.block_size}")

    @classmethod
    def equicorrelated(cls, rho: float, **kw) -> "ScenarioConfig":
        return cls(scenario=1, rho1=rho, rho2=rho, **kw)

    @property
    def rho(self) -> float:
        return self.rho1

    @property
    def n_active(self) -> int:
        """``round(zeta * p)``; the active predictors are the first ones."""
        return int(round(self.zeta * self.p))

    def groups(self) -> np.ndarray:
        """Group label of every predictor; predictors in one group share
        the within-group correlation."""
        a = self.n_active
        lab = np.empty(self.p, dtype=int)
        if self.scenario == 1:
            lab[:] = 0
        elif self.scenario == 2:
            lab[:a] = 0
            lab[a:] = 1
        else:
            nb = a // self.block_size
            lab[:a] = np.repeat(np.arange(nb), self.block_size)
            lab[a:] = nb
        return lab

    def correlation(self) -> np.ndarray:
        """Dense ``p x p`` correlation matrix of the predictors."""
        lab = self.groups()
        same = lab[:, None] == lab[None, :]
        c = np.where(same, self.rho2, self.rho1)
        np.fill_diagonal(c, 1.0)
        return c

    def linear_variance(self, beta) -> float:
        """``beta^T Sigma beta`` without forming ``Sigma``."""
        beta = np.asarray(beta, dtype=float)
        lab = self.groups()
        per_group = np.bincount(lab, weights=beta)
        return float(self.rho1 * beta.sum() ** 2 + (self.rho2 - self.rho1) * per_group @ per_group
                     + (1.0 - self.rho2) * beta @ beta)


@dataclass(frozen=True)
class MetricsRecord:
    mr: float
    se: float
    sp: float
    tl: float
    rc: float = float("nan")
    pr: float = float("nan")


def generate_coefficients(count: int, seed) -> np.ndarray:
    """``(-1)^z u`` with ``z ~ Bernoulli(0.3)`` and ``u ~ Uniform(0, 1/2)``."""
    if count < 1:
        raise ValueError("count must be positive")
    rng = np.random.default_rng(seed)
    z = rng.random(count) < 0.3
    u = 0.5 * rng.random(count)
    # Uniform(0, 1/2) excludes 0
    while np.any(u == 0.0):
        u[u == 0.0] = 0.5 * rng.random(int(np.sum(u == 0.0)))
    return np.where(z, -u, u)


def _factor_ok(cfg: ScenarioConfig) -> bool:
    return 0.0 <= cfg.rho1 <= cfg.rho2 < 1.0


def factor_weights(cfg: ScenarioConfig):
    """Weights ``(a, b, c)`` of the global factor, the group factor and the
    noise in ``x_j = a f0 + b f_grp(j) + c e_j``, or ``None`` when the
    correlations cannot be realized this way."""
    if not _factor_ok(cfg):
        return None
    return math.sqrt(cfg.rho1), math.sqrt(cfg.rho2 - cfg.rho1), math.sqrt(1.0 - cfg.rho2)


def generate_design(cfg: ScenarioConfig, n: Optional[int] = None, seed=None) -> np.ndarray:
    """``n x p`` Gaussian design with the scenario's correlation structure.

    Uses ``x_j = sqrt(rho1) f0 + sqrt(rho2 - rho1) f_grp(j) + sqrt(1 - rho2) e_j``
    (global factor, group factors, noise) whenever the correlations allow
    it; otherwise a dense symmetric square root of the correlation matrix.
    """
    n = cfg.n if n is None else n
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    w = factor_weights(cfg)
    if w is not None:
        lab = cfg.groups()
        f0 = rng.standard_normal((n, 1))
        fg = rng.standard_normal((n, int(lab.max()) + 1))
        e = rng.standard_normal((n, cfg.p))
        return w[0] * f0 + w[1] * fg[:, lab] + w[2] * e
    c = cfg.correlation()
    vals, vecs = np.linalg.eigh(c)
    if vals.min() < -1e-10:
        raise ValueError(f"correlation structure is not positive semidefinite for "
                         f"rho1={cfg.rho1}, rho2={cfg.rho2}, zeta={cfg.zeta}")
    root = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T
    return rng.standard_normal((n, cfg.p)) @ root


def calibrate_intercept(cfg: ScenarioConfig, beta, pi1: Optional[float] = None, seed=None,
                        draws: int = CALIBRATION_DRAWS) -> float:
    """Intercept ``b0`` with ``E[S(b0 + x^T beta)] = pi1`` (Monte Carlo).

    The linear score ``x^T beta`` is exactly ``N(0, beta^T Sigma beta)``,
    so the expectation is estimated from ``draws`` scalar normal draws and
    solved by bisection, which is monotone in ``b0``.
    """
    pi1 = cfg.pi1 if pi1 is None else pi1
    if not 0.0 < pi1 < 1.0:
        raise ValueError("pi1 must lie in (0, 1)")
    logit = math.log(pi1 / (1.0 - pi1))
    sd = math.sqrt(max(cfg.linear_variance(beta), 0.0))
    if sd == 0.0:
        return logit
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    score = sd * rng.standard_normal(draws)

    def excess(b0):
        return float(np.mean(sigmoid(b0 + score))) - pi1

    lo, hi = logit - 1.0, logit + 1.0
    while excess(lo) > 0:
        lo -= 2.0 * (hi - lo)
    while excess(hi) < 0:
        hi += 2.0 * (hi - lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if excess(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def generate_labels(x, beta0: float, beta, seed) -> np.ndarray:
    """Independent ``+1`` with probability ``S(beta0 + x_i^T beta)``, else ``-1``."""
    rng = np.random.default_rng(seed)
    prob = sigmoid(beta0 + np.asarray(x, dtype=float) @ np.asarray(beta, dtype=float))
    return np.where(rng.random(prob.shape[0]) < prob, 1.0, -1.0)


@dataclass(frozen=True)
class SimulatedData:
    beta0: float
    beta: np.ndarray
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray


def simulate(cfg: ScenarioConfig, seed=None, m_test: int = TEST_SIZE) -> SimulatedData:
    """One replication: truth, training set of size ``cfg.n`` and a test set.

    Independent streams for the coefficients, the calibration draws and
    each data set are spawned from ``seed`` (default ``cfg.seed``).
    """
    ss = np.random.SeedSequence(cfg.seed if seed is None else seed)
    s_coef, s_cal, s_xtr, s_ytr, s_xte, s_yte = ss.spawn(6)
    beta = np.zeros(cfg.p)
    beta[:cfg.n_active] = generate_coefficients(cfg.n_active, s_coef)
    b0 = calibrate_intercept(cfg, beta, seed=s_cal)
    x_tr = generate_design(cfg, cfg.n, s_xtr)
    y_tr = generate_labels(x_tr, b0, beta, s_ytr)
    x_te = generate_design(cfg, m_test, s_xte)
    y_te = generate_labels(x_te, b0, beta, s_yte)
    return SimulatedData(b0, beta, x_tr, y_tr, x_te, y_te)


def _rate(mask_pred, mask_true):
    tot = int(mask_true.sum())
    return float(np.sum(mask_pred & mask_true) / tot) if tot else float("nan")


def evaluate(model, x_test, y_test, true_beta=None, original: bool = True) -> MetricsRecord:
    """Test-set metrics of a fitted ensemble (or any ``x -> P(y=+1)`` callable).

    RC and PR compare supports of ``true_beta`` and the ensemble-averaged
    coefficients; they need a :class:`SplitFit`.
    """
    y = np.asarray(y_test, dtype=float)
    if y.size == 0:
        raise ValueError("empty test set")
    if isinstance(model, SplitFit):
        prob = ensemble_predict_proba(model, x_test, original)
    else:
        prob = np.asarray(model(x_test), dtype=float)
    pred = np.where(prob >= 0.5, 1.0, -1.0)
    pos, neg = y == 1.0, y == -1.0
    mr = float(np.mean(pred != y))
    se = _rate(pred == 1.0, pos)
    sp = _rate(pred == -1.0, neg)
    eta = np.log(prob) - np.log1p(-prob) if not isinstance(model, SplitFit) else \
        model.ensemble_intercept(original) + np.asarray(x_test) @ model.ensemble_coefs(original)
    tl = float(np.mean(logistic_loss(y * eta)))
    rc = pr = float("nan")
    if true_beta is not None:
        if not isinstance(model, SplitFit):
            raise TypeError("recall and precision need a fitted ensemble")
        truth = np.asarray(true_beta) != 0.0
        est = model.ensemble_coefs() != 0.0
        hit = int(np.sum(truth & est))
        rc = hit / int(truth.sum()) if truth.any() else float("nan")
        pr = hit / int(est.sum()) if est.any() else float("nan")
    return MetricsRecord(mr, se, sp, tl, float(rc), float(pr))


@dataclass
class TradeoffCell:
    """Per-replication values for one ``G``."""

    g: int
    replication: int
    mr: float
    mr_bar: float
    em: float
    ov: float
    dis: float
    df: float
    kw: float
    gd: float
    lambda_s: float
    lambda_d: float
    kkt_max: float = float("nan")
    converged: bool = True


def _one_replication(cfg, g_list, r, seed, search_kw):
    rs = seed + r
    sim = simulate(cfg, rs)
    data = Dataset.from_raw_quiet(sim.x_train, sim.y_train)
    cells = []
    for G in g_list:
        report, fit_ = alternating_search(data, g=G, seed=rs, **search_kw)
        d = diversity_report(fit_, sim.x_test, sim.y_test)
        cells.append(TradeoffCell(G, r, d.mr_ensemble, d.mr_individual_mean, d.em, d.ov,
                                  d.dis, d.df, d.kw, d.gd, report.lambda_s, report.lambda_d,
                                  float(np.max(np.abs(kkt_residuals(fit_, data)))), fit_.converged))
        log.info("rep %d G=%d: MR=%.3f MRbar=%.3f EM=%.3f OV=%.3f (lambda_s=%.4g, lambda_d=%.4g)",
                 r, G, d.mr_ensemble, d.mr_individual_mean, d.em, d.ov,
                 report.lambda_s, report.lambda_d)
    return cells


def run_tradeoff_study(cfg: ScenarioConfig, g_list: Sequence[int], replications: int = 10,
                       seed: Optional[int] = None, threads: int = 1, alpha: float = 0.75,
                       k: int = 10, l_s: int = 100, l_d: int = 100, cells_out: Optional[list] = None,
                       **search_kw) -> List[dict]:
    """Accuracy/diversity table: one row per ``G``, averaged over replications.

    Replication ``r`` uses seed ``seed + r`` for its data (shared by every
    ``G``) and for its CV folds. Rows carry the keys of ``TRADEOFF_HEADER``.
    Per-replication values are appended to ``cells_out`` when given.
    """
    seed = cfg.seed if seed is None else int(seed)
    if replications < 1:
        raise ValueError("replications must be positive")
    if any(G < 2 for G in g_list):
        raise ValueError("every G must be at least 2")
    search_kw = dict(alpha=alpha, k=k, l_s=l_s, l_d=l_d, **search_kw)
    job = lambda r: _one_replication(cfg, list(g_list), r, seed, search_kw)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            per_rep = list(ex.map(job, range(replications)))
    else:
        per_rep = [job(r) for r in range(replications)]
    cells = [c for rep in per_rep for c in rep]
    if cells_out is not None:
        cells_out.extend(cells)
    rows = []
    for G in g_list:
        mine = [c for c in cells if c.g == G]
        avg = lambda attr: float(np.nanmean([getattr(c, attr) for c in mine])) \
            if any(not math.isnan(getattr(c, attr)) for c in mine) else float("nan")
        rows.append({
            "G": G, "MR": avg("mr"), "MRbar": avg("mr_bar"), "EM": avg("em"), "OV": avg("ov"),
            "DIS": avg("dis"), "DF": avg("df"), "KW": avg("kw"), "GD": avg("gd"),
            "n": cfg.n, "p": cfg.p, "zeta": cfg.zeta, "rho1": cfg.rho1, "rho2": cfg.rho2,
            "pi1": cfg.pi1, "reps": replications, "seed": seed,
        })
    return rows


def write_tradeoff_csv(rows: Iterable[dict], out=None) -> str:
    """Write rows under ``TRADEOFF_HEADER`` (floats at full precision).

    Returns the CSV text; also writes it to the path or file ``out``.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRADEOFF_HEADER)
    for row in rows:
        w.writerow([repr(row[h]) if isinstance(row[h], float) else row[h] for h in TRADEOFF_HEADER])
    text = buf.getvalue()
    if isinstance(out, str):
        with open(out, "w", newline="") as fh:
            fh.write(text)
    elif out is not None:
        out.write(text)
    return text

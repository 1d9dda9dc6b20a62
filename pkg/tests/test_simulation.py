import math

import numpy as np
import pytest

from splitlogit import Dataset, HyperParams, SplitFit
from splitlogit.core import zero_fit
from splitlogit.simulation import (
    ScenarioConfig,
    TRADEOFF_HEADER,
    calibrate_intercept,
    evaluate,
    factor_weights,
    generate_coefficients,
    generate_design,
    generate_labels,
    run_tradeoff_study,
    simulate,
    write_tradeoff_csv,
)

from conftest import make_data


# ---------------------------------------------------------------- config

def test_config_validation():
    with pytest.raises(ValueError):
        ScenarioConfig(scenario=3, rho1=0.5, rho2=0.2)
    with pytest.raises(ValueError):
        ScenarioConfig(scenario=3, p=110, zeta=0.2)  # 22 active, not a multiple of 25
    with pytest.raises(ValueError):
        ScenarioConfig(scenario=1, rho1=0.2, rho2=0.5)
    with pytest.raises(ValueError):
        ScenarioConfig(pi1=1.0)
    assert ScenarioConfig().n_active == 300


def test_groups_and_correlation_structure():
    cfg = ScenarioConfig(scenario=3, p=100, zeta=0.5)
    c = cfg.correlation()
    assert c[0, 24] == 0.5 and c[0, 25] == 0.2       # same block / next block
    assert c[0, 60] == 0.2 and c[60, 99] == 0.5       # active-inactive / inactive-inactive
    assert np.all(np.diag(c) == 1.0)
    cfg2 = ScenarioConfig(scenario=2, p=10, zeta=0.3, rho1=0.1, rho2=0.6)
    c2 = cfg2.correlation()
    assert c2[0, 2] == 0.6 and c2[0, 3] == 0.1 and c2[3, 9] == 0.6


def test_linear_variance_matches_dense():
    rng = np.random.default_rng(0)
    for cfg in (ScenarioConfig(p=100, zeta=0.25), ScenarioConfig.equicorrelated(0.3, p=40),
                ScenarioConfig(scenario=2, p=30, rho1=0.1, rho2=0.4)):
        b = rng.standard_normal(cfg.p)
        assert cfg.linear_variance(b) == pytest.approx(b @ cfg.correlation() @ b, rel=1e-12)


# ---------------------------------------------------------------- coefficients

def test_coefficient_range_and_statistics():
    b = generate_coefficients(100_000, 1)
    assert np.all((np.abs(b) > 0) & (np.abs(b) < 0.5))
    assert abs(np.mean(b < 0) - 0.3) <= 0.01
    assert abs(np.mean(np.abs(b)) - 0.25) <= 0.005


def test_coefficients_seeded():
    assert np.array_equal(generate_coefficients(10, 4), generate_coefficients(10, 4))
    with pytest.raises(ValueError):
        generate_coefficients(0, 1)


# ---------------------------------------------------------------- design

def test_one_factor_construction_implies_exact_correlation():
    for cfg in (ScenarioConfig.equicorrelated(0.5, p=30), ScenarioConfig(p=100, zeta=0.5),
                ScenarioConfig(scenario=2, p=20, zeta=0.3, rho1=0.0, rho2=0.3)):
        a, b, c = factor_weights(cfg)
        lab = cfg.groups()
        # loadings on (global factor, group factors, noise)
        k = int(lab.max()) + 1
        load = np.hstack([np.full((cfg.p, 1), a), b * np.eye(k)[lab], c * np.eye(cfg.p)])
        assert np.max(np.abs(load @ load.T - cfg.correlation())) <= 1e-12


def test_s1_independent_columns():
    x = generate_design(ScenarioConfig.equicorrelated(0.0, p=20, zeta=0.5), n=10_000, seed=0)
    r = np.corrcoef(x, rowvar=False)[np.triu_indices(20, 1)]
    assert np.mean(np.abs(r) <= 4 / math.sqrt(10_000)) >= 0.95


def test_s1_equicorrelation():
    x = generate_design(ScenarioConfig.equicorrelated(0.5, p=20, zeta=0.5), n=10_000, seed=1)
    r = np.corrcoef(x, rowvar=False)[np.triu_indices(20, 1)]
    assert abs(r.mean() - 0.5) <= 0.02
    assert np.all(np.abs(x.std(axis=0) - 1) < 0.03)


def test_s3_block_correlations():
    cfg = ScenarioConfig(p=100, zeta=0.5)
    x = generate_design(cfg, n=10_000, seed=2)
    r = np.corrcoef(x, rowvar=False)
    c = cfg.correlation()
    off = ~np.eye(100, dtype=bool)
    assert abs(r[off & (c == 0.5)].mean() - 0.5) <= 0.03
    assert abs(r[off & (c == 0.2)].mean() - 0.2) <= 0.03


def test_dense_fallback_for_negative_correlation():
    cfg = ScenarioConfig.equicorrelated(-0.05, p=10, zeta=0.5)
    assert factor_weights(cfg) is None
    x = generate_design(cfg, n=20_000, seed=3)
    r = np.corrcoef(x, rowvar=False)[np.triu_indices(10, 1)]
    assert abs(r.mean() + 0.05) <= 0.02


def test_non_psd_structure_rejected():
    cfg = ScenarioConfig.equicorrelated(-0.2, p=20, zeta=0.5)  # needs rho >= -1/(p-1)
    with pytest.raises(ValueError, match="rho1=-0.2"):
        generate_design(cfg, n=5, seed=0)


# ---------------------------------------------------------------- intercept and labels

def test_calibration_null_beta_is_logit():
    cfg = ScenarioConfig(p=100, zeta=0.25)
    assert calibrate_intercept(cfg, np.zeros(100), 0.3) == math.log(0.3 / 0.7)


def test_calibration_symmetric_at_half():
    cfg = ScenarioConfig(p=100, zeta=0.25)
    beta = np.zeros(100)
    beta[:25] = generate_coefficients(25, 7)
    assert abs(calibrate_intercept(cfg, beta, 0.5, seed=0)) <= 0.02


@pytest.mark.parametrize("pi1", [0.2, 0.4])
def test_calibrated_labels_hit_target(pi1):
    cfg = ScenarioConfig(p=100, zeta=0.25, pi1=pi1)
    beta = np.zeros(100)
    beta[:25] = generate_coefficients(25, 8)
    b0 = calibrate_intercept(cfg, beta, seed=1)
    x = generate_design(cfg, n=100_000, seed=2)
    y = generate_labels(x, b0, beta, seed=3)
    assert abs(np.mean(y == 1) - pi1) <= 0.01


def test_labels_nearly_deterministic_with_huge_coefficient():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2000, 3))
    y = generate_labels(x, 0.0, [1e4, 0, 0], seed=1)
    assert np.mean(y == np.sign(x[:, 0])) >= 0.999
    assert np.array_equal(y, generate_labels(x, 0.0, [1e4, 0, 0], seed=1))


def test_simulate_deterministic_and_shaped():
    cfg = ScenarioConfig(p=100, zeta=0.25, n=30)
    a, b = simulate(cfg, 5, m_test=50), simulate(cfg, 5, m_test=50)
    assert np.array_equal(a.x_train, b.x_train) and np.array_equal(a.y_test, b.y_test)
    assert a.x_train.shape == (30, 100) and a.x_test.shape == (50, 100)
    assert np.all(a.beta[:25] != 0) and np.all(a.beta[25:] == 0)
    assert not np.array_equal(a.x_train, simulate(cfg, 6, m_test=50).x_train)


# ---------------------------------------------------------------- metrics

def test_perfect_predictor():
    x = np.linspace(-1, 1, 10)[:, None]
    y = np.where(x[:, 0] > 0, 1.0, -1.0)
    m = evaluate(lambda z: np.where(z[:, 0] > 0, 0.99, 0.01), x, y)
    assert (m.mr, m.se, m.sp) == (0.0, 1.0, 1.0)


def test_mr_identity():
    rng = np.random.default_rng(3)
    d = make_data(n=50, p=4, seed=3)
    f = SplitFit.from_standardized(rng.normal(0, 0.3, 2), rng.standard_normal((4, 2)), d,
                                   HyperParams(g=2))
    x = rng.standard_normal((300, 4))
    y = np.where(rng.random(300) < 0.4, 1.0, -1.0)
    m = evaluate(f, x, y, original=False)
    npos, nneg = np.sum(y == 1), np.sum(y == -1)
    assert m.mr == pytest.approx(1 - (m.se * npos + m.sp * nneg) / 300, abs=1e-15)


def test_null_model_balanced_loss_is_log2():
    rng = np.random.default_rng(4)
    d = make_data(n=20, p=3, balanced=True)
    f = zero_fit(d, HyperParams(g=3))
    y = np.where(rng.random(2000) < 0.5, 1.0, -1.0)
    m = evaluate(f, rng.standard_normal((2000, 3)), y)
    assert abs(m.tl - math.log(2)) <= 0.02


def test_recall_precision():
    d = make_data(n=20, p=4)
    B = np.array([[1.0, 0], [0, 2.0], [0, 0], [0, 0]])
    f = SplitFit.from_standardized(np.zeros(2), B, d, HyperParams(g=2))
    x, y = d.raw_x(), d.y
    m = evaluate(f, x, y, true_beta=[0.5, -1.0, 0, 0])
    assert m.rc == 1.0 and m.pr == 1.0
    m = evaluate(f, x, y, true_beta=[0.5, 0, 1.0, 0])
    assert m.rc == 0.5 and m.pr == 0.5
    assert math.isnan(evaluate(zero_fit(d, HyperParams(g=2)), x, y, true_beta=[1, 0, 0, 0]).pr)


def test_single_class_test_set_flags_missing_rate():
    d = make_data(n=20, p=2)
    m = evaluate(zero_fit(d, HyperParams(g=2)), np.zeros((5, 2)), np.ones(5))
    assert math.isnan(m.sp) and not math.isnan(m.se)


# ---------------------------------------------------------------- study harness

def test_tradeoff_study_small_is_deterministic():
    cfg = ScenarioConfig(n=40, p=50, zeta=0.5)
    kw = dict(replications=2, seed=3, k=3, l_s=6, l_d=4)
    rows = run_tradeoff_study(cfg, [2, 3], **kw)
    assert [r["G"] for r in rows] == [2, 3]
    assert all(tuple(r) == TRADEOFF_HEADER for r in rows)
    assert write_tradeoff_csv(rows) == write_tradeoff_csv(run_tradeoff_study(cfg, [2, 3], **kw))
    text = write_tradeoff_csv(rows)
    assert text.splitlines()[0] == ",".join(TRADEOFF_HEADER)
    for r in rows:
        assert r["KW"] == pytest.approx((r["G"] - 1) / (2 * r["G"]) * r["DIS"], rel=1e-12)


def test_tradeoff_study_rejects_single_model():
    with pytest.raises(ValueError):
        run_tradeoff_study(ScenarioConfig(n=20, p=50, zeta=0.5), [1], replications=1)

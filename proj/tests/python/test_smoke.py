"""Smoke tests for the python bindings: shapes, round trips, and a tiny fit."""

import math

import numpy as np
import pytest

mziln = pytest.importorskip("mziln")


def test_log_ratio_round_trip():
    nonzero, reference, u = mziln.log_ratio_transform([0.5, 0.0, 0.25, 0.25])
    assert nonzero == [1, 3, 4]
    assert reference == 4
    back = mziln.inverse_log_ratio(u)
    assert np.allclose(back, [0.5, 0.25, 0.25])


def test_density_matches_normal_for_full_presence():
    mean = [0.1, -0.2]
    cov = [[1.0, 0.3], [0.3, 0.8]]
    masses = {(True, True, True): 1.0}
    y = mziln.inverse_log_ratio([0.4, -0.1])
    value = mziln.mziln_log_density(y, mean, cov, masses)
    # independent check: bivariate normal log pdf at u = (0.4, -0.1)
    u = np.array([0.4, -0.1]) - np.array(mean)
    sigma = np.array(cov)
    expected = -0.5 * (
        2 * math.log(2 * math.pi)
        + math.log(np.linalg.det(sigma))
        + float(u @ np.linalg.solve(sigma, u))
    )
    assert value == pytest.approx(expected, abs=1e-12)


def _simulate(n=120, seed=5):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 2))
    samples = []
    for i in range(n):
        mu = np.array([1.2 * x[i, 0], -1.2 * x[i, 0], 0.0])
        u = mu + 0.5 * rng.normal(size=3)
        y = np.exp(np.concatenate([u, [0.0]]))
        samples.append(y / y.sum())
    return np.array(samples), x


def test_fit_mle_recovers_signal():
    samples, x = _simulate()
    fit = mziln.fit_mle(samples, x)
    assert fit["converged"]
    assert fit["n_ratios"] == 3
    beta = np.array(fit["beta"]).reshape(3, 3)  # rows: taxon, cols: (1, x1, x2)
    assert beta[0, 1] == pytest.approx(1.2, abs=0.2)
    assert beta[1, 1] == pytest.approx(-1.2, abs=0.2)
    assert np.all(np.array(fit["ci_lower"]) <= np.array(fit["ci_upper"]))


def test_fit_path_selects_the_planted_pair():
    samples, x = _simulate(n=150, seed=9)
    fit = mziln.fit_path(samples, x, penalty="mcp", folds=5, seed=3)
    assert fit["lambda_selected"] > 0
    support = {(taxon, covariate) for taxon, covariate, _ in fit["support"]}
    assert (1, 1) in support
    assert (2, 1) in support


def test_spearman_screen_runs():
    samples, x = _simulate(n=80, seed=11)
    selected = mziln.spearman_screen(samples, x, fdr_q=0.05)
    assert all(len(entry) == 3 for entry in selected)

"""Acceptance criteria, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line (collected again in the
terminal summary) and then asserts the criterion at its stated tolerance.
Criterion 9 needs ``datasets/banana.csv`` from ``scripts/fetch_datasets.py``
(or a directory named by ``PIECEWISE_SVGP_DATASETS``); parts whose data is
absent are reported as ``SKIP``.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.special import expit

from piecewise_svgp.config import ExperimentConfig
from piecewise_svgp.data import Dataset, crossval, ingest_csv, zstandardize
from piecewise_svgp.math_core import cholesky_jitter, kl_mvn, truncated_normal_partial_mean
from piecewise_svgp.mc_oracle import mc_link_mse, mc_objective_expectation
from piecewise_svgp.piecewise import (
    discretize_link,
    exp_link_mse,
    interval_probs_and_grads,
    lipschitz_mse_bound,
    uniform_partition,
)
from piecewise_svgp.svgp import VariationalDist, kl_term, prior_at_inducing
from piecewise_svgp.testing import random_instance, random_model
from piecewise_svgp.train import fit, gradient_check

DATASETS = Path(os.environ.get("PIECEWISE_SVGP_DATASETS", Path(__file__).resolve().parent.parent / "datasets"))


def two_clusters(n=200, seed=0):
    """Balanced 1-D clusters at -2 (label 0) and +2 (label 1) with sd 0.7."""
    rng = np.random.default_rng(seed)
    y = np.repeat([0.0, 1.0], n // 2)
    x = np.where(y == 1, 2.0, -2.0) + 0.7 * rng.normal(size=n)
    return Dataset(x[:, None], y, ["x"], "label")


def hetero_fixture(n=300, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-3, 3, n)
    y = np.sin(2 * x) + (0.1 + 0.5 * np.abs(x)) * rng.normal(size=n)
    return Dataset(x[:, None], y, ["x"], "y")


def crossval_with_traces(cfg, ds):
    """Cross-validate and also return (first, last) ELBO and final link per fold."""
    folds = []
    rep = crossval(cfg, ds, callback=lambda k, res, m: folds.append(
        (res.elbo_trace[0], res.elbo_trace[-1], None if res.link is None else res.link.levels.copy())))
    return rep, folds


def elbo_rises(folds):
    return all(last >= first for first, last, _ in folds)


OBJECTIVES = [("bernoulli", "none"), ("hetero_gauss", "none"), ("learnable_gauss", "none"),
              ("learnable_gauss", "bayes_prior")]


def test_criterion_1_oracle_equivalence(report):
    t0 = time.perf_counter()
    worst, failures = 0.0, []
    for variant, reg in OBJECTIVES:
        for seed in range(50):
            p = random_instance(variant, seed, regularizer=reg)
            closed = p.terms().expectation
            est = mc_objective_expectation(p, n=200000, seed=seed)
            z = abs(est.z_score(closed))
            worst = max(worst, z)
            if z > 4.0:
                failures.append((variant, reg, seed, z))
    dt = time.perf_counter() - t0
    ok = not failures and dt < 60
    report(1, ok, f"200 instances, max |z| = {worst:.2f} (limit 4), {dt:.1f} s (limit 60)")
    assert not failures, failures
    assert dt < 60


GRAD_CASES = [("bernoulli", "none", True), ("bernoulli", "none", False), ("bernoulli", "l2_to_constant", True),
              ("bernoulli", "l2_to_reference", True), ("hetero_gauss", "none", True),
              ("learnable_gauss", "none", True), ("learnable_gauss", "l2_to_constant", True),
              ("learnable_gauss", "l2_to_reference", True), ("learnable_gauss", "bayes_prior", True),
              ("gauss", "none", True)]


def test_criterion_2_gradient_correctness(report):
    t0 = time.perf_counter()
    worst, failures = 0.0, []
    for variant, reg, trainable in GRAD_CASES:
        for seed in range(20):
            ratios = gradient_check(random_instance(variant, seed, regularizer=reg, trainable=trainable),
                                    h=1e-5, rtol=1e-4, atol=1e-6)
            r = max(ratios.values())
            worst = max(worst, r)
            if r > 1.0:
                failures.append((variant, reg, seed, ratios))
    dt = time.perf_counter() - t0
    ok = not failures and dt < 30
    report(2, ok, f"{len(GRAD_CASES) * 20} checks, worst error/tolerance = {worst:.3f} (limit 1), {dt:.1f} s (limit 30)")
    assert not failures, failures[:3]
    assert dt < 30


def test_criterion_3_exp_mse_exact(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst, failures = 0.0, []
    for i in range(20):
        mu, sigma = rng.uniform(-2, 2), rng.uniform(0.2, 2)
        p = uniform_partition(int(rng.choice([4, 16, 64])))
        closed = exp_link_mse(p, mu, sigma)
        est = mc_link_mse(np.exp, discretize_link("exp", p), mu, sigma, n=10**6, seed=i)
        z = abs(est.z_score(closed))
        worst = max(worst, z)
        if z > 4.0:
            failures.append((mu, sigma, p.K, z))
    not_decreasing = []
    for mu, sigma in [(0.0, 1.0), (-1.5, 0.3), (1.2, 1.8), (2.0, 0.2)]:
        # K - 1 = 2**j + 1 edges on a fixed span gives nested partitions
        mses = [exp_link_mse(uniform_partition(2**j + 2, mu - 6 * sigma, mu + 6 * sigma), mu, sigma)
                for j in range(8)]
        if not all(b < a for a, b in zip(mses, mses[1:])):
            not_decreasing.append((mu, sigma, mses))
    dt = time.perf_counter() - t0
    ok = not failures and not not_decreasing and dt < 30
    report(3, ok, f"max |z| = {worst:.2f} over 20 configs (limit 4); strictly decreasing in K on "
                  f"{4 - len(not_decreasing)}/4 nested sequences; {dt:.1f} s (limit 30)")
    assert not failures, failures
    assert not not_decreasing, not_decreasing
    assert dt < 30


def test_criterion_4_lipschitz_bound(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    slack, failures = np.inf, []
    for i in range(20):
        mu, sigma = rng.uniform(-2, 2), rng.uniform(0.2, 2)
        p = uniform_partition(int(rng.choice([4, 16, 64])))
        for name, lam, g in [("sigmoid", 0.25, expit), ("identity", 1.0, lambda x: x)]:
            bound = lipschitz_mse_bound(p, lam, mu, sigma, link=name)
            est = mc_link_mse(g, discretize_link(name, p), mu, sigma, n=200000, seed=i)
            s = (bound - est.mean) / est.std_error
            slack = min(slack, s)
            if s < -4.0:
                failures.append((name, mu, sigma, p.K, s))
    dt = time.perf_counter() - t0
    ok = not failures and dt < 20
    report(4, ok, f"40 comparisons, min (bound - MC)/SE = {slack:.2f} (limit -4), {dt:.1f} s (limit 20)")
    assert not failures, failures
    assert dt < 20


def test_criterion_5_probability_closure(report):
    t0 = time.perf_counter()
    mus = np.linspace(-10, 10, 41)
    sigmas = np.geomspace(1e-3, 10, 15)
    mass_err = mean_err = 0.0
    for K in (1, 2, 7, 64):
        p = uniform_partition(K)
        mm, ss = np.meshgrid(mus, sigmas)
        P, _, _ = interval_probs_and_grads(p, mm.ravel(), ss.ravel() ** 2)
        mass_err = max(mass_err, float(np.max(np.abs(P.sum(axis=1) - 1.0))))
        for mu in mus:
            for sigma in sigmas:
                tot = np.sum(truncated_normal_partial_mean(mu, sigma, p.lower, p.upper))
                mean_err = max(mean_err, abs(tot - mu))
    dt = time.perf_counter() - t0
    ok = mass_err <= 1e-12 and mean_err <= 1e-10 and dt < 5
    report(5, ok, f"max |sum P - 1| = {mass_err:.1e} (limit 1e-12), max |sum partial - mu| = {mean_err:.1e} "
                  f"(limit 1e-10), {dt:.2f} s (limit 5)")
    assert mass_err <= 1e-12
    assert mean_err <= 1e-10
    assert dt < 5


def test_criterion_6_kl_properties(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    at_prior = 0.0
    for _ in range(20):
        m = random_model(rng, int(rng.integers(1, 8)), int(rng.integers(1, 3)))
        _, Kmm, _ = prior_at_inducing(m)
        m.vdist = VariationalDist.from_cholesky(np.zeros(m.M), cholesky_jitter(Kmm)[0])
        at_prior = max(at_prior, abs(kl_term(m)))
    lowest = np.inf
    for _ in range(1000):
        M = int(rng.integers(1, 6))

        def chol():
            return np.tril(rng.normal(size=(M, M)), -1) + np.diag(rng.uniform(0.1, 2.0, M))

        lowest = min(lowest, kl_mvn(rng.normal(size=M), chol(), rng.normal(size=M), chol()))
    one_d = kl_mvn([1.0], [[1.0]], [0.0], [[1.0]])
    dt = time.perf_counter() - t0
    ok = at_prior <= 1e-8 and lowest >= -1e-10 and abs(one_d - 0.5) <= 1e-12 and dt < 5
    report(6, ok, f"max |KL| at prior = {at_prior:.1e} (limit 1e-8), min KL = {lowest:.3g} (limit -1e-10), "
                  f"1-D value {float(one_d)!r}, {dt:.2f} s (limit 5)")
    assert at_prior <= 1e-8
    assert lowest >= -1e-10
    assert abs(one_d - 0.5) <= 1e-12
    assert dt < 5


CLASSIFY = ExperimentConfig(task="classify", M=10, K=20, lo=-3.0, hi=3.0, iters=500, alpha=0.05, folds=10, seed=0)


@pytest.mark.slow
def test_criterion_7_synthetic_classification(report):
    t0 = time.perf_counter()
    rep, folds = crossval_with_traces(CLASSIFY, two_clusters())
    dt = time.perf_counter() - t0
    f1, ll = rep.results["f1"].mean, rep.results["loglik"].mean
    rises = elbo_rises(folds)
    ok = f1 >= 0.95 and ll >= -0.25 and rises and dt < 30
    report(7, ok, f"10-fold F1 = {f1:.3f} (>= 0.95), log-lik = {ll:.4f} (>= -0.25), "
                  f"final >= initial ELBO on {sum(b >= a for a, b, _ in folds)}/10 folds, {dt:.1f} s (limit 30)")
    assert f1 >= 0.95
    assert ll >= -0.25
    assert rises
    assert dt < 30


@pytest.mark.slow
def test_criterion_8_heteroscedastic_regression(report):
    t0 = time.perf_counter()
    ds = hetero_fixture()
    het, het_folds = crossval_with_traces(ExperimentConfig(task="regress-hetero", folds=10, seed=0), ds)
    gau, gau_folds = crossval_with_traces(ExperimentConfig(task="regress-gauss", folds=10, seed=0), ds)
    dt = time.perf_counter() - t0
    gain = het.results["loglik"].mean - gau.results["loglik"].mean
    rises = elbo_rises(het_folds) and elbo_rises(gau_folds)
    ok = gain >= 0.05 and rises and dt < 120
    report(8, ok, f"hetero {het.results['loglik'].mean:.4f} vs constant-variance {gau.results['loglik'].mean:.4f}, "
                  f"gain {gain:.4f} nats (>= 0.05), {dt:.1f} s (limit 120)")
    assert gain >= 0.05
    assert rises
    assert dt < 120


@pytest.mark.slow
def test_criterion_9_banana(report):
    path = DATASETS / "banana.csv"
    if not path.exists():
        report("9 (banana)", "SKIP", f"{path} not found; run scripts/fetch_datasets.py")
        pytest.skip("banana not fetched")
    cfg = ExperimentConfig(task="classify", M=10, K=20, lo=-3.0, hi=3.0, alpha=0.05, folds=10, seed=0)
    rep, folds = crossval_with_traces(cfg, ingest_csv(path))
    ll, f1 = rep.results["loglik"], rep.results["f1"]
    ok = -0.30 <= ll.mean <= -0.20 and f1.mean >= 0.84 and elbo_rises(folds)
    report("9 (banana)", ok, f"log-lik {ll.mean:.4f} +/- {ll.sd:.4f} (in [-0.30, -0.20]), "
                             f"F1 {f1.mean:.4f} +/- {f1.sd:.4f} (>= 0.84)")
    assert -0.30 <= ll.mean <= -0.20
    assert f1.mean >= 0.84
    assert elbo_rises(folds)


@pytest.mark.slow
def test_criterion_9_winewhite(report):
    path = DATASETS / "winewhite.csv"
    if not path.exists():
        report("9 (winewhite)", "SKIP", f"{path} not found; the dataset is not available from the package mirror")
        pytest.skip("winewhite not available")
    cfg = ExperimentConfig(task="regress-learnable", M=10, K=20, alpha=0.05, folds=10, seed=0)
    rep, folds = crossval_with_traces(cfg, ingest_csv(path, task=cfg.task))
    ll = rep.results["loglik"]
    ok = -1.41 <= ll.mean <= -1.07 and elbo_rises(folds)
    report("9 (winewhite)", ok, f"log-lik {ll.mean:.4f} +/- {ll.sd:.4f} (in [-1.41, -1.07])")
    assert -1.41 <= ll.mean <= -1.07
    assert elbo_rises(folds)


@pytest.mark.slow
def test_criterion_10_learnable_link(report):
    t0 = time.perf_counter()
    init = expit(uniform_partition(20).reps)
    rep, folds = crossval_with_traces(CLASSIFY.replace(link_mode="trainable-point"), two_clusters())
    shifts = [float(np.max(np.abs(levels - init))) for _, _, levels in folds]
    f1, ll = rep.results["f1"].mean, rep.results["loglik"].mean
    moved = min(shifts) > 0.01
    classify_ok = f1 >= 0.95 and ll >= -0.25 and elbo_rises(folds)

    reps = uniform_partition(20).reps
    mads = []
    for seed in range(3):
        rng = np.random.default_rng(seed)
        x = rng.uniform(-3, 3, 200)
        train = zstandardize(Dataset(x[:, None], x + 0.3 * rng.normal(size=200), ["x"], "y"),
                             standardize_target=True)
        row = {}
        for reg in ("none", "bayes_prior"):
            cfg = ExperimentConfig(task="regress-learnable", regularizer=reg, prior_var=1.0, iters=500, seed=seed)
            res = fit(cfg, train)
            assert res.elbo_trace[-1] >= res.elbo_trace[0]
            row[reg] = float(np.mean(np.abs(res.link.levels - reps)))
        mads.append(row)
    closer = all(r["bayes_prior"] < r["none"] for r in mads)
    dt = time.perf_counter() - t0
    ok = moved and classify_ok and closer and dt < 60
    mad_txt = ", ".join(f"{r['none']:.3f} -> {r['bayes_prior']:.3f}" for r in mads)
    report(10, ok, f"min over folds of max |dg| = {min(shifts):.3f} (> 0.01), F1 = {f1:.3f}, log-lik = {ll:.4f}; "
                   f"MAD from linear, unregularized -> prior: {mad_txt}; {dt:.1f} s (limit 60)")
    assert moved
    assert classify_ok
    assert closer
    assert dt < 60


def test_fixture_labels_follow_clusters():
    ds = two_clusters()
    assert len(ds) == 200 and ds.y.sum() == 100
    assert np.mean(ds.X[ds.y == 1, 0]) > 1.5 and np.mean(ds.X[ds.y == 0, 0]) < -1.5


import numpy as np
import pytest

from piecewise_svgp.errors import DomainError
from piecewise_svgp.mc_oracle import McEstimate, mc_expectation, mc_link_mse, mc_objective_expectation, summarize
from piecewise_svgp.piecewise import discretize_link, exp_link_mse, uniform_partition
from piecewise_svgp.svgp import GaussianMarginal
from piecewise_svgp.testing import random_instance


class TestSummarize:
    def test_standard_error(self):
        x = np.arange(10.0)
        est = summarize(x, seed=3)
        assert est.mean == 4.5
        assert est.std_error == pytest.approx(np.std(x, ddof=1) / np.sqrt(10), rel=1e-15)
        assert est.n_samples == 10 and est.seed == 3 and est.rng == "PCG64"

    def test_tolerates_rare_non_finite(self):
        x = np.ones(10000)
        x[:5] = np.nan
        assert summarize(x, 0).n_samples == 9995

    def test_rejects_many_non_finite(self):
        x = np.ones(1000)
        x[:2] = np.inf
        with pytest.raises(DomainError):
            summarize(x, 0)

    def test_z_score(self):
        est = McEstimate(1.0, 0.5, 100, 0)
        assert est.z_score(2.0) == 2.0
        assert est.agrees(2.9) and not est.agrees(3.1)
        assert McEstimate(1.0, 0.0, 100, 0).z_score(1.0) == 0.0


class TestExpectation:
    def test_seed_reproducible(self):
        m = GaussianMarginal(0.2, 1.3)
        a = mc_expectation(np.sin, m, n=5000, seed=11)
        b = mc_expectation(np.sin, m, n=5000, seed=11)
        assert a == b

    def test_standard_error_scales(self):
        m = GaussianMarginal(0.0, 1.0)
        small = mc_expectation(lambda f: f * f, m, n=10000, seed=0).std_error
        large = mc_expectation(lambda f: f * f, m, n=400000, seed=0).std_error
        assert small / large == pytest.approx(np.sqrt(40), rel=0.2)

    def test_known_moment(self):
        est = mc_expectation(lambda f: f * f, GaussianMarginal(1.0, 2.0), n=200000, seed=1)
        assert est.agrees(3.0)

    def test_through_link(self):
        link = discretize_link("sigmoid", uniform_partition(4))
        est = mc_expectation(lambda g: g, GaussianMarginal(100.0, 1.0), links=link, n=1000, seed=0)
        assert est.mean == pytest.approx(link.levels[-1], rel=1e-15)
        assert est.std_error < 1e-15

    def test_two_factors(self):
        est = mc_expectation(lambda a, b: a * b, [GaussianMarginal(1.0, 1.0), GaussianMarginal(2.0, 1.0)],
                             n=200000, seed=2)
        assert est.agrees(2.0)

    def test_minimum_samples(self):
        with pytest.raises(DomainError):
            mc_expectation(np.sin, GaussianMarginal(0.0, 1.0), n=99)

    def test_factor_limit(self):
        with pytest.raises(DomainError):
            mc_expectation(lambda *f: f[0], [GaussianMarginal(0.0, 1.0)] * 4, n=100)


class TestLinkMse:
    def test_exact_match_is_zero(self):
        link = discretize_link("exp", uniform_partition(8))
        est = mc_link_mse(lambda x: link.levels[link.partition.index(x)], link, 0.0, 1.0, n=1000)
        assert est.mean == 0.0 and est.std_error == 0.0

    def test_agrees_with_closed_form(self):
        p = uniform_partition(16, -2, 2)
        est = mc_link_mse(np.exp, discretize_link("exp", p), 0.3, 0.7, n=200000, seed=5)
        assert est.agrees(exp_link_mse(p, 0.3, 0.7))


class TestObjective:
    def test_seeded(self):
        p = random_instance("bernoulli", 0)
        assert mc_objective_expectation(p, n=1000, seed=4) == mc_objective_expectation(p, n=1000, seed=4)

    def test_chunking_invariant_count(self):
        p = random_instance("hetero_gauss", 1)
        assert mc_objective_expectation(p, n=25000, seed=0, chunk=7000).n_samples == 25000

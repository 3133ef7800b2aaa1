import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from piecewise_svgp.errors import DimensionError
from piecewise_svgp.kernels import KernelParams, as_inputs, cross_gram, cross_gram_vjp, gram, se_kernel

coords = st.floats(-10, 10, allow_nan=False)


class TestSeKernel:
    def test_diagonal_is_signal_variance(self):
        p = KernelParams(np.log(2.5), 0.3)
        assert se_kernel([0.4, -1.0], [0.4, -1.0], p) == pytest.approx(2.5, rel=1e-15)

    def test_unit_distance(self):
        assert se_kernel([0.0], [1.0], KernelParams()) == pytest.approx(0.6065306597126334, abs=1e-15)

    def test_hand_value(self):
        p = KernelParams(0.0, np.log(2.0))
        # mpmath exp(-25/8)
        assert se_kernel([0.0, 0.0], [3.0, 4.0], p) == pytest.approx(0.04393693362340742, abs=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            se_kernel([0.0, 1.0], [0.0], KernelParams())

    @given(arrays(float, 3, elements=coords), arrays(float, 3, elements=coords), arrays(float, 3, elements=coords))
    def test_translation_invariant(self, x, y, t):
        p = KernelParams(0.2, 0.5)
        assert se_kernel(x + t, y + t, p) == pytest.approx(se_kernel(x, y, p), rel=1e-9, abs=1e-300)

    @given(arrays(float, 2, elements=coords), arrays(float, 2, elements=coords))
    def test_symmetric(self, x, y):
        p = KernelParams(-0.4, 0.1)
        assert se_kernel(x, y, p) == se_kernel(y, x, p)

    def test_monotone_decay(self):
        p = KernelParams(0.0, 0.7)
        vals = [se_kernel([0.0], [r], p) for r in np.linspace(0, 6, 61)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))


class TestGram:
    def test_single_row(self):
        K = gram(np.array([[1.0, 2.0]]), KernelParams(np.log(3.0), 0.0))
        assert K.shape == (1, 1)
        assert K[0, 0] == pytest.approx(3.0, rel=1e-15)

    def test_equals_cross_gram(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(6, 2))
        p = KernelParams(0.3, -0.2)
        np.testing.assert_allclose(gram(X, p), cross_gram(X, X, p), atol=1e-15, rtol=0)

    def test_cross_gram_entries(self):
        rng = np.random.default_rng(1)
        X, Z = rng.normal(size=(4, 3)), rng.normal(size=(2, 3))
        p = KernelParams(0.1, 0.4)
        K = cross_gram(X, Z, p)
        assert K.shape == (4, 2)
        for i in range(4):
            for j in range(2):
                assert K[i, j] == pytest.approx(se_kernel(X[i], Z[j], p), rel=1e-14)

    def test_symmetric_psd(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            X = rng.normal(size=(5, 2))
            p = KernelParams(rng.normal(), rng.normal(scale=0.5))
            K = gram(X, p)
            np.testing.assert_array_equal(K, K.T)
            assert np.min(np.linalg.eigvalsh(K)) >= -1e-10
            np.testing.assert_allclose(np.diag(K), p.v, rtol=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            cross_gram(np.zeros((2, 2)), np.zeros((2, 3)), KernelParams())

    def test_vector_input_is_column(self):
        assert as_inputs([1.0, 2.0, 3.0]).shape == (3, 1)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            as_inputs([[0.0], [np.nan]])


class TestCrossGramVjp:
    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10**6))
    def test_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        X, Z = rng.normal(size=(4, 2)), rng.normal(size=(3, 2))
        G = rng.normal(size=(4, 3))
        lv, ls = rng.uniform(-0.5, 0.5, 2)

        def f(lv, ls, X, Z):
            return float(np.sum(G * cross_gram(X, Z, KernelParams(lv, ls))))

        p = KernelParams(lv, ls)
        d_lv, d_ls, d_X, d_Z = cross_gram_vjp(X, Z, p, cross_gram(X, Z, p), G)
        h = 1e-6
        assert d_lv == pytest.approx((f(lv + h, ls, X, Z) - f(lv - h, ls, X, Z)) / (2 * h), rel=1e-6, abs=1e-8)
        assert d_ls == pytest.approx((f(lv, ls + h, X, Z) - f(lv, ls - h, X, Z)) / (2 * h), rel=1e-6, abs=1e-8)
        E = np.zeros_like(Z)
        E[1, 0] = h
        assert d_Z[1, 0] == pytest.approx((f(lv, ls, X, Z + E) - f(lv, ls, X, Z - E)) / (2 * h), rel=1e-6, abs=1e-8)
        E = np.zeros_like(X)
        E[2, 1] = h
        assert d_X[2, 1] == pytest.approx((f(lv, ls, X + E, Z) - f(lv, ls, X - E, Z)) / (2 * h), rel=1e-6, abs=1e-8)

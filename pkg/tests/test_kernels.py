import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from latentcoach import kernels
from latentcoach.errors import InvalidInputError, NumericalError
from latentcoach.kernels import RbfHyperparams


def hp(s, g, n):
    return RbfHyperparams.from_natural(s, g, n)


def brute_rbf(X, Xs, s, g):
    out = np.empty((len(X), len(Xs)))
    for i, a in enumerate(X):
        for j, b in enumerate(Xs):
            out[i, j] = s * np.exp(-0.5 * g * sum((a[d] - b[d]) ** 2 for d in range(len(a))))
    return out


finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def test_single_point_gram():
    K, _, jitter = kernels.gram_factor(np.zeros((1, 2)), hp(1.0, 1.0, 0.1))
    assert K[0, 0] == pytest.approx(1.1 + jitter, abs=1e-15)
    assert jitter == pytest.approx(1e-8)


def test_identical_points_offdiag_is_signal():
    K = kernels.gram_with_jitter(np.ones((2, 2)), hp(2.5, 1.0, 1e-3), 0.0)
    assert K[0, 1] == 2.5


def test_unit_distance_offdiag():
    K = kernels.gram_with_jitter(np.array([[0.0], [1.0]]), hp(1.0, 1.0, 1e-300), 0.0)
    assert K[0, 1] == pytest.approx(np.exp(-0.5), rel=1e-14)
    assert K[0, 1] == pytest.approx(0.60653, abs=1e-5)


def test_cross_closed_form():
    k = kernels.cross([[0.0]], [[2.0]], hp(2.0, 0.5, 0.1))
    assert k[0, 0] == pytest.approx(2.0 * np.exp(-1.0), rel=1e-14)
    assert k[0, 0] == pytest.approx(0.73576, abs=1e-5)


def test_cross_self_is_signal_and_dimension_check():
    X = np.random.default_rng(0).normal(size=(4, 2))
    np.testing.assert_allclose(np.diag(kernels.cross(X, X, hp(1.7, 0.3, 0.1))), 1.7)
    with pytest.raises(InvalidInputError):
        kernels.cross(X, np.zeros((2, 3)), hp(1, 1, 1))


def test_non_finite_input_rejected():
    with pytest.raises(InvalidInputError):
        kernels.gram([[0.0], [np.nan]], hp(1, 1, 1))
    with pytest.raises(InvalidInputError):
        RbfHyperparams.from_natural(1.0, -1.0, 0.1)


def test_jitter_escalation_and_failure():
    levels = kernels.jitter_levels(hp(2.0, 1.0, 1.0))
    np.testing.assert_allclose(levels, [2e-8, 2e-7, 2e-6, 2e-5, 2e-4])
    # duplicate points with vanishing noise need more than the first jitter level
    X = np.zeros((3, 1))
    h = RbfHyperparams.from_log([0.0, 0.0, -800.0])
    K, L, jitter = kernels.gram_factor(X, h)
    np.testing.assert_allclose(L @ L.T, K, atol=1e-12)
    bad = -np.eye(2)
    with pytest.raises(NumericalError):
        kernels.factor_rbf(bad, hp(1.0, 1.0, 1e-12))


@settings(max_examples=50, deadline=None)
@given(arrays(float, st.tuples(st.integers(1, 10), st.integers(1, 3)), elements=finite),
       st.floats(0.1, 5), st.floats(0.05, 5), st.floats(1e-6, 1))
def test_gram_symmetric_factorisable_and_matches_cross(X, s, g, n):
    h = hp(s, g, n)
    K, L, jitter = kernels.gram_factor(X, h)
    assert np.array_equal(K, K.T)
    np.testing.assert_allclose(L @ L.T, K, rtol=1e-10, atol=1e-10 * s)
    assert np.linalg.eigvalsh(K).min() > 0
    C = kernels.cross(X, X, h) + (n + jitter) * np.eye(len(X))
    np.testing.assert_allclose(C, K, atol=1e-12)
    np.testing.assert_allclose(kernels.cross(X, X, h), brute_rbf(X, X, s, g), rtol=1e-12)


def test_grad_noise_is_scaled_identity():
    X = np.random.default_rng(1).normal(size=(5, 2))
    h = hp(1.3, 0.7, 0.05)
    _, _, d_noise = kernels.grad_gram_hyper(X, h)
    np.testing.assert_allclose(d_noise, 0.05 * np.eye(5), rtol=1e-14)


def test_grad_inputs_zero_for_identical_points():
    D = kernels.grad_gram_inputs(np.ones((4, 2)), hp(1.0, 2.0, 0.1))
    assert np.all(D == 0)


def _fd_hyper(X, h, jitter, eps=1e-5):
    out = []
    for i in range(3):
        lp, lm = h.as_log(), h.as_log()
        lp[i] += eps
        lm[i] -= eps
        hp_, hm_ = RbfHyperparams.from_log(lp), RbfHyperparams.from_log(lm)
        # jitter is a fixed multiple of the signal variance
        jp = jitter / h.signal_variance * hp_.signal_variance
        jm = jitter / h.signal_variance * hm_.signal_variance
        out.append((kernels.gram_with_jitter(X, hp_, jp) - kernels.gram_with_jitter(X, hm_, jm))
                   / (2 * eps))
    return out


def _rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12)


def test_hyper_and_input_gradients_match_finite_differences():
    rng = np.random.default_rng(42)
    eps = 1e-5
    for _ in range(100):
        N = rng.integers(2, 9)
        X = rng.normal(size=(N, 2))
        h = RbfHyperparams.from_log(rng.normal(scale=0.5, size=3))
        jitter = 1e-8 * h.signal_variance
        analytic = kernels.grad_gram_hyper(X, h, jitter)
        for a, f in zip(analytic, _fd_hyper(X, h, jitter)):
            assert _rel(a, f) < 1e-4
        D = kernels.grad_gram_inputs(X, h)
        G = rng.normal(size=(N, N))
        # scalar objective sum(G * K) differentiated through every input entry
        fd = np.empty_like(X)
        for n in range(N):
            for d in range(2):
                Xp, Xm = X.copy(), X.copy()
                Xp[n, d] += eps
                Xm[n, d] -= eps
                fd[n, d] = (np.sum(G * kernels.cross(Xp, Xp, h))
                            - np.sum(G * kernels.cross(Xm, Xm, h))) / (2 * eps)
        via_tensor = np.einsum("nj,njd->nd", G + G.T, D)
        assert _rel(via_tensor, fd) < 1e-4
        np.testing.assert_allclose(kernels.input_gradient(G, X, h), via_tensor, rtol=1e-10,
                                   atol=1e-12)

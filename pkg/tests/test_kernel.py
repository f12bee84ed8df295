import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from persistmon import kernel, oracles
from persistmon.errors import ContractError, InputError

E = np.e

finite = st.floats(-3.0, 3.0, allow_nan=False)
coords = st.tuples(st.floats(-10, 10), st.floats(-10, 10))
hypers = st.builds(lambda a, b, c, d: kernel.Hyperparameters(a, b, (c, d)), finite, finite, finite, finite)


def test_same_point_value(h_manual):
    x = np.array([3.0, -1.0])
    assert kernel.eval(h_manual, x, x, True) == pytest.approx(E**2 + E**-2, rel=1e-12)
    assert kernel.eval(h_manual, x, x, True) == pytest.approx(7.5244, abs=1e-4)


def test_one_length_scale_apart(h_manual):
    v = kernel.eval(h_manual, np.array([E, 0.0]), np.array([0.0, 0.0]), False)
    assert v == pytest.approx(E**2 * np.exp(-0.5), rel=1e-12)
    assert v == pytest.approx(4.4817, abs=1e-4)


def test_learned_values_same_point():
    h = kernel.Hyperparameters(-4.6, 6.8, (3.4, 3.2))
    x = np.zeros(2)
    assert kernel.eval(h, x, x, True) == pytest.approx(np.exp(6.8) + np.exp(-4.6), rel=1e-12)


def test_delta_is_by_index(h_manual):
    x = np.array([1.0, 2.0])
    assert kernel.eval(h_manual, x, x, False) == pytest.approx(E**2)


def test_dimension_mismatch(h_manual):
    with pytest.raises(ContractError):
        kernel.eval(h_manual, np.zeros(3), np.zeros(2), False)
    with pytest.raises(ContractError):
        kernel.grad(h_manual, np.zeros(2), np.zeros(1), False)


def test_grad_same_point(h_manual):
    x = np.array([0.5, 0.5])
    np.testing.assert_allclose(kernel.grad(h_manual, x, x, True), [E**-2, E**2, 0.0, 0.0], rtol=1e-12)


def test_grad_length_scale_entry(h_manual):
    g = kernel.grad(h_manual, np.array([E, 0.0]), np.zeros(2), False)
    assert g[0] == 0.0
    assert g[2] == pytest.approx(E**2 * np.exp(-0.5), rel=1e-12)
    assert g[3] == 0.0


@settings(max_examples=100, deadline=None)
@given(hypers, coords, coords, st.booleans())
def test_grad_matches_finite_differences(h, x, xp, same):
    x, xp = np.array(x), np.array(xp)
    g = kernel.grad(h, x, xp, same)
    fd = oracles.kernel_fd_gradient(h, x, xp, same)
    # entries that underflow to ~0 are compared absolutely
    scale = max(kernel.eval(h, x, xp, same), 1e-300)
    assert np.all(np.abs(g - fd) <= 1e-4 * np.maximum(np.abs(fd), 1e-6 * scale) + 1e-12)


@settings(max_examples=100, deadline=None)
@given(hypers, coords, coords, st.booleans())
def test_symmetric(h, x, xp, same):
    x, xp = np.array(x), np.array(xp)
    assert kernel.eval(h, x, xp, same) == kernel.eval(h, xp, x, same)


@settings(max_examples=100, deadline=None)
@given(hypers, st.floats(0, 10), st.floats(0, 10), st.floats(-5, 5))
def test_monotone_in_separation(h, d1, d2, other):
    lo, hi = sorted((d1, d2))
    a = kernel.eval(h, np.array([0.0, 0.0]), np.array([lo, other]), False)
    b = kernel.eval(h, np.array([0.0, 0.0]), np.array([hi, other]), False)
    assert b <= a


def test_gram_single_point(h_manual):
    K = kernel.gram(h_manual, np.zeros((1, 2)))
    np.testing.assert_allclose(K, [[E**2 + E**-2]])


def test_gram_coincident_points(h_manual):
    K = kernel.gram(h_manual, np.ones((2, 2)))
    assert K[0, 1] == pytest.approx(E**2)
    np.testing.assert_allclose(np.diag(K), E**2 + E**-2)


def test_gram_positive_definite(h_manual, rng):
    P = rng.uniform(0, 5, (5, 2))
    K = kernel.gram(h_manual, P)
    np.testing.assert_array_equal(K, K.T)
    np.linalg.cholesky(K)
    assert np.all(np.linalg.eigvalsh(K) > 0)


def test_gram_matches_scalar_loop(rng):
    h = oracles.random_hyper(rng)
    P = rng.uniform(0, 5, (7, 2))
    np.testing.assert_allclose(kernel.gram(h, P), oracles.dense_gram(h, P), rtol=1e-13)
    np.testing.assert_allclose(kernel.cross(h, P[:3], P), oracles.dense_cross(h, P[:3], P), rtol=1e-13)


def test_gram_grad_matches_pairwise(rng):
    h = oracles.random_hyper(rng)
    P = rng.uniform(0, 5, (4, 2))
    G = kernel.gram_grad(h, P)
    assert G.shape == (h.size, 4, 4)
    for i in range(4):
        for j in range(4):
            np.testing.assert_allclose(G[:, i, j], kernel.grad(h, P[i], P[j], i == j), rtol=1e-13)


def test_text_round_trip():
    h = kernel.Hyperparameters(-4.6, 6.8, (3.4, 0.1 + 0.2))
    text = h.to_text()
    assert text.splitlines()[0] == "log_sigma_n2=-4.6"
    assert kernel.Hyperparameters.from_text(text) == h


def test_text_rejects_bad_keys():
    with pytest.raises(InputError):
        kernel.Hyperparameters.from_text("log_sigma_n2=1\nlog_sigma_f2=1\n")
    with pytest.raises(InputError):
        kernel.Hyperparameters.from_text("log_sigma_n2=1\nlog_sigma_f2=1\nlog_l_0=1\nfoo=2\n")


def test_non_finite_rejected():
    with pytest.raises(ContractError):
        kernel.Hyperparameters(np.nan, 0.0, (0.0, 0.0))

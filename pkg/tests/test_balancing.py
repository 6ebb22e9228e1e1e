import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fockbt import (BilinearSystem, balance, factor_psd, gramian_direct,
                    hankel_singular_values, truncate)
from fockbt.errors import BadOrder, DegenerateCut, NotMinimal, NotPSD

from conftest import make_2d, make_diagonal, make_scalar, random_stable

SIGMA_2D = [0.5025705, 0.01305301]    # frozen from the independent gramian oracle


def test_scalar_hsv():
    np.testing.assert_allclose(hankel_singular_values(gramian_direct(make_scalar())), [4 / 7],
                               atol=1e-12)


def test_2d_hsv_matches_eigenvalues():
    g = gramian_direct(make_2d())
    s = hankel_singular_values(g)
    ref = np.sort(np.sqrt(np.linalg.eigvals(g.O @ g.P).real))[::-1]
    np.testing.assert_allclose(s, ref, rtol=1e-10)
    np.testing.assert_allclose(s, SIGMA_2D, rtol=1e-6)


def test_factor_psd_reconstructs():
    P = gramian_direct(make_2d()).P
    L = factor_psd(P)
    assert np.linalg.norm(L @ L.T - P) <= 1e-10


def test_factor_psd_rejects_indefinite():
    with pytest.raises(NotPSD):
        factor_psd(np.diag([1.0, -0.1]))


def test_balanced_gramians_are_diagonal():
    bal = balance(make_2d())
    g = gramian_direct(bal.balanced_system)
    np.testing.assert_allclose(g.P, np.diag(bal.sigma), atol=1e-8)
    np.testing.assert_allclose(g.O, np.diag(bal.sigma), atol=1e-8)
    np.testing.assert_allclose(bal.T @ bal.Tinv, np.eye(2), atol=1e-12)


def test_truncation_keeps_leading_states():
    bal = balance(make_2d())
    red = truncate(bal, 1)
    assert red.order == 1 and red.reduced.state_dim == 1
    np.testing.assert_allclose(red.discarded_sigma, [bal.sigma[1]])
    np.testing.assert_allclose(red.reduced.A, bal.balanced_system.A[:1, :1])
    assert red.certificate is not None and red.certificate.valid


def test_truncate_order_checks():
    bal = balance(make_2d())
    for r in (0, 3):
        with pytest.raises(BadOrder):
            truncate(bal, r)


def test_degenerate_cut():
    s = BilinearSystem(np.diag([-1.0, -1.0]), [np.zeros((2, 2))] * 2, np.eye(2), np.eye(2))
    bal = balance(s)
    with pytest.raises(DegenerateCut):
        truncate(bal, 1)
    assert truncate(bal, 1, force=True).order == 1


def test_non_minimal_rejected():
    with pytest.raises(NotMinimal):
        balance(make_diagonal())    # second state unobservable


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(2, 6))
def test_hsv_invariant_under_similarity(seed, k):
    rng = np.random.default_rng(seed)
    sys = random_stable(rng, k)
    T = rng.standard_normal((k, k)) + 3 * np.eye(k)
    other = sys.transformed(T, np.linalg.inv(T))
    with warnings.catch_warnings():
        warnings.simplefilter('ignore')
        s1 = hankel_singular_values(gramian_direct(sys))
        s2 = hankel_singular_values(gramian_direct(other))
    np.testing.assert_allclose(s2, s1, rtol=1e-6, atol=1e-9 * s1[0])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(2, 5))
def test_balanced_realization_property(seed, k):
    sys = random_stable(np.random.default_rng(seed), k)
    s = hankel_singular_values(gramian_direct(sys))
    if s[-1] < 1e-6 * s[0]:
        return
    bal = balance(sys)
    g = gramian_direct(bal.balanced_system)
    np.testing.assert_allclose(g.P, np.diag(bal.sigma), atol=1e-7 * s[0])
    np.testing.assert_allclose(g.O, np.diag(bal.sigma), atol=1e-7 * s[0])

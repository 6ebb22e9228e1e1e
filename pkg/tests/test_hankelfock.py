import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm
from scipy.special import eval_laguerre, roots_laguerre

from fockbt import (BilinearSystem, FockGrid, assemble_hankel, gramian_direct,
                    hankel_singular_values, laguerre_semigroup_moments, subspace_hankel,
                    truncated_hankel)
from fockbt.errors import BadOrder, BudgetExceeded, NotInvariant

from conftest import make_2d, make_blockdiag, make_scalar, random_stable

THETA = 0.125


def quadrature_moments(A, a, m_t, nodes=200):
    x, w = roots_laguerre(nodes)
    out = []
    for j in range(m_t):
        # substitute x = 2 a t and fold exp(-x) into the Gauss-Laguerre weight
        f = [math.exp(xi / 2) * eval_laguerre(j, xi) * expm(A * xi / (2 * a)) for xi in x]
        out.append(np.tensordot(w, f, 1) / math.sqrt(2 * a))
    return np.array(out)


def test_moment_closed_forms():
    E = laguerre_semigroup_moments(np.array([[-1.0]]), 1.0, 2)
    assert E[0, 0, 0] == pytest.approx(math.sqrt(2) / 2, abs=1e-15)
    assert E[1, 0, 0] == 0.0


def test_moments_match_quadrature():
    rng = np.random.default_rng(4)
    A = rng.standard_normal((4, 4)) * 0.3 - 1.5 * np.eye(4)
    E = laguerre_semigroup_moments(A, 1.0, 5)
    np.testing.assert_allclose(E, quadrature_moments(A, 1.0, 5), atol=1e-8)


def test_linear_single_mode():
    H = assemble_hankel(make_scalar().linear_part(), FockGrid(1.0, 1, 1, 1, 1))
    np.testing.assert_allclose(H.dense(), [[0.5]], atol=1e-15)
    np.testing.assert_allclose(H.svd()[0], [0.5], atol=1e-15)


def test_linear_system_has_only_block_00():
    s = make_2d().linear_part()
    H = assemble_hankel(s, FockGrid.for_system(s, m_t=4, K=3))
    bn = H.block_norms()
    assert bn[0, 0] > 0
    bn[0, 0] = 0
    assert np.all(bn == 0)


def test_zero_output_gives_empty_spectrum():
    s = make_2d().with_C(np.zeros((1, 2)))
    assert assemble_hankel(s, FockGrid.for_system(s, m_t=5, K=2)).svd()[0].size == 0


def test_entry_layout_matches_kernel_products():
    s = make_scalar()
    g = FockGrid(0.7, 3, 3, 1, 1)
    D = assemble_hankel(s, g).dense()
    E = laguerre_semigroup_moments(s.A, 0.7, 3)
    N = s.N[0]
    # row: level 1, modes (1, 2); column: level 1, modes (2, 0)
    r, c = g.row_index((1, 2), 0, (0,)), g.col_index((2, 0), 0, (0,))
    expected = (s.C @ E[1] @ N @ E[2] @ E[0] @ N @ E[2] @ s.B)[0, 0]
    assert D[r, c] == pytest.approx(expected, rel=1e-13)


def test_factored_svd_matches_dense():
    s = make_2d()
    H = assemble_hankel(s, FockGrid.for_system(s, m_t=4, K=3))
    ref = np.linalg.svd(H.dense(), compute_uv=False)
    sig = H.svd()[0]
    np.testing.assert_allclose(sig, ref[:sig.size], rtol=1e-10, atol=1e-14)
    assert np.all(ref[sig.size:] < 1e-12)
    assert H.hs_norm() == pytest.approx(np.linalg.norm(H.dense()), rel=1e-12)


def test_scalar_spectral_consistency():
    H = assemble_hankel(make_scalar(), FockGrid.for_system(make_scalar(), m_t=30, K=4))
    assert abs(H.svd()[0][0] - 4 / 7) <= 1e-3


def test_2d_spectrum_approaches_gramian_values():
    s = make_2d()
    ref = hankel_singular_values(gramian_direct(s))
    sig = assemble_hankel(s, FockGrid.for_system(s, m_t=15, K=4)).svd()[0]
    np.testing.assert_allclose(sig[:2], ref, rtol=5e-3)


def test_truncation_layout():
    s = make_2d()
    g = FockGrid.for_system(s, m_t=4, K=3)
    H = assemble_hankel(s, g)
    np.testing.assert_array_equal(truncated_hankel(s, g, 3).dense(), H.dense())
    H1 = truncated_hankel(s, g, 1)
    np.testing.assert_array_equal(H1.block(0, 0), H.block(0, 0))
    assert np.all(H1.block_norms()[1:, :] == 0) and np.all(H1.block_norms()[:, 1:] == 0)
    with pytest.raises(BadOrder):
        truncated_hankel(s, g, 4)


@pytest.mark.parametrize('K', [3, 4])
def test_scalar_truncation_error_closed_form(K):
    # ||H - H^(k)||_HS^2 = sum over (i, j) not both below k of O_i P_j with O_i = P_i = theta^i / 2,
    # which in the grid limit is (4/7)^2 (1 - (1 - theta^k)^2): the ratio per level tends to sqrt(theta)
    s = make_scalar()
    H = assemble_hankel(s, FockGrid.for_system(s, m_t=30, K=K))
    terms = 0.5 * THETA ** np.arange(K)
    for k in range(1, K):
        head = terms[:k].sum()
        exact = math.sqrt(terms.sum() ** 2 - head ** 2)
        assert (H - H.truncated(k)).hs_norm() == pytest.approx(exact, rel=2e-3)


def test_2d_truncation_ratio_is_below_sqrt_theta():
    s = make_2d()
    theta = 0.045
    H = assemble_hankel(s, FockGrid.for_system(s, m_t=15, K=5))
    errs = np.array([(H - H.truncated(k)).hs_norm() for k in range(1, 5)])
    ratios = errs[1:] / errs[:-1]
    assert np.all(ratios < 1)
    fitted = math.exp(np.polyfit(np.arange(1, 5), np.log(errs), 1)[0])
    assert fitted <= math.sqrt(theta) * 1.15


def test_weyl_inequality():
    s = make_2d()
    H = assemble_hankel(s, FockGrid.for_system(s, m_t=8, K=4))
    sig = H.svd()[0]
    for k in range(1, 4):
        Hk = H.truncated(k)
        sk = Hk.svd()[0]
        d = (H - Hk).hs_norm()
        n = max(sig.size, sk.size)
        a = np.pad(sig, (0, n - sig.size))
        b = np.pad(sk, (0, n - sk.size))
        assert np.all(np.abs(a - b) <= d * (1 + 1e-10) + 1e-14)


@pytest.mark.parametrize('make', [make_scalar, make_2d])
def test_block_norm_decay(make):
    s = make()
    from fockbt import stability_certificate
    theta = stability_certificate(s).theta
    bn = assemble_hankel(s, FockGrid.for_system(s, m_t=12, K=4)).block_norms()
    k, j = np.nonzero(bn > 0)
    slope = np.polyfit(k + j, np.log(bn[k, j]), 1)[0]
    assert math.exp(slope) <= math.sqrt(theta) * 1.2


def test_leading_singular_vector_converges_geometrically():
    # the angle between leading singular vectors at depths K and K+1 shrinks by about sqrt(theta)
    s = make_scalar()
    angles = []
    prev = None
    for K in range(1, 6):
        H = assemble_hankel(s, FockGrid.for_system(s, m_t=12, K=K))
        v = H.svd()[2][:, 0]
        if prev is not None:
            # prev lives on the first levels of the deeper grid, zero-padded
            angles.append(math.acos(min(1.0, abs(v[:prev.size] @ prev))))
        prev = v
    ratios = np.array(angles[1:]) / np.array(angles[:-1])
    assert np.all(ratios <= math.sqrt(THETA) * 1.05)
    assert angles[-1] < 0.02


def test_blockdiag_subspace_hankels():
    s = make_blockdiag()
    g = FockGrid.for_system(s, m_t=15, K=4)
    H = assemble_hankel(s, g)
    H2 = subspace_hankel(s, g, np.eye(2))
    assert (H2 - H).trace_norm() == 0.0
    H1 = subspace_hankel(s, g, np.array([[1.0], [0.0]]))
    # the first subsystem alone is the scalar system with A=-1, N=0.5
    first = BilinearSystem([[-1.0]], [[[0.5]]], [[1.0]], [[1.0]])
    np.testing.assert_allclose(H1.svd()[0][:1], assemble_hankel(first, g).svd()[0][:1], rtol=1e-10)
    assert (H1 - H).trace_norm() > 0.1


def test_subspace_must_be_invariant():
    with pytest.raises(NotInvariant):
        subspace_hankel(make_2d(), FockGrid.for_system(make_2d(), m_t=3, K=2),
                        np.array([[1.0], [0.0]]))


def test_budget_guard():
    s = make_2d()
    with pytest.raises(BudgetExceeded):
        assemble_hankel(s, FockGrid.for_system(s, m_t=40, K=6))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 4))
def test_hs_norm_is_frobenius(seed, k):
    s = random_stable(np.random.default_rng(seed), k)
    H = assemble_hankel(s, FockGrid.for_system(s, m_t=3, K=3))
    D = H.dense()
    assert H.hs_norm() == pytest.approx(np.linalg.norm(D), rel=1e-10)
    assert H.trace_norm() == pytest.approx(np.linalg.svd(D, compute_uv=False).sum(), rel=1e-8)

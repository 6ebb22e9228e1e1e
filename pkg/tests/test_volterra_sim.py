import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm, null_space

from fockbt import (BilinearSystem, ControlSignal, gramian_direct, integrate_rk4, output_error,
                    volterra_series)
from fockbt.errors import DimMismatch

from conftest import make_2d, make_blockdiag, make_diagonal, make_scalar


def test_free_flow_matches_semigroup(sys2d):
    x0 = np.array([1.0, -0.5])
    tr = integrate_rk4(sys2d, ControlSignal.zero(), x0, 3.0, 1e-3)
    ref = np.array([expm(sys2d.A * t) @ x0 for t in tr.times])
    assert np.abs(tr.states - ref).max() <= 1e-8
    np.testing.assert_array_equal(tr.outputs, tr.states @ sys2d.C.T)


def test_linear_convolution_closed_form():
    tr = integrate_rk4(make_scalar().linear_part(), ControlSignal.exponential(1.0, 1.0),
                       None, 5.0, 1e-2)
    t = tr.times
    assert np.abs(tr.states[:, 0] - t * np.exp(-t)).max() <= 1e-8


def test_rk4_fourth_order():
    s, u = make_scalar(), ControlSignal.exponential(1.0, 1.0)
    ref = integrate_rk4(s, u, None, 5.0, 1e-3).states[-1]
    e1 = np.abs(integrate_rk4(s, u, None, 5.0, 0.1).states[-1] - ref)
    e2 = np.abs(integrate_rk4(s, u, None, 5.0, 0.05).states[-1] - ref)
    assert 12 <= (e1 / e2)[0] <= 20


def test_volterra_without_control_is_free_flow(sys2d):
    x0 = np.array([0.2, 1.0])
    tr = volterra_series(sys2d, ControlSignal.zero(), x0, 2.0, 1e-2, depth=1)
    E = expm(sys2d.A * 1e-2)
    x = x0.copy()
    for n in range(1, tr.times.size):
        x = E @ x
        np.testing.assert_allclose(tr.states[n], x, rtol=1e-13, atol=1e-16)


def test_volterra_converges_to_rk4_geometrically():
    s, u = make_scalar(), ControlSignal.exponential(0.3, 1.0)
    ref = integrate_rk4(s, u, None, 10.0, 1e-3).states
    errs = [np.abs(volterra_series(s, u, None, 10.0, 1e-3, d).states - ref).max()
            for d in range(1, 6)]
    ratio_bound = 1.0 * 0.5 * u.l2 / math.sqrt(2.0)
    ratios = np.array(errs[1:]) / np.array(errs[:-1])
    # the trapezoid error of order h^2 floors the sequence near 1e-9
    assert np.all(ratios[:3] <= ratio_bound)
    assert np.abs(volterra_series(s, u, None, 10.0, 1e-3, 12).states - ref).max() <= 1e-6


def test_volterra_warns_outside_convergence_radius():
    with pytest.warns(UserWarning):
        volterra_series(make_scalar(), ControlSignal.exponential(5.0, 1.0), None, 1.0, 1e-2, 2)


def test_output_error_trivial_cases(sys2d, reduced2d):
    u = ControlSignal.exponential(0.3, 1.0)
    assert output_error(sys2d, sys2d, u)[0] <= 1e-10
    assert output_error(sys2d, reduced2d, ControlSignal.zero())[0] == 0.0
    with pytest.raises(DimMismatch):
        output_error(sys2d, BilinearSystem([[-1.0]], [[[0.0]]], [[1.0]], [[1.0], [1.0]]), u)


def test_divergence_is_flagged():
    s = BilinearSystem([[-1.0]], [[[50.0]]], [[1.0]], [[1.0]])
    tr = integrate_rk4(s, ControlSignal.window(2.0, 0.0, 100.0), [1.0], 100.0, 1e-2)
    assert tr.diverged and np.isnan(tr.states[-1, 0])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_kernel_of_observability_gramian_is_silent(seed):
    s = make_diagonal()
    O = gramian_direct(s).O
    ker = null_space(O, rcond=1e-12)
    assert ker.shape[1] == 1
    homog = s.with_B(np.zeros((2, 1)))
    rng = np.random.default_rng(seed)
    vals = rng.uniform(-1.5, 1.5, size=(401, 1))
    u = ControlSignal.sampled(vals, 0.005)
    tr = integrate_rk4(homog, u, ker[:, 0], 2.0, 1e-2)
    assert np.abs(tr.outputs).max() <= 1e-9


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_range_of_reachability_gramian_is_invariant(seed):
    s = make_blockdiag().with_B(np.array([[1.0], [0.0]]))
    P = gramian_direct(s).P
    lam, V = np.linalg.eigh(P)
    ran = V[:, lam > 1e-12 * lam.max()]
    rng = np.random.default_rng(seed)
    x0 = ran @ rng.standard_normal(ran.shape[1])
    u = ControlSignal.sampled(rng.uniform(-1.5, 1.5, size=(401, 1)), 0.005)
    tr = integrate_rk4(s, u, x0, 2.0, 1e-2)
    leak = tr.states - tr.states @ ran @ ran.T
    assert np.abs(leak).max() <= 1e-9

"""Time-domain simulation of bilinear systems.

Two integrators are provided: classical fourth-order Runge-Kutta, used as
the reference, and the truncated Volterra series whose terms are

    zeta_0(t) = exp(At) phi_0,
    zeta_1(t) = int_0^t exp(A(t-s)) (sum_i u_i(s) N_i zeta_0(s) + B u(s)) ds,
    zeta_k(t) = int_0^t exp(A(t-s)) sum_i u_i(s) N_i zeta_{k-1}(s) ds.
"""

from dataclasses import dataclass
import math
import warnings

import numpy as np
from scipy.linalg import expm

from .errors import DimMismatch
from .sysmodel import ControlSignal, admissibility_threshold, check_system, stability_certificate

__all__ = ['SimulationTrace', 'integrate_rk4', 'volterra_series', 'output_error',
           'default_horizon']

BLOWUP = 1e150


@dataclass(frozen=True, eq=False)
class SimulationTrace:
    """States and outputs on a uniform time grid.

    ``diverged`` is set when the state left the floating-point range; the
    remaining samples are NaN.
    """

    times: np.ndarray
    states: np.ndarray
    outputs: np.ndarray
    method: str
    u_ref: ControlSignal
    diverged: bool = False

    @property
    def step(self):
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0


def _grid(T, h):
    if not h > 0:
        raise ValueError('step must be positive')
    K = max(int(round(T / h)), 1)
    return K, h * np.arange(K + 1)


def _phi0(sys, phi0):
    if phi0 is None:
        return np.zeros(sys.state_dim)
    x = np.asarray(phi0, dtype=float).reshape(-1)
    if x.size != sys.state_dim:
        raise DimMismatch(f'initial state has {x.size} entries, system has {sys.state_dim} states')
    return x


def _check_control(sys, u):
    if u.n != sys.input_dim:
        raise DimMismatch(f'control has {u.n} channels, system has {sys.input_dim} inputs')


def integrate_rk4(sys, u, phi0=None, T=10.0, h=1e-2):
    """Classical RK4 for ``x' = A x + sum_i u_i N_i x + B u``.

    The control is evaluated at ``t``, ``t + h/2`` and ``t + h`` of every
    step; sampled controls with step ``h/2`` are used exactly.
    """
    check_system(sys)
    _check_control(sys, u)
    K, times = _grid(T, h)
    x = _phi0(sys, phi0)
    U = u(0.5 * h * np.arange(2 * K + 1))
    A, B = sys.A, sys.B
    N = np.array(sys.N)

    def f(x, ut):
        return A @ x + np.tensordot(ut, N, 1) @ x + B @ ut

    states = np.full((K + 1, sys.state_dim), np.nan)
    states[0] = x
    diverged = False
    for n in range(K):
        u0, um, u1 = U[2 * n], U[2 * n + 1], U[2 * n + 2]
        k1 = f(x, u0)
        k2 = f(x + 0.5 * h * k1, um)
        k3 = f(x + 0.5 * h * k2, um)
        k4 = f(x + h * k3, u1)
        x = x + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)) or np.abs(x).max() > BLOWUP:
            diverged = True
            break
        states[n + 1] = x
    return SimulationTrace(times, states, states @ sys.C.T, 'rk4', u, diverged)


def volterra_series(sys, u, phi0=None, T=10.0, h=1e-2, depth=4, certificate=None):
    """Truncated Volterra series ``sum_{k <= depth} zeta_k`` on a uniform grid.

    Convolutions use the cumulative trapezoid rule
    ``I_{n+1} = e^{Ah} I_n + h/2 (e^{Ah} g_n + g_{n+1})``, exact for the
    semigroup factor and second order in ``h``.  A warning is issued when
    ``u`` is too large for the series to be guaranteed to converge.
    """
    check_system(sys)
    _check_control(sys, u)
    if depth < 0:
        raise ValueError('depth must be nonnegative')
    try:
        cert = certificate or stability_certificate(sys)
        limit = math.inf if cert.Xi == 0 else math.sqrt(2 * cert.nu) / (cert.M * cert.Xi)
        if not u.l2 < limit:
            warnings.warn(f'control L2 norm {u.l2:.3g} exceeds the convergence radius '
                          f'{limit:.3g}', stacklevel=2)
    except Exception:
        warnings.warn('no stability certificate; Volterra series may diverge', stacklevel=2)
    K, times = _grid(T, h)
    Ut = u(times)
    E = expm(sys.A * h)
    N = np.array(sys.N)
    k = sys.state_dim

    def convolve(g):
        out = np.empty_like(g)
        out[0] = 0.0
        for n in range(K):
            out[n + 1] = E @ (out[n] + 0.5 * h * g[n]) + 0.5 * h * g[n + 1]
        return out

    zeta = np.empty((K + 1, k))
    zeta[0] = _phi0(sys, phi0)
    for n in range(K):
        zeta[n + 1] = E @ zeta[n]
    total = zeta.copy()
    for level in range(1, depth + 1):
        g = np.einsum('ti,iab,tb->ta', Ut, N, zeta)
        if level == 1:
            g = g + Ut @ sys.B.T
        zeta = convolve(g)
        total += zeta
    return SimulationTrace(times, total, total @ sys.C.T, f'volterra:{depth}', u)


def default_horizon(sys, u, rel=1e-8):
    """Horizon past the control support long enough for the state to decay by ``rel``."""
    cert = stability_certificate(sys)
    return u.horizon + math.log(cert.M / rel) / cert.nu


def output_error(full, red, u, T=None, h=1e-2):
    """``sup_t ||y(t) - y_r(t)||_2`` from zero initial states, by RK4.

    Returns
    -------
    err : float
    traces : (SimulationTrace, SimulationTrace)
    """
    if full.input_dim != red.input_dim or full.output_dim != red.output_dim:
        raise DimMismatch('full and reduced systems must share input and output dimensions')
    if T is None:
        T = max(default_horizon(full, u), default_horizon(red, u))
    tf = integrate_rk4(full, u, None, T, h)
    tr = integrate_rk4(red, u, None, T, h)
    diff = np.linalg.norm(tf.outputs - tr.outputs, axis=1)
    return float(np.nanmax(diff)) if diff.size else 0.0, (tf, tr)

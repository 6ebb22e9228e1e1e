"""Bilinear systems, control signals and stability certificates.

A bilinear system is the quadruple ``(A, N, B, C)`` with dynamics

    x'(t) = A x(t) + sum_i u_i(t) N_i x(t) + B u(t),    y(t) = C x(t).

Every object defined here is immutable after construction: arrays are
copied and flagged read-only.
"""

from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from scipy.linalg import expm

from .errors import InvalidSystem, MissingCertificate, NotStable

__all__ = [
    'BilinearSystem', 'StabilityCertificate', 'ControlSignal', 'ControlNorms',
    'validate_system', 'check_system', 'stability_certificate',
    'admissibility_threshold', 'control_norms', 'spectral_abscissa',
]


def _frozen(a, kind=None):
    arr = np.array(a, dtype=float)
    if kind == 'col' and arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif kind == 'row' and arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim < 2:
        arr = np.atleast_2d(arr)
    arr.setflags(write=False)
    return arr


def spectral_abscissa(A):
    """Largest real part of the eigenvalues of ``A``."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return -math.inf
    return float(np.max(np.linalg.eigvals(A).real))


@dataclass(frozen=True, eq=False)
class BilinearSystem:
    """Finite-dimensional bilinear control system.

    Parameters
    ----------
    A : (k, k) array_like
        Drift matrix.
    N : sequence of (k, k) array_like
        One bilinear coupling matrix per input channel.
    B : (k, n) array_like
        Input matrix; column ``i`` is the vector fed by ``u_i``.
    C : (m, k) array_like
        Output matrix.
    label : str
        Free-form name carried into reports.
    """

    A: np.ndarray
    N: tuple
    B: np.ndarray
    C: np.ndarray
    label: str = ''

    def __post_init__(self):
        object.__setattr__(self, 'A', _frozen(self.A))
        object.__setattr__(self, 'N', tuple(_frozen(Ni) for Ni in self.N))
        object.__setattr__(self, 'B', _frozen(self.B, 'col'))
        object.__setattr__(self, 'C', _frozen(self.C, 'row'))

    @property
    def state_dim(self):
        return self.A.shape[0]

    @property
    def input_dim(self):
        return self.B.shape[1]

    @property
    def output_dim(self):
        return self.C.shape[0]

    @property
    def is_linear(self):
        return all(not np.any(Ni) for Ni in self.N)

    def transformed(self, T, Tinv, label=None):
        """State-space change of coordinates ``z = T x``."""
        T = np.asarray(T, dtype=float)
        Tinv = np.asarray(Tinv, dtype=float)
        return BilinearSystem(T @ self.A @ Tinv, [T @ Ni @ Tinv for Ni in self.N],
                              T @ self.B, self.C @ Tinv,
                              self.label if label is None else label)

    def dual(self):
        """Transposed system ``(A^T, N_i^T, C^T, B^T)``; swaps the gramians."""
        return BilinearSystem(self.A.T, [Ni.T for Ni in self.N], self.C.T, self.B.T,
                              self.label + "'" if self.label else '')

    def with_B(self, B):
        return BilinearSystem(self.A, self.N, B, self.C, self.label)

    def with_C(self, C):
        return BilinearSystem(self.A, self.N, self.B, C, self.label)

    def linear_part(self):
        """Same system with every ``N_i`` set to zero."""
        return BilinearSystem(self.A, [np.zeros_like(Ni) for Ni in self.N], self.B, self.C,
                              self.label)

    def __repr__(self):
        return (f'BilinearSystem(k={self.state_dim}, n={self.input_dim}, '
                f'm={self.output_dim}, label={self.label!r})')


def validate_system(sys):
    """Return a list of invariant violations; empty means well formed."""
    out = []
    A, B, C = sys.A, sys.B, sys.C
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        out.append(f'A must be square and nonempty, got shape {A.shape}')
        return out
    k = A.shape[0]
    if B.ndim != 2 or B.shape[0] != k or B.shape[1] == 0:
        out.append(f'B must have shape ({k}, n) with n >= 1, got {B.shape}')
    if C.ndim != 2 or C.shape[1] != k or C.shape[0] == 0:
        out.append(f'C must have shape (m, {k}) with m >= 1, got {C.shape}')
    n = B.shape[1] if B.ndim == 2 else None
    if n is not None and len(sys.N) != n:
        out.append(f'N-list has {len(sys.N)} matrices but input_dim is {n}')
    for i, Ni in enumerate(sys.N):
        if Ni.shape != (k, k):
            out.append(f'N[{i}] must have shape ({k}, {k}), got {Ni.shape}')
    for name, M in [('A', A), ('B', B), ('C', C)] + [(f'N[{i}]', Ni) for i, Ni in enumerate(sys.N)]:
        if M.size and not np.all(np.isfinite(M)):
            out.append(f'{name} has non-finite entries')
    return out


def check_system(sys):
    """Raise :class:`InvalidSystem` unless ``validate_system`` is clean."""
    problems = validate_system(sys)
    if problems:
        raise InvalidSystem('; '.join(problems))
    return sys


@dataclass(frozen=True)
class StabilityCertificate:
    """Constants ``M, nu`` with ``||exp(At)|| <= M exp(-nu t)`` plus coupling sizes.

    ``Gamma = sqrt(sum ||N_i N_i^T||)``, ``Xi = sum ||N_i||`` and
    ``theta = M^2 Gamma^2 / (2 nu)``; the gramian series converge when
    ``theta < 1``.
    """

    nu: float
    M: float
    Gamma: float
    Xi: float
    theta: float
    method: str

    @property
    def valid(self):
        return self.theta < 1.0


def stability_certificate(sys, method=None, margin=1e-3, grid_points=400):
    """Build a :class:`StabilityCertificate` for ``sys``.

    With ``method=None`` the logarithmic norm ``mu = lambda_max((A + A^T)/2)``
    is used when negative (``M = 1``, ``nu = -mu``); otherwise ``nu`` is the
    spectral abscissa shrunk by ``margin`` and ``M`` is the supremum of
    ``||exp(At)|| exp(nu t)`` over a logarithmic time grid.  The grid value is
    a numerical estimate, not a proof.  Normal matrices skip the grid since
    ``M = 1, nu = -abscissa`` is then exact.
    """
    check_system(sys)
    A = sys.A
    alpha = spectral_abscissa(A)
    if alpha >= 0:
        raise NotStable(f'spectral abscissa of A is {alpha:.3g} >= 0')
    mu = float(np.linalg.eigvalsh((A + A.T) / 2).max())
    if method is None:
        method = 'log-norm' if mu < 0 else 'grid-estimate'
    if method == 'log-norm':
        if mu >= 0:
            raise NotStable(f'logarithmic norm {mu:.3g} is not negative')
        nu, M = -mu, 1.0
    elif method == 'grid-estimate' and np.allclose(A @ A.T, A.T @ A, rtol=0,
                                                 atol=1e-13 * np.linalg.norm(A, 2) ** 2):
        # normal A: ||exp(At)|| = exp(alpha t) exactly
        nu, M = -alpha, 1.0
    elif method == 'grid-estimate':
        nu = -alpha * (1 - margin)
        shifted = A + nu * np.eye(A.shape[0])
        t_max = 50.0 / (margin * -alpha)
        ts = np.concatenate(([0.0], np.logspace(-4, np.log10(t_max), grid_points)))
        M = max(np.linalg.norm(expm(shifted * t), 2) for t in ts)
        M = max(M, 1.0)
    else:
        raise ValueError(f'unknown certificate method {method!r}')
    Gamma = math.sqrt(sum(np.linalg.norm(Ni @ Ni.T, 2) for Ni in sys.N))
    Xi = float(sum(np.linalg.norm(Ni, 2) for Ni in sys.N))
    theta = M ** 2 * Gamma ** 2 / (2 * nu)
    return StabilityCertificate(nu=float(nu), M=float(M), Gamma=Gamma, Xi=Xi,
                                theta=float(theta), method=method)


def admissibility_threshold(cert, n):
    """``min(1/sqrt(n), sqrt(2 nu)/(M Xi))``: the control size allowed by the output bound."""
    first = 1 / math.sqrt(n)
    if cert.Xi == 0:
        return first
    return min(first, math.sqrt(2 * cert.nu) / (cert.M * cert.Xi))


@dataclass(frozen=True)
class ControlNorms:
    """Norm bundle of a control signal.

    ``l2`` is the L2 norm in time of the pointwise max-norm, ``linf`` the
    supremum of the pointwise max-norm, ``lp`` maps ``p`` to the L^p norm of
    the pointwise Euclidean norm and ``h2`` is ``sup_t ||u(t)||_2``.
    """

    l2: float
    linf: float
    n: int
    h2: float = None
    lp: dict = field(default_factory=dict)
    admissible: bool = None
    threshold: float = None


class ControlSignal:
    """Control input on ``[0, inf)``, zero beyond its horizon.

    Build one with :meth:`sampled`, :meth:`exponential`, :meth:`window` or
    :meth:`zero`.  Calling the signal evaluates it at one or many times;
    sampled signals are linearly interpolated.
    """

    def __init__(self, kind, n, amp=None, rate=0.0, t0=0.0, t1=0.0, values=None, step=0.0):
        self.kind = kind
        self.n = int(n)
        self.amp = None if amp is None else _vec(amp, self.n)
        self.rate = float(rate)
        self.t0 = float(t0)
        self.t1 = float(t1)
        if values is not None:
            values = np.array(values, dtype=float)
            if values.ndim == 1:
                values = values.reshape(-1, 1)
            if values.shape[1] != self.n or values.shape[0] < 2:
                raise ValueError(f'samples must have shape (K>=2, {self.n}), got {values.shape}')
            if not np.all(np.isfinite(values)):
                raise ValueError('control samples must be finite')
            values.setflags(write=False)
        self.values = values
        self.step = float(step)
        if kind == 'sampled' and not self.step > 0:
            raise ValueError('sampled controls need a positive step')
        if kind == 'exponential' and not self.rate > 0:
            raise ValueError('exponential controls need a positive decay rate')
        if kind == 'window' and not self.t1 >= self.t0 >= 0:
            raise ValueError('window controls need 0 <= t0 <= t1')
        self._l2 = self._compute_l2()
        self._linf = self._compute_linf()

    # constructors -------------------------------------------------------
    @classmethod
    def sampled(cls, values, step):
        values = np.asarray(values, dtype=float)
        n = 1 if values.ndim == 1 else values.shape[1]
        return cls('sampled', n, values=values, step=step)

    @classmethod
    def exponential(cls, amp, rate):
        amp = np.atleast_1d(np.asarray(amp, dtype=float))
        return cls('exponential', amp.size, amp=amp, rate=rate)

    @classmethod
    def window(cls, amp, t0, t1):
        amp = np.atleast_1d(np.asarray(amp, dtype=float))
        return cls('window', amp.size, amp=amp, t0=t0, t1=t1)

    @classmethod
    def zero(cls, n=1):
        return cls('zero', n)

    # evaluation ---------------------------------------------------------
    @property
    def horizon(self):
        """Time after which the signal is (numerically) zero."""
        if self.kind == 'sampled':
            return self.step * (len(self.values) - 1)
        if self.kind == 'window':
            return self.t1
        if self.kind == 'exponential':
            # amplitude below 1e-16 of its initial value
            return 37.0 / self.rate
        return 0.0

    def effective_horizon(self, rel=1e-8):
        """Time after which ``|u|`` stays below ``rel`` times its peak."""
        if self.kind == 'exponential':
            return math.log(1 / rel) / self.rate
        return self.horizon

    def __call__(self, t):
        scalar = np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros((t.size, self.n))
        if self.kind == 'exponential':
            out = np.exp(-self.rate * np.clip(t, 0, None))[:, None] * self.amp[None, :]
            out[t < 0] = 0
        elif self.kind == 'window':
            inside = (t >= self.t0) & (t < self.t1)
            out[inside] = self.amp
        elif self.kind == 'sampled':
            grid = self.step * np.arange(len(self.values))
            for j in range(self.n):
                out[:, j] = np.interp(t, grid, self.values[:, j], left=0.0, right=0.0)
            # right endpoint belongs to the signal
            out[np.isclose(t, grid[-1], rtol=0, atol=1e-12 * self.step)] = self.values[-1]
        return out[0] if scalar else out

    def resample(self, step, T=None):
        """Sampled copy on ``[0, T]`` with the given step."""
        T = self.horizon if T is None else T
        K = max(int(round(T / step)), 1)
        return ControlSignal.sampled(self(step * np.arange(K + 1)), step)

    # norms --------------------------------------------------------------
    def _compute_l2(self):
        if self.kind == 'zero':
            return 0.0
        if self.kind == 'exponential':
            return float(np.abs(self.amp).max() / math.sqrt(2 * self.rate))
        if self.kind == 'window':
            return float(np.abs(self.amp).max() * math.sqrt(self.t1 - self.t0))
        return math.sqrt(_trapezoid(np.abs(self.values).max(axis=1) ** 2, self.step))

    def _compute_linf(self):
        if self.kind == 'zero':
            return 0.0
        if self.kind == 'sampled':
            return float(np.abs(self.values).max())
        if self.kind == 'window' and self.t1 == self.t0:
            return 0.0
        return float(np.abs(self.amp).max())

    @property
    def l2(self):
        """L2 norm in time of ``||u(t)||_inf`` (cached)."""
        return self._l2

    @property
    def linf(self):
        """Supremum over time of ``||u(t)||_inf`` (cached)."""
        return self._linf

    def lp(self, p):
        """L^p norm in time of the Euclidean norm ``||u(t)||_2``."""
        if self.kind == 'zero':
            return 0.0
        if self.kind == 'sampled':
            e = np.linalg.norm(self.values, axis=1)
            if math.isinf(p):
                return float(e.max())
            return float(_trapezoid(e ** p, self.step) ** (1 / p))
        a = float(np.linalg.norm(self.amp))
        if self.kind == 'window' and self.t1 == self.t0:
            return 0.0
        if math.isinf(p):
            return a
        if self.kind == 'exponential':
            return a * (p * self.rate) ** (-1 / p)
        return a * (self.t1 - self.t0) ** (1 / p)

    @property
    def h2(self):
        """``sup_t ||u(t)||_2``; the stochastic-control norm of a deterministic signal."""
        return self.lp(math.inf)

    def __repr__(self):
        return f'ControlSignal(kind={self.kind!r}, n={self.n}, l2={self.l2:.6g})'


def _vec(a, n):
    a = np.array(a, dtype=float).reshape(-1)
    if a.size != n:
        raise ValueError(f'expected {n} amplitudes, got {a.size}')
    a.setflags(write=False)
    return a


def _trapezoid(y, h):
    y = np.asarray(y, dtype=float)
    if y.size < 2:
        return 0.0
    return float(h * (y.sum() - 0.5 * (y[0] + y[-1])))


def control_norms(u, certificate=None, admissibility=False, ps=(1, 2, math.inf)):
    """Norm bundle of ``u``, with the admissibility flag when a certificate is given.

    Raises :class:`MissingCertificate` when ``admissibility`` is requested
    without a certificate.
    """
    if admissibility and certificate is None:
        raise MissingCertificate('admissibility needs a stability certificate')
    adm = thr = None
    if certificate is not None:
        if not certificate.valid:
            warnings.warn(f'certificate has theta={certificate.theta:.3g} >= 1', stacklevel=2)
        thr = admissibility_threshold(certificate, u.n)
        adm = u.l2 < thr
    return ControlNorms(l2=u.l2, linf=u.linf, n=u.n, h2=u.h2,
                        lp={p: u.lp(p) for p in ps}, admissible=adm, threshold=thr)

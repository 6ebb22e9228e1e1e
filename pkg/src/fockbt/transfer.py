"""Multivariable transfer functions, Volterra kernels and mixed Hardy norms.

The ``k``-th transfer function of a bilinear system is

    G_k(s_1, ..., s_{k+1}) = C R(s_1) N_{n_1} R(s_2) ... N_{n_k} R(s_{k+1}) B,

with ``R(s) = (sI - A)^{-1}``, stacked over the tensor indices
``n_1..n_k``.  Mixed norms take the supremum over one frequency variable
on the imaginary axis and the H2 norm over the remaining ones.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.linalg import expm

from .errorbound import composite_system, delta_hankel_trace_norm
from .errors import BudgetExceeded, SingularResolvent
from .gramians import gramian_series
from .sysmodel import check_system

__all__ = ['FrequencyGrid', 'MixedNormEstimate', 'TransferBoundResult', 'eval_Gk',
           'eval_volterra_kernel', 'kernel_mixed_norm', 'mixed_hardy_norm',
           'transfer_bound_check', 'TRANSFER_BOUND_TERMS']

# (transfer order k, sup-variable index i) of the computable left-hand terms
TRANSFER_BOUND_TERMS = ((0, 1), (1, 1), (2, 2))
MAX_ORDER = 2


def _resolvent(A, s):
    d = A.shape[0]
    M = s * np.eye(d) - A
    if np.linalg.cond(M) > 1e14:
        raise SingularResolvent(f'sI - A is singular at s={s}')
    return np.linalg.solve(M, np.eye(d))


def eval_Gk(sys, k, s):
    """Evaluate ``G_k`` at ``s = (s_1, ..., s_{k+1})``.

    Returns
    -------
    G : (m * n**k, n) complex ndarray
        Row index ``out * n**k + (n_1..n_k)`` in lexicographic order.
    """
    check_system(sys)
    s = list(np.atleast_1d(s))
    if len(s) != k + 1:
        raise ValueError(f'G_{k} takes {k + 1} frequency arguments, got {len(s)}')
    X = (sys.C @ _resolvent(sys.A, s[0]))[:, None, :]          # (m, 1, d)
    for sj in s[1:]:
        R = _resolvent(sys.A, sj)
        X = np.einsum('ard,pde->arpe', X, np.array(sys.N) @ R)  # (m, r, n, d)
        X = X.reshape(X.shape[0], -1, X.shape[-1])
    return (X @ sys.B).reshape(-1, sys.input_dim)


def eval_volterra_kernel(sys, k, j, t):
    """Volterra kernel ``h_{k,j}(t_0, ..., t_{k+j}) = C e^{A t_0} N ... N e^{A t_{k+j}} B``.

    Rows are indexed by ``(out, n_1..n_k)`` and columns by
    ``(ch, n_{k+1}..n_{k+j})``, so the Hilbert-Schmidt norm is the
    Frobenius norm of the returned matrix.
    """
    check_system(sys)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if t.size != k + j + 1:
        raise ValueError(f'h_{k},{j} takes {k + j + 1} times, got {t.size}')
    n, m = sys.input_dim, sys.output_dim
    X = (sys.C @ expm(sys.A * t[0]))[:, None, :]
    for tl in t[1:]:
        X = np.einsum('ard,pde->arpe', X, np.array(sys.N) @ expm(sys.A * tl))
        X = X.reshape(m, -1, X.shape[-1])
    H = (X @ sys.B).reshape((m,) + (n,) * (k + j) + (n,))
    # move the last j tensor indices next to the channel index
    H = np.moveaxis(H, -1, k + 1)
    return H.reshape(m * n ** k, n ** (j + 1))


def kernel_mixed_norm(sys, k, j, l1_index, nodes=40):
    """``L^1`` in variable ``l1_index`` (1-based), ``L^2`` in the others, of ``h_{k,j}``.

    Tensor Gauss-Laguerre quadrature with weight ``exp(-x)`` undone, so the
    kernel must decay faster than ``exp(-t/2)``.
    """
    x, w = np.polynomial.laguerre.laggauss(nodes)
    w = w * np.exp(x)
    nvar = k + j + 1
    others = [v for v in range(nvar) if v != l1_index - 1]
    total = 0.0
    for xi, wi in zip(x, w):
        sq = 0.0
        for idx in np.ndindex(*(nodes,) * len(others)):
            t = np.empty(nvar)
            t[l1_index - 1] = xi
            t[others] = x[list(idx)]
            wt = np.prod(w[list(idx)])
            sq += wt * np.sum(eval_volterra_kernel(sys, k, j, t) ** 2)
        total += wi * math.sqrt(sq)
    return total


@dataclass(frozen=True)
class FrequencyGrid:
    """Sampling of the supremum variable and quadrature of the H2 variables.

    Attributes
    ----------
    Omega : float
        The supremum is sampled on ``linspace(-Omega, Omega, q)``.
    q : int
        Initial sample count (odd, at least 65, so 0 is included).
    nodes : int
        Gauss-Legendre nodes per H2 variable after the map
        ``omega = scale * tan(pi x / 2)``.
    refinements : int
        Maximum number of doublings of the sample count.
    scale : float
        Frequency scale of the tangent map.
    """

    Omega: float
    q: int = 129
    nodes: int = 64
    refinements: int = 4
    scale: float = 1.0

    def __post_init__(self):
        if self.q < 64 or self.q % 2 == 0:
            raise ValueError('q must be odd and at least 65')
        if not self.Omega > 0 or not self.scale > 0:
            raise ValueError('Omega and scale must be positive')

    @classmethod
    def for_system(cls, sys, **kw):
        """``Omega`` is ten times the spectral radius of ``A``; the map scale is that radius."""
        rho = max(float(np.abs(np.linalg.eigvals(sys.A)).max()), 1e-3)
        kw.setdefault('Omega', 10 * rho)
        kw.setdefault('scale', rho)
        return cls(**kw)

    def samples(self, level=0):
        return np.linspace(-self.Omega, self.Omega, (self.q - 1) * 2 ** level + 1)

    def quadrature(self):
        """Nodes and weights on the real line, including the ``1/(2 pi)`` factor."""
        x, w = np.polynomial.legendre.leggauss(self.nodes)
        ang = np.pi * x / 2
        omega = self.scale * np.tan(ang)
        weights = w * self.scale * (np.pi / 2) / np.cos(ang) ** 2 / (2 * np.pi)
        return omega, weights


@dataclass(frozen=True)
class MixedNormEstimate:
    """Sampled mixed norm ``sup_{omega_i} ||Delta G_k||_{H2 in the other variables}``.

    ``value`` is a lower bound of the true supremum up to quadrature error;
    ``converged`` means the last two refinements agreed within 1%.
    """

    k: int
    i: int
    value: float
    sup_location: float
    samples: int
    Omega: float
    converged: bool
    method: str
    lower_bound: bool = True
    history: tuple = ()


def _resolvents(A, omegas):
    d = A.shape[0]
    M = 1j * np.asarray(omegas)[:, None, None] * np.eye(d) - A
    return np.linalg.solve(M, np.broadcast_to(np.eye(d), M.shape))


def _h2_profile_quadrature(sys, k, i, omegas, grid):
    """Squared H2 norm over the non-sup variables, for each sup sample."""
    nodes, weights = grid.quadrature()
    Rq = _resolvents(sys.A, nodes)                       # (q, d, d)
    N = np.array(sys.N)
    out = np.empty(len(omegas))
    Rsup = _resolvents(sys.A, omegas)
    for a, Rs in enumerate(Rsup):
        # X has shape (grid..., rows, d) with rows = (out, n_1, ...)
        X = None
        wts = np.ones(())
        for v in range(1, k + 2):
            R = Rs[None] if v == i else Rq
            w = np.ones(1) if v == i else weights
            if X is None:
                X = np.einsum('od,qde->qoe', sys.C, R)
            else:
                NR = np.einsum('pde,qef->qpdf', N, R)       # (q, n, d, d)
                X = np.einsum('...rd,qpde->...qrpe', X, NR)
                X = X.reshape(X.shape[:-3] + (-1, X.shape[-1]))
            wts = np.multiply.outer(wts, w)
        G = X @ sys.B
        out[a] = float(np.sum(wts * np.sum(np.abs(G) ** 2, axis=(-2, -1))))
    return out


def _h2_profile_gramian(sys, k, i, omegas):
    """Same profile from the gramian series terms (exact in the H2 variables)."""
    series = gramian_series(sys, depth=max(k, 1))
    if i == 1:
        left = sys.C.T @ sys.C
    else:
        left = sum(Nj.T @ series.terms_O[i - 2] @ Nj for Nj in sys.N)
    if i == k + 1:
        right = sys.B @ sys.B.T
    else:
        right = sum(Nj @ series.terms_P[k - i] @ Nj.T for Nj in sys.N)
    Rs = _resolvents(sys.A, omegas)
    vals = np.einsum('qed,ef,qfg,gd->q', Rs.conj(), left, Rs, right)
    return np.clip(vals.real, 0, None)


def mixed_hardy_norm(full, red, k, i=1, grid=None, method='quadrature'):
    """Mixed norm of ``Delta G_k = G_k - G_k^r`` with the supremum in variable ``i``.

    Parameters
    ----------
    k : int
        Transfer function order, at most 2.
    i : int
        1-based index of the supremum variable.
    grid : FrequencyGrid, optional
        Built from the composite system when omitted.
    method : {'quadrature', 'gramian'}
        How the H2 part over the remaining variables is computed.

    Raises
    ------
    BudgetExceeded
        For ``k > 2``.
    """
    if k > MAX_ORDER:
        raise BudgetExceeded(f'mixed norms are computed for k <= {MAX_ORDER}, got {k}')
    if not 1 <= i <= k + 1:
        raise ValueError(f'sup variable must be in 1..{k + 1}')
    comp = composite_system(full, red)
    if grid is None:
        grid = FrequencyGrid.for_system(comp)
    history = []
    best, loc = 0.0, 0.0
    converged = False
    for level in range(grid.refinements + 1):
        om = grid.samples(level)
        if method == 'quadrature':
            prof = _h2_profile_quadrature(comp, k, i, om, grid)
        elif method == 'gramian':
            prof = _h2_profile_gramian(comp, k, i, om)
        else:
            raise ValueError(f'unknown method {method!r}')
        a = int(np.argmax(prof))
        val = math.sqrt(max(prof[a], 0.0))
        if val > best:
            best, loc = val, float(om[a])
        history.append(best)
        if level and abs(history[-1] - history[-2]) <= 0.01 * history[-1]:
            converged = True
            break
        if best == 0.0 and level:
            converged = True
            break
    return MixedNormEstimate(k=k, i=i, value=best, sup_location=loc, samples=len(om),
                             Omega=grid.Omega, converged=converged, method=method,
                             history=tuple(history))


@dataclass(frozen=True)
class TransferBoundResult:
    """Partial sum of mixed transfer-function norms against ``4 ||Delta H||_TC``."""

    partial_sum: float
    bound: float
    passed: bool
    terms: tuple = field(default_factory=tuple)


def transfer_bound_check(full, red, kmax=2, grid=None, method='quadrature', delta=None):
    """Check ``sum of computable mixed norms <= 4 ||Delta H||_TC``.

    The terms are ``Delta G_0`` and ``Delta G_1`` with the supremum in the
    first variable and ``Delta G_2`` with the supremum in the second,
    truncated at order ``kmax``.  All omitted terms are nonnegative, so a
    passing partial sum is consistent with the full inequality.
    """
    if kmax > MAX_ORDER:
        raise BudgetExceeded(f'kmax must be at most {MAX_ORDER}')
    if delta is None:
        delta = delta_hankel_trace_norm(full, red)
    bound = 4 * delta.deltaH_TC
    terms = tuple(mixed_hardy_norm(full, red, k, i, grid, method)
                  for k, i in TRANSFER_BOUND_TERMS if k <= kmax)
    total = float(sum(t.value for t in terms))
    return TransferBoundResult(partial_sum=total, bound=bound,
                           passed=bool(total <= bound * (1 + 1e-6)), terms=terms)

"""Laguerre-Galerkin discretization of the Fock-space Hankel operator.

The Hankel operator factors through the state space, ``H = W R``, with
the observability map ``W`` and the reachability map ``R``.  Its Fock
level ``k`` output block has ``k + 1`` time variables and ``k`` tensor
indices; expanding every time variable in the orthonormal Laguerre
functions ``l_j(t) = sqrt(2a) exp(-a t) L_j(2 a t)`` turns each kernel into
products of the semigroup moments

    E(j) = int_0^inf l_j(t) exp(A t) dt.

``HankelMatrix`` stores the discretized ``W`` and ``R`` level by level and
never forms their product unless asked, since the row count grows like
``m_t**(K) n**(K-1)``.  Singular values come from QR factorizations of the
two factors and a small core SVD.

Row multi-indices of level ``k`` are ordered lexicographically as
``(j_0, out, n_1, j_1, ..., n_k, j_k)`` and column multi-indices of level
``j`` as ``(i_0, ch, n_1, i_1, ..., n_j, i_j)``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from .errors import BadOrder, BudgetExceeded, NotInvariant, SolveFailed, NotStable
from .sysmodel import check_system, spectral_abscissa, stability_certificate

__all__ = ['FockGrid', 'HankelMatrix', 'laguerre_semigroup_moments', 'assemble_hankel',
           'hankel_svd', 'truncated_hankel', 'subspace_hankel', 'DENSE_BUDGET',
           'FACTOR_BUDGET']

# rows + cols allowed for an explicitly assembled dense matrix
DENSE_BUDGET = 20000
# floats allowed for the stored factors W and R
FACTOR_BUDGET = 20_000_000


def laguerre_semigroup_moments(A, a, m_t):
    """Moments ``E(j) = sqrt(2a) (-1)^j (A + aI)^j (aI - A)^{-(j+1)}``, ``j < m_t``.

    Returns
    -------
    E : (m_t, k, k) ndarray
    """
    A = np.asarray(A, dtype=float)
    if not a > 0:
        raise ValueError('Laguerre scale must be positive')
    k = A.shape[0]
    I = np.eye(k)
    try:
        X = sla.solve(a * I - A, I)
    except sla.LinAlgError as exc:
        raise SolveFailed(f'aI - A is singular for a={a}') from exc
    if not np.all(np.isfinite(X)):
        raise SolveFailed(f'aI - A is singular for a={a}')
    cayley = -(A + a * I) @ X
    E = np.empty((m_t, k, k))
    E[0] = np.sqrt(2 * a) * X
    for j in range(1, m_t):
        E[j] = E[j - 1] @ cayley
    return E


@dataclass(frozen=True)
class FockGrid:
    """Discretization parameters: Laguerre scale, modes per time variable, Fock depth.

    ``n`` and ``m`` are the input and output dimensions of the system the
    grid is used with; levels ``0..K-1`` are kept on both sides.
    """

    a: float
    m_t: int
    K: int
    n: int = 1
    m: int = 1

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError('Laguerre scale must be positive')
        if self.m_t < 1 or self.K < 1:
            raise BadOrder('m_t and K must be at least 1')

    @classmethod
    def for_system(cls, sys, m_t=20, K=3, a=None):
        """Grid with ``a`` defaulting to the certificate decay rate ``nu``."""
        if a is None:
            a = stability_certificate(sys).nu
        return cls(a=float(a), m_t=int(m_t), K=int(K), n=sys.input_dim, m=sys.output_dim)

    @property
    def row_dims(self):
        return [self.m_t ** (k + 1) * self.m * self.n ** k for k in range(self.K)]

    @property
    def col_dims(self):
        return [self.m_t ** (j + 1) * self.n ** (j + 1) for j in range(self.K)]

    @property
    def rows(self):
        return sum(self.row_dims)

    @property
    def cols(self):
        return sum(self.col_dims)

    def row_offsets(self):
        return np.concatenate(([0], np.cumsum(self.row_dims)))

    def col_offsets(self):
        return np.concatenate(([0], np.cumsum(self.col_dims)))

    def row_index(self, modes, out, taps=()):
        """Global row of ``(j_0..j_k; out; n_1..n_k)`` (zero-based indices)."""
        k = len(taps)
        if len(modes) != k + 1:
            raise ValueError('need one time mode more than tensor indices')
        idx = modes[0] * self.m + out
        for nk, jk in zip(taps, modes[1:]):
            idx = (idx * self.n + nk) * self.m_t + jk
        return int(self.row_offsets()[k] + idx)

    def col_index(self, modes, ch, taps=()):
        """Global column of ``(i_0..i_j; ch; n_1..n_j)`` (zero-based indices)."""
        j = len(taps)
        if len(modes) != j + 1:
            raise ValueError('need one time mode more than tensor indices')
        idx = modes[0] * self.n + ch
        for nj, ij in zip(taps, modes[1:]):
            idx = (idx * self.n + nj) * self.m_t + ij
        return int(self.col_offsets()[j] + idx)


@dataclass(eq=False)
class HankelMatrix:
    """Discretized Hankel operator in factored form ``H = W R``.

    ``W[k]`` has shape ``(row_dims[k], r)`` and ``R[j]`` has shape
    ``(r, col_dims[j])`` for a common inner dimension ``r``; block ``(k, j)``
    is ``W[k] @ R[j]``.  A ``None`` entry stands for a zero block row or
    column.  ``noise_scale`` is the norm of the operands a difference was
    formed from; singular values at rounding level relative to it are
    dropped, so the difference of identical operators is exactly zero.
    """

    W: list
    R: list
    grid: FockGrid
    noise_scale: float = 0.0
    _svd: tuple = field(default=None, repr=False)

    @property
    def inner_dim(self):
        for X in self.W:
            if X is not None:
                return X.shape[1]
        for X in self.R:
            if X is not None:
                return X.shape[0]
        return 0

    @property
    def shape(self):
        return self.grid.rows, self.grid.cols

    def _W(self, k):
        X = self.W[k]
        return np.zeros((self.grid.row_dims[k], self.inner_dim)) if X is None else X

    def _R(self, j):
        X = self.R[j]
        return np.zeros((self.inner_dim, self.grid.col_dims[j])) if X is None else X

    def W_stacked(self):
        return np.vstack([self._W(k) for k in range(self.grid.K)])

    def R_stacked(self):
        return np.hstack([self._R(j) for j in range(self.grid.K)])

    def block(self, k, j):
        """Dense block ``H_{k,j}``."""
        if self.grid.row_dims[k] + self.grid.col_dims[j] > DENSE_BUDGET:
            raise BudgetExceeded(f'block ({k}, {j}) exceeds {DENSE_BUDGET} rows+cols')
        return self._W(k) @ self._R(j)

    def dense(self):
        """Assembled dense matrix; only within the dense budget."""
        if self.grid.rows + self.grid.cols > DENSE_BUDGET:
            raise BudgetExceeded(f'{self.grid.rows} rows + {self.grid.cols} cols exceed '
                                 f'{DENSE_BUDGET}')
        return self.W_stacked() @ self.R_stacked()

    def _grams(self):
        GW = sum(X.T @ X for X in self.W if X is not None)
        GR = sum(X @ X.T for X in self.R if X is not None)
        r = self.inner_dim
        zero = np.zeros((r, r))
        return (zero if np.isscalar(GW) else GW), (zero if np.isscalar(GR) else GR)

    def hs_norm(self):
        """Hilbert-Schmidt (Frobenius) norm, ``sqrt(tr(W^T W R R^T))``."""
        GW, GR = self._grams()
        return float(np.sqrt(max(np.sum(GW * GR), 0.0)))

    def trace_norm(self):
        return float(np.sum(self.svd()[0]))

    def block_norms(self):
        """``(K, K)`` array of Frobenius norms of the blocks ``H_{k,j}``."""
        K = self.grid.K
        out = np.zeros((K, K))
        for k in range(K):
            if self.W[k] is None:
                continue
            GW = self.W[k].T @ self.W[k]
            for j in range(K):
                if self.R[j] is not None:
                    out[k, j] = np.sqrt(max(np.sum(GW * (self.R[j] @ self.R[j].T)), 0.0))
        return out

    def svd(self):
        """``(sigma, U, V)`` with ``H = U diag(sigma) V^T``; cached."""
        if self._svd is None:
            QW, TW = np.linalg.qr(self.W_stacked())
            QR, TR = np.linalg.qr(self.R_stacked().T)
            Uc, s, Vct = np.linalg.svd(TW @ TR.T)
            # a difference carries rounding from both operands, hence the wider margin
            scale = max(s[0] if s.size else 0.0, 64 * self.noise_scale)
            keep = s > max(s.size, 1) * np.finfo(float).eps * scale if scale > 0 \
                else np.zeros(s.size, dtype=bool)
            self._svd = (s[keep], QW @ Uc[:, keep], QR @ Vct[keep].T)
        return self._svd

    def truncated(self, k):
        """Copy keeping the blocks with both Fock levels below ``k``."""
        if not 1 <= k <= self.grid.K:
            raise BadOrder(f'truncation order {k} outside 1..{self.grid.K}')
        W = [X if i < k else None for i, X in enumerate(self.W)]
        R = [X if i < k else None for i, X in enumerate(self.R)]
        return HankelMatrix(W, R, self.grid, self.noise_scale)

    def __sub__(self, other):
        if self.grid != other.grid:
            raise ValueError('Hankel matrices live on different grids')
        W = [np.hstack([self._W(k), -other._W(k)]) for k in range(self.grid.K)]
        R = [np.vstack([self._R(j), other._R(j)]) for j in range(self.grid.K)]
        scale = max(self.hs_norm(), other.hs_norm())
        return HankelMatrix(W, R, self.grid, noise_scale=scale)


def assemble_hankel(sys, grid):
    """Discretize ``H = W R`` of ``sys`` on ``grid`` using semigroup moments only.

    Raises
    ------
    BudgetExceeded
        If the stored factors would exceed ``FACTOR_BUDGET`` floats.
    """
    check_system(sys)
    if spectral_abscissa(sys.A) >= 0:
        raise NotStable('Hankel operator needs a stable drift matrix')
    if (grid.n, grid.m) != (sys.input_dim, sys.output_dim):
        raise ValueError(f'grid built for (n, m)=({grid.n}, {grid.m}), system has '
                         f'({sys.input_dim}, {sys.output_dim})')
    k = sys.state_dim
    need = (grid.rows + grid.cols) * k
    if need > FACTOR_BUDGET:
        raise BudgetExceeded(f'factors need {need} floats, budget is {FACTOR_BUDGET}')
    E = laguerre_semigroup_moments(sys.A, grid.a, grid.m_t)
    N = np.array(sys.N)
    NE = np.einsum('pab,jbc->pjac', N, E)   # N_p E(j)
    EN = np.einsum('jab,pbc->jpac', E, N)   # E(i) N_p

    W = [np.einsum('ob,jbc->joc', sys.C, E).reshape(-1, k)]
    R = [np.einsum('jab,bc->ajc', E, sys.B).reshape(k, -1)]
    for _ in range(1, grid.K):
        W.append(np.einsum('rb,pjbc->rpjc', W[-1], NE).reshape(-1, k))
        R.append(np.einsum('ipab,bc->acpi', EN, R[-1]).reshape(k, -1))
    return HankelMatrix(W, R, grid)


def hankel_svd(Hm):
    """Singular values and vectors of a discretized Hankel matrix."""
    return Hm.svd()


def truncated_hankel(sys, grid, k):
    """Discretized ``k``-th order truncated Hankel operator."""
    if not 1 <= k <= grid.K:
        raise BadOrder(f'truncation order {k} outside 1..{grid.K}')
    return assemble_hankel(sys, grid).truncated(k)


def check_invariant(sys, V, tol=1e-10):
    """Raise :class:`NotInvariant` unless ``span(V)`` is invariant under ``A`` and every ``N_i``."""
    V = np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    if not np.allclose(V.T @ V, np.eye(V.shape[1]), atol=1e-10):
        raise ValueError('V must have orthonormal columns')
    proj = np.eye(V.shape[0]) - V @ V.T
    for name, M in [('A', sys.A)] + [(f'N[{i}]', Ni) for i, Ni in enumerate(sys.N)]:
        leak = np.linalg.norm(proj @ M @ V, 2)
        if leak > tol * max(np.linalg.norm(M, 2), 1.0):
            raise NotInvariant(f'span(V) is not invariant under {name} (leak {leak:.2e})')
    return V


def subspace_hankel(sys, grid, V, tol=1e-10):
    """Hankel of the system restricted to an invariant subspace ``span(V)``.

    The control operator is replaced by its projection ``V V^T B``.
    """
    V = check_invariant(sys, V, tol)
    return assemble_hankel(sys.with_B(V @ (V.T @ sys.B)), grid)

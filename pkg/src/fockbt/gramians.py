"""Observability and reachability gramians of bilinear systems.

The gramians solve the generalized Lyapunov equations

    A^T O + O A + sum_j w_j N_j^T O N_j + C^T C = 0,
    A P + P A^T + sum_j w_j N_j P N_j^T + B B^T = 0,

with unit weights ``w_j`` in the deterministic bilinear case.  Three
routes are provided: the truncated series built from standard Lyapunov
solves, a fixed-point iteration on the same splitting, and a direct
solve of the vectorized (Kronecker) system.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy import linalg as sla

from .errors import BadOrder, CertificateInvalid, NotMSStable, NotStable, SolveFailed
from .sysmodel import check_system, spectral_abscissa, stability_certificate

__all__ = [
    'GramianPair', 'TruncatedGramianSeries', 'solve_lyapunov', 'gramian_series',
    'gramian_direct', 'gramian_fixed_point', 'generalized_residual', 'kronecker_generator',
    'h2_norm',
]

LYAP_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class GramianPair:
    """Reachability gramian ``P`` and observability gramian ``O``.

    ``residual_P`` and ``residual_O`` are relative Frobenius residuals of the
    generalized Lyapunov equations; ``method`` records how they were computed.
    """

    P: np.ndarray
    O: np.ndarray
    residual_P: float
    residual_O: float
    method: str


def _sym(X):
    return (X + X.T) / 2


def _rel(R, Q, scale=0.0):
    den = max(np.linalg.norm(Q), scale)
    if den == 0:
        return 0.0 if not np.any(R) else math.inf
    return float(np.linalg.norm(R) / den)


def solve_lyapunov(A, Q, tol=LYAP_TOL):
    """Solve ``A^T X + X A + Q = 0`` for symmetric ``X``.

    Uses the Bartels-Stewart solver from SciPy, with one step of iterative
    refinement and a Kronecker fallback when the residual target is missed.

    Raises
    ------
    NotStable
        If ``A`` has spectral abscissa >= 0.
    SolveFailed
        If no route meets ``tol``.
    """
    A = np.asarray(A, dtype=float)
    Q = _sym(np.asarray(Q, dtype=float))
    alpha = spectral_abscissa(A)
    if alpha >= 0:
        raise NotStable(f'spectral abscissa {alpha:.3g} >= 0')
    if not np.any(Q):
        return np.zeros_like(Q)

    def residual(X):
        return A.T @ X + X @ A + Q

    X = _sym(sla.solve_continuous_lyapunov(A.T, -Q))
    R = residual(X)
    if _rel(R, Q) > tol:
        X = _sym(X + sla.solve_continuous_lyapunov(A.T, -R))
        R = residual(X)
    if _rel(R, Q) > tol:
        k = A.shape[0]
        I = np.eye(k)
        L = np.kron(I, A.T) + np.kron(A.T, I)
        X = _sym(_refined_solve(L, -Q.reshape(-1, order='F')).reshape(k, k, order='F'))
        R = residual(X)
    res = _rel(R, Q)
    if not res <= tol:
        raise SolveFailed(f'Lyapunov residual {res:.2e} above {tol:.0e}')
    return X


def _refined_solve(L, rhs, steps=3):
    try:
        lu = sla.lu_factor(L)
    except (ValueError, sla.LinAlgError) as exc:
        raise SolveFailed(str(exc)) from exc
    x = sla.lu_solve(lu, rhs)
    for _ in range(steps):
        r = rhs - L @ x
        if not np.any(r):
            break
        x = x + sla.lu_solve(lu, r)
    if not np.all(np.isfinite(x)):
        raise SolveFailed('singular generalized Lyapunov operator')
    return x


def _weights(sys, weights):
    if weights is None:
        return np.ones(len(sys.N))
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.size != len(sys.N):
        raise ValueError(f'need {len(sys.N)} weights, got {w.size}')
    return w


def kronecker_generator(sys, weights=None, transpose=False):
    """Vectorized operator ``I (x) A + A (x) I + sum w_j N_j (x) N_j``.

    This is the reachability operator acting on column-major ``vec(P)``;
    ``transpose=True`` gives the observability operator.
    """
    A = sys.A.T if transpose else sys.A
    I = np.eye(A.shape[0])
    L = np.kron(I, A) + np.kron(A, I)
    for wj, Nj in zip(_weights(sys, weights), sys.N):
        Nt = Nj.T if transpose else Nj
        L += wj * np.kron(Nt, Nt)
    return L


def generalized_residual(sys, X, kind, weights=None):
    """Relative Frobenius residual of the generalized Lyapunov equation for ``X``.

    ``kind`` is ``'O'`` (observability) or ``'P'`` (reachability).
    """
    A = sys.A
    w = _weights(sys, weights)
    if kind == 'O':
        Q = sys.C.T @ sys.C
        R = A.T @ X + X @ A + Q + sum(wj * Nj.T @ X @ Nj for wj, Nj in zip(w, sys.N))
    elif kind == 'P':
        Q = sys.B @ sys.B.T
        R = A @ X + X @ A.T + Q + sum(wj * Nj @ X @ Nj.T for wj, Nj in zip(w, sys.N))
    else:
        raise ValueError("kind must be 'O' or 'P'")
    return _rel(R, Q)


def gramian_direct(sys, weights=None, tol=LYAP_TOL):
    """Gramians by direct solve of the vectorized generalized Lyapunov equations.

    Parameters
    ----------
    sys : BilinearSystem
    weights : sequence of float, optional
        Noise weights ``w_j``; unit weights give the bilinear gramians.
    tol : float
        Relative residual that both solutions must meet.

    Raises
    ------
    NotMSStable
        If the Kronecker operator has spectral abscissa >= 0.
    """
    check_system(sys)
    k = sys.state_dim
    LP = kronecker_generator(sys, weights)
    alpha = spectral_abscissa(LP)
    if alpha >= 0:
        raise NotMSStable(f'generalized Lyapunov operator has abscissa {alpha:.3g} >= 0')
    sols = {}
    for kind, L, Q in (('P', LP, sys.B @ sys.B.T), ('O', LP.T, sys.C.T @ sys.C)):
        X = _refined_solve(L, -Q.reshape(-1, order='F')).reshape(k, k, order='F')
        sols[kind] = _sym(X)
    P, O = sols['P'], sols['O']
    rP = generalized_residual(sys, P, 'P', weights)
    rO = generalized_residual(sys, O, 'O', weights)
    if not (rP <= tol and rO <= tol):
        raise SolveFailed(f'generalized Lyapunov residuals {rP:.2e}, {rO:.2e} above {tol:.0e}')
    return GramianPair(P=P, O=O, residual_P=rP, residual_O=rO, method='direct')


def gramian_fixed_point(sys, weights=None, tol=LYAP_TOL, maxiter=500):
    """Gramians by the iteration ``A^T X_{i+1} + X_{i+1} A = -(Q + sum N^T X_i N)``.

    Each step is one Bartels-Stewart solve, so this scales to larger state
    dimensions than :func:`gramian_direct`.  It converges exactly when the
    system is mean-square stable.
    """
    check_system(sys)
    w = _weights(sys, weights)
    A = sys.A
    out = {}
    for kind in ('P', 'O'):
        if kind == 'O':
            At, Q, Ns = A, sys.C.T @ sys.C, [Nj for Nj in sys.N]
        else:
            At, Q, Ns = A.T, sys.B @ sys.B.T, [Nj.T for Nj in sys.N]
        X = solve_lyapunov(At, Q)
        for _ in range(maxiter):
            X_new = solve_lyapunov(At, Q + sum(wj * Nj.T @ X @ Nj for wj, Nj in zip(w, Ns)))
            step = np.linalg.norm(X_new - X)
            X = X_new
            if not np.isfinite(step):
                raise NotMSStable('fixed-point iteration diverged')
            if step <= 0.1 * tol * max(np.linalg.norm(X), 1e-300):
                break
        else:
            raise SolveFailed(f'fixed-point iteration did not converge in {maxiter} steps')
        out[kind] = X
    rP = generalized_residual(sys, out['P'], 'P', weights)
    rO = generalized_residual(sys, out['O'], 'O', weights)
    if not (rP <= tol and rO <= tol):
        raise SolveFailed(f'fixed-point residuals {rP:.2e}, {rO:.2e} above {tol:.0e}')
    return GramianPair(P=out['P'], O=out['O'], residual_P=rP, residual_O=rO,
                       method='fixed-point')


@dataclass(frozen=True, eq=False)
class TruncatedGramianSeries:
    """First ``depth`` terms of the gramian series and their partial sums.

    ``terms_O[i]`` is the contribution of the ``i``-fold bilinear coupling;
    ``partial_O[i]`` is the sum of terms ``0..i``.
    """

    terms_P: tuple
    terms_O: tuple
    partial_P: tuple
    partial_O: tuple
    depth: int

    @property
    def P(self):
        return self.partial_P[-1]

    @property
    def O(self):
        return self.partial_O[-1]

    def truncated(self, k):
        """Pair of ``k``-th order truncated gramians (first ``k`` terms)."""
        if not 1 <= k <= self.depth:
            raise BadOrder(f'order {k} outside 1..{self.depth}')
        return self.partial_P[k - 1], self.partial_O[k - 1]

    def to_pair(self, sys):
        P, O = self.P, self.O
        return GramianPair(P=P, O=O, residual_P=generalized_residual(sys, P, 'P'),
                           residual_O=generalized_residual(sys, O, 'O'), method='series')


def default_depth(theta, term0_norm, tol=1e-12, cap=60):
    """Smallest ``k`` with ``theta**k * term0_norm < tol``, capped."""
    if term0_norm < tol or theta == 0:
        return 1
    if theta >= 1:
        return cap
    k = math.ceil(math.log(tol / term0_norm) / math.log(theta))
    while theta ** k * term0_norm >= tol:
        k += 1
    while k > 1 and theta ** (k - 1) * term0_norm < tol:
        k -= 1
    return int(min(max(k, 1), cap))


def gramian_series(sys, certificate=None, depth=None):
    """Truncated gramian series.

    ``O_0`` solves ``A^T X + X A + C^T C = 0`` and ``O_i`` solves
    ``A^T X + X A + sum_j N_j^T O_{i-1} N_j = 0``; dually for ``P``.

    Parameters
    ----------
    sys : BilinearSystem
    certificate : StabilityCertificate, optional
        Computed when omitted.  Needed to pick a default depth.
    depth : int, optional
        Number of terms.  Defaults to the smallest ``k`` with
        ``theta**k * ||term_0|| < 1e-12`` (at most 60).

    Raises
    ------
    CertificateInvalid
        If no depth is given and ``theta >= 1``.
    """
    check_system(sys)
    A = sys.A
    P0 = solve_lyapunov(A.T, sys.B @ sys.B.T)
    O0 = solve_lyapunov(A, sys.C.T @ sys.C)
    if depth is None:
        if certificate is None:
            certificate = stability_certificate(sys)
        if not certificate.valid:
            raise CertificateInvalid(f'theta={certificate.theta:.3g} >= 1; pass an explicit depth')
        norm0 = max(np.linalg.norm(P0, 2), np.linalg.norm(O0, 2))
        depth = default_depth(certificate.theta, norm0)
    depth = int(depth)
    if depth < 1:
        raise BadOrder('series depth must be at least 1')
    tP, tO = [P0], [O0]
    for _ in range(1, depth):
        QP = sum(Nj @ tP[-1] @ Nj.T for Nj in sys.N)
        QO = sum(Nj.T @ tO[-1] @ Nj for Nj in sys.N)
        tP.append(solve_lyapunov(A.T, QP))
        tO.append(solve_lyapunov(A, QO))
    sP, sO = np.cumsum(tP, axis=0), np.cumsum(tO, axis=0)
    return TruncatedGramianSeries(terms_P=tuple(tP), terms_O=tuple(tO),
                                  partial_P=tuple(sP), partial_O=tuple(sO), depth=depth)


def h2_norm(sys, g):
    """Squared H2 norm computed two ways: ``(tr(B^T O B), tr(C P C^T))``."""
    via_O = float(np.trace(sys.B.T @ g.O @ sys.B))
    via_P = float(np.trace(sys.C @ g.P @ sys.C.T))
    return via_O, via_P

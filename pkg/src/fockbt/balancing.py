"""Square-root balancing and balanced truncation of bilinear systems."""

from dataclasses import dataclass
import warnings

import numpy as np
from scipy import linalg as sla

from .errors import BadOrder, DegenerateCut, NotMinimal, NotPSD, NotStable
from .gramians import gramian_direct
from .sysmodel import BilinearSystem, spectral_abscissa, stability_certificate

__all__ = ['BalancedRealization', 'ReducedModel', 'factor_psd', 'hankel_singular_values',
           'balance', 'truncate', 'GRAMIAN_PSD_RTOL']

# Gramians come out of a linear solve, so their smallest eigenvalues carry
# noise of order (residual * condition) rather than k * eps.
GRAMIAN_PSD_RTOL = 1e-9
COND_MAX = 1e12
CUT_RTOL = 1e-10


def factor_psd(S, rtol=None):
    """Factor a symmetric positive semidefinite matrix as ``S = L L^T``.

    Parameters
    ----------
    S : (k, k) array_like
    rtol : float, optional
        Negative eigenvalues down to ``-rtol * lambda_max`` are clipped to
        zero.  Defaults to ``k * eps``.

    Returns
    -------
    L : (k, k) ndarray
        ``V sqrt(Lambda)`` from the symmetric eigendecomposition, columns
        ordered by decreasing eigenvalue.

    Raises
    ------
    NotPSD
        If an eigenvalue is below ``-rtol * lambda_max``.
    """
    S = np.asarray(S, dtype=float)
    k = S.shape[0]
    if rtol is None:
        rtol = k * np.finfo(float).eps
    lam, V = np.linalg.eigh((S + S.T) / 2)
    lam, V = lam[::-1], V[:, ::-1]
    top = max(lam[0], 0.0) if k else 0.0
    if k and lam[-1] < -rtol * top:
        raise NotPSD(f'eigenvalue {lam[-1]:.3e} below -{rtol:.1e} * {top:.3e}')
    return V * np.sqrt(np.clip(lam, 0, None))


def _core_svd(g):
    LP = factor_psd(g.P, GRAMIAN_PSD_RTOL)
    LO = factor_psd(g.O, GRAMIAN_PSD_RTOL)
    U, s, Vt = sla.svd(LO.T @ LP)
    return LP, LO, U, s, Vt


def hankel_singular_values(g):
    """Balanced singular values ``sqrt(lambda_i(O P))``, nonincreasing.

    Computed as singular values of ``L_O^T L_P``; values below
    ``k * eps * sigma_1`` are dropped.
    """
    s = sla.svdvals(factor_psd(g.O, GRAMIAN_PSD_RTOL).T @ factor_psd(g.P, GRAMIAN_PSD_RTOL))
    if s.size == 0 or s[0] == 0:
        return np.zeros(0)
    return s[s > s.size * np.finfo(float).eps * s[0]]


@dataclass(frozen=True, eq=False)
class BalancedRealization:
    """Balanced coordinates ``z = T x`` in which both gramians equal ``diag(sigma)``."""

    sigma: np.ndarray
    T: np.ndarray
    Tinv: np.ndarray
    balanced_system: BilinearSystem
    parent_label: str = ''


@dataclass(frozen=True, eq=False)
class ReducedModel:
    """Order-``r`` truncation of a balanced realization.

    ``certificate`` is recomputed for the reduced system and is ``None``
    when its drift matrix is no longer stable.
    """

    reduced: BilinearSystem
    kept_sigma: np.ndarray
    discarded_sigma: np.ndarray
    parent_label: str = ''
    certificate: object = None

    @property
    def order(self):
        return self.reduced.state_dim


def balance(sys, g=None):
    """Square-root balancing transformation.

    With ``L_O^T L_P = U S V^T`` the transformation is
    ``T = S^{-1/2} U^T L_O^T`` and ``T^{-1} = L_P V S^{-1/2}``.

    Raises
    ------
    NotMinimal
        If either gramian has condition number above 1e12.
    """
    if g is None:
        g = gramian_direct(sys)
    for name, X in (('P', g.P), ('O', g.O)):
        lam = np.linalg.eigvalsh((X + X.T) / 2)
        if lam[-1] <= 0 or lam[0] <= lam[-1] / COND_MAX:
            raise NotMinimal(f'gramian {name} is numerically singular '
                             f'(eigenvalues {lam[0]:.2e} .. {lam[-1]:.2e})')
    LP, LO, U, s, Vt = _core_svd(g)
    d = 1 / np.sqrt(s)
    T = d[:, None] * (U.T @ LO.T)
    Tinv = (LP @ Vt.T) * d[None, :]
    bal = sys.transformed(T, Tinv)
    return BalancedRealization(sigma=s, T=T, Tinv=Tinv, balanced_system=bal,
                               parent_label=sys.label)


def truncate(bal, r, force=False):
    """Keep the ``r`` leading balanced states.

    Raises
    ------
    BadOrder
        If ``r`` is outside ``1..k``.
    DegenerateCut
        If ``sigma_r - sigma_{r+1} <= 1e-10 sigma_1`` and ``force`` is false.
    """
    sigma = bal.sigma
    k = sigma.size
    if int(r) != r or not 1 <= r <= k:
        raise BadOrder(f'order {r} outside 1..{k}')
    r = int(r)
    if r < k and not force and sigma[r - 1] - sigma[r] <= CUT_RTOL * sigma[0]:
        raise DegenerateCut(f'sigma_{r}={sigma[r - 1]:.6g} and sigma_{r + 1}={sigma[r]:.6g} '
                            'are numerically equal')
    b = bal.balanced_system
    red = BilinearSystem(b.A[:r, :r], [Ni[:r, :r] for Ni in b.N], b.B[:r], b.C[:, :r],
                         label=f'{bal.parent_label}_r{r}' if bal.parent_label else f'r{r}')
    cert = None
    if spectral_abscissa(red.A) >= 0:
        warnings.warn(f'reduced system of order {r} has an unstable drift matrix', stacklevel=2)
    else:
        try:
            cert = stability_certificate(red)
        except NotStable:
            cert = None
        if cert is not None and not cert.valid:
            warnings.warn(f'reduced system has theta={cert.theta:.3g} >= 1', stacklevel=2)
    return ReducedModel(reduced=red, kept_sigma=sigma[:r].copy(), discarded_sigma=sigma[r:].copy(),
                        parent_label=bal.parent_label, certificate=cert)

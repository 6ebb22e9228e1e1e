"""Composite error system and a-posteriori error bounds for reduced models.

For a full system and a reduced one with the same input and output
dimensions, the composite system stacks both states and subtracts the
outputs.  Its Hankel singular values sum to the trace norm of the
difference of the two Hankel operators, which drives every bound below.
"""

from dataclasses import dataclass
import math
import warnings

import numpy as np
from scipy import linalg as sla

from .balancing import hankel_singular_values
from .errors import DimMismatch, NotStable
from .gramians import GramianPair, _rel, _sym, _weights, gramian_direct
from .sysmodel import (BilinearSystem, ControlNorms, ControlSignal, admissibility_threshold,
                       check_system, control_norms, stability_certificate)

__all__ = ['composite_system', 'composite_gramians', 'delta_hankel_trace_norm',
           'DeltaHankel', 'ErrorBoundReport', 'bound_report', 'bounds_from_delta']


def composite_system(full, red):
    """Error system ``(blockdiag(A, A_r), blockdiag(N_i, N_ri), [B; B_r], [C, -C_r])``.

    Raises
    ------
    DimMismatch
        If input or output dimensions differ.
    """
    check_system(full)
    check_system(red)
    if full.input_dim != red.input_dim or full.output_dim != red.output_dim:
        raise DimMismatch(f'full system has (n, m)=({full.input_dim}, {full.output_dim}), '
                          f'reduced has ({red.input_dim}, {red.output_dim})')
    A = sla.block_diag(full.A, red.A)
    N = [sla.block_diag(Nf, Nr) for Nf, Nr in zip(full.N, red.N)]
    B = np.vstack([full.B, red.B])
    C = np.hstack([full.C, -red.C])
    label = f'{full.label}-{red.label}' if full.label or red.label else 'composite'
    return BilinearSystem(A, N, B, C, label)


def composite_gramians(full, red, coupling='shared', weights=None):
    """Gramians of the composite error system.

    ``coupling='shared'`` drives both parts by the same bilinear (or noise)
    terms, which is the plain generalized Lyapunov solve on the composite.
    ``coupling='independent'`` models independent noise in the two systems:
    the diagonal blocks are the individual weighted gramians and the
    off-diagonal blocks solve Sylvester equations without coupling terms.
    """
    comp = composite_system(full, red)
    if coupling == 'shared':
        return comp, gramian_direct(comp, weights)
    if coupling != 'independent':
        raise ValueError(f"coupling must be 'shared' or 'independent', got {coupling!r}")
    gf = gramian_direct(full, weights)
    gr = gramian_direct(red, weights)
    P12 = sla.solve_sylvester(full.A, red.A.T, -full.B @ red.B.T)
    O12 = sla.solve_sylvester(full.A.T, red.A, full.C.T @ red.C)
    P = _sym(np.block([[gf.P, P12], [P12.T, gr.P]]))
    O = _sym(np.block([[gf.O, O12], [O12.T, gr.O]]))
    k = full.state_dim
    w = _weights(comp, weights)

    def split_noise(X, transpose):
        out = np.zeros_like(X)
        for wj, Nj in zip(w, comp.N):
            M = Nj.T if transpose else Nj
            out[:k, :k] += wj * M[:k, :k] @ X[:k, :k] @ M[:k, :k].T
            out[k:, k:] += wj * M[k:, k:] @ X[k:, k:] @ M[k:, k:].T
        return out

    QP, QO = comp.B @ comp.B.T, comp.C.T @ comp.C
    rP = _rel(comp.A @ P + P @ comp.A.T + split_noise(P, False) + QP, QP)
    rO = _rel(comp.A.T @ O + O @ comp.A + split_noise(O, True) + QO, QO)
    return comp, GramianPair(P=P, O=O, residual_P=rP, residual_O=rO, method='direct')


@dataclass(frozen=True, eq=False)
class DeltaHankel:
    """Trace norm of the Hankel difference with the composite data behind it."""

    deltaH_TC: float
    gramians: GramianPair
    sigma: np.ndarray
    composite: BilinearSystem
    coupling: str = 'shared'


def delta_hankel_trace_norm(full, red, coupling='shared', weights=None):
    """``||H - H_r||_TC`` as the sum of the composite Hankel singular values.

    ``sigma_i^2`` are eigenvalues of ``O P`` and carry absolute rounding
    error of order ``dim * eps * ||O|| ||P||``; singular values below the
    square root of that level are indistinguishable from zero and dropped.
    """
    comp, g = composite_gramians(full, red, coupling, weights)
    sigma = hankel_singular_values(g)
    floor = math.sqrt(comp.state_dim * np.finfo(float).eps
                      * np.linalg.norm(g.O, 2) * np.linalg.norm(g.P, 2))
    sigma = sigma[sigma > floor]
    return DeltaHankel(deltaH_TC=float(np.sum(sigma)), gramians=g, sigma=sigma,
                       composite=comp, coupling=coupling)


@dataclass(frozen=True)
class ErrorBoundReport:
    """Bound values derived from ``deltaH_TC``.

    Attributes
    ----------
    deltaH_TC : float
        Trace norm of the Hankel difference.
    bound_transfer : float
        ``4 deltaH_TC``, bounding the summed mixed norms of the transfer
        function differences.
    bound_output : float or None
        ``4 sqrt(n) deltaH_TC ||u||_inf`` for the output difference.
    bound_stoch_mean : dict or None
        ``{p: 2 deltaH_TC ||u||_Lp}`` for deterministic controls in
        stochastic systems.
    bound_stoch_sup : float or None
        ``2 deltaH_TC sup_t ||u(t)||_2`` for the mean output error.
    certified : bool
        False when the composite system has no certificate with
        ``theta < 1`` (the bounds are then reported without guarantee).
    admissible : bool or None
        Whether ``u`` satisfies the smallness condition of the output bound
        for both systems' certificates.
    """

    deltaH_TC: float
    bound_transfer: float
    n: int
    bound_output: float = None
    bound_stoch_mean: dict = None
    bound_stoch_sup: float = None
    certified: bool = True
    composite_theta: float = None
    admissible: bool = None
    sigma: tuple = ()
    coupling: str = 'shared'


def bounds_from_delta(deltaH_TC, n, norms=None, **extra):
    """Fill an :class:`ErrorBoundReport` from a trace norm and control norms."""
    d = float(deltaH_TC)
    fields = dict(deltaH_TC=d, bound_transfer=4 * d, n=int(n))
    if norms is not None:
        fields['bound_output'] = 4 * math.sqrt(n) * d * norms.linf
        fields['bound_stoch_mean'] = {p: 2 * d * v for p, v in norms.lp.items()}
        fields['bound_stoch_sup'] = 2 * d * norms.h2
    fields.update(extra)
    return ErrorBoundReport(**fields)


def _certificate(sys):
    try:
        return stability_certificate(sys)
    except NotStable:
        return None


def bound_report(full, red, u=None, coupling='shared', weights=None, delta=None):
    """Error bound report for the pair ``(full, red)``.

    Parameters
    ----------
    u : ControlSignal or ControlNorms, optional
        Control for the input-dependent bounds; they are ``None`` otherwise.
    delta : DeltaHankel, optional
        Reuse a previously computed trace norm.
    """
    if delta is None:
        delta = delta_hankel_trace_norm(full, red, coupling, weights)
    cert = _certificate(delta.composite)
    certified = cert is not None and cert.valid
    if not certified:
        warnings.warn('composite system has no certificate with theta < 1; '
                      'bounds are reported without guarantee', stacklevel=2)
    norms = None
    admissible = None
    if u is not None:
        norms = control_norms(u) if isinstance(u, ControlSignal) else u
        if not isinstance(norms, ControlNorms):
            raise TypeError('u must be a ControlSignal or ControlNorms')
        certs = [_certificate(full), _certificate(red)]
        if all(c is not None for c in certs):
            thr = min(admissibility_threshold(c, full.input_dim) for c in certs)
            admissible = bool(norms.l2 < thr)
    return bounds_from_delta(delta.deltaH_TC, full.input_dim, norms, certified=certified,
                             composite_theta=None if cert is None else cert.theta,
                             admissible=admissible, sigma=tuple(delta.sigma),
                             coupling=delta.coupling)

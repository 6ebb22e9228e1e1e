"""Stochastic bilinear systems driven by Wiener or compensated Poisson noise.

The state equation is

    dZ = (A Z + B u) dt + sum_j N_j Z dM_j,

with independent scalar square-integrable martingales ``M_j``.  Only the
weights ``w_j = E(M_j(1)^2)`` enter the gramians: 1 for a Wiener process,
``lambda`` for a compensated Poisson process of rate ``lambda``.

Monte Carlo runs give every path its own random stream derived from
``(seed, stream, path index)`` and combine per-chunk statistics in chunk
order, so results are bit-identical for any number of worker threads.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import math

import numpy as np
from scipy import linalg as sla

from .errorbound import delta_hankel_trace_norm
from .errors import DimMismatch, NotMSStable, NotReachable
from .gramians import gramian_direct, kronecker_generator
from .sysmodel import BilinearSystem, ControlSignal, check_system, spectral_abscissa

__all__ = ['NoiseSpec', 'StochasticModel', 'MonteCarloEstimate', 'EnsembleResult',
           'EnergyReport', 'BoundCheck', 'stochastic_gramians', 'ms_stability',
           'simulate_sde', 'mc_gramian_quadratic', 'stochastic_bound_check', 'energies',
           'finite_horizon_gramians', 'deterministic_reachability_gramian']

BLOWUP = 1e150


@dataclass(frozen=True)
class NoiseSpec:
    """Noise of one channel: ``kind`` is ``'wiener'`` or ``'cpoisson'`` (with ``rate``)."""

    kind: str = 'wiener'
    rate: float = 1.0

    def __post_init__(self):
        if self.kind not in ('wiener', 'cpoisson'):
            raise ValueError(f'unknown noise kind {self.kind!r}')
        if self.kind == 'cpoisson' and not self.rate > 0:
            raise ValueError('Poisson rate must be positive')

    @property
    def weight(self):
        return 1.0 if self.kind == 'wiener' else float(self.rate)

    def increments(self, rng, h, size):
        if self.kind == 'wiener':
            return rng.normal(0.0, math.sqrt(h), size)
        return rng.poisson(self.rate * h, size) - self.rate * h


@dataclass(frozen=True, eq=False)
class StochasticModel:
    """Bilinear system whose ``N_j`` multiply noise increments instead of controls."""

    base: BilinearSystem
    noise: tuple

    def __post_init__(self):
        noise = tuple(nz if isinstance(nz, NoiseSpec) else NoiseSpec(*nz) for nz in self.noise)
        object.__setattr__(self, 'noise', noise)
        check_system(self.base)
        if len(noise) != len(self.base.N):
            raise ValueError(f'{len(noise)} noise channels for {len(self.base.N)} N matrices')

    @classmethod
    def wiener(cls, base):
        return cls(base, tuple(NoiseSpec() for _ in base.N))

    @property
    def weights(self):
        return np.array([nz.weight for nz in self.noise])

    def with_base(self, base):
        return StochasticModel(base, self.noise)


@dataclass(frozen=True, eq=False)
class MonteCarloEstimate:
    """Sample mean and standard error (sample std over ``sqrt(paths)``)."""

    mean: np.ndarray
    stderr: np.ndarray
    paths: int
    seed: int
    h: float


@dataclass(frozen=True, eq=False)
class EnsembleResult:
    """Output of :func:`simulate_sde`."""

    times: np.ndarray
    estimate: MonteCarloEstimate
    sample_paths: np.ndarray
    diverged: int


def stochastic_gramians(model):
    """Weighted gramians ``A P + P A^T + sum w_j N_j P N_j^T + B B^T = 0`` and dual."""
    stable, alpha = ms_stability(model)
    if not stable:
        raise NotMSStable(f'mean-square generator has abscissa {alpha:.3g} >= 0')
    return gramian_direct(model.base, model.weights)


def ms_stability(model):
    """Spectral abscissa of ``A (x) I + I (x) A + sum w_j N_j (x) N_j`` and whether it is negative."""
    alpha = spectral_abscissa(kronecker_generator(model.base, model.weights))
    return alpha < 0, alpha


# ---------------------------------------------------------------- simulation

def _path_rng(seed, stream, index):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream), int(index)]))


def _increments(model, stream, seed, first, count, K, h):
    """Noise increments of shape ``(count, K, channels)`` for paths ``first..first+count-1``."""
    out = np.empty((count, K, len(model.noise)))
    for p in range(count):
        rng = _path_rng(seed, stream, first + p)
        for j, nz in enumerate(model.noise):
            out[p, :, j] = nz.increments(rng, h, K)
    return out


def _em(model, Z0, BU, dM, h):
    """Euler-Maruyama on matrix states ``Z`` of shape ``(P, k, c)``; returns ``(P, K+1, k, c)``."""
    A = model.base.A
    N = np.array(model.base.N)
    P, K = dM.shape[0], dM.shape[1]
    Z = np.broadcast_to(Z0, (P,) + Z0.shape).copy()
    out = np.empty((P, K + 1) + Z0.shape)
    out[:, 0] = Z
    Ah = A * h
    for n in range(K):
        step = Z + Ah @ Z
        if BU is not None:
            step += BU[n][None, :, None] * h
        for j in range(N.shape[0]):
            step += dM[:, n, j, None, None] * (N[j] @ Z)
        Z = step
        out[:, n + 1] = Z
    bad = ~np.all(np.isfinite(out) & (np.abs(out) < BLOWUP), axis=(1, 2, 3))
    out[bad] = np.nan
    return out, int(bad.sum())


def _merge(stats, part):
    """Chan's pairwise update of (count, mean, M2) with a new block of samples."""
    nb = part.shape[0]
    # shifting by the first sample keeps identical samples at exactly zero spread
    dev = part - part[0]
    mdev = dev.mean(axis=0)
    mb = part[0] + mdev
    M2b = ((dev - mdev) ** 2).sum(axis=0)
    if stats is None:
        return nb, mb, M2b
    na, ma, M2a = stats
    n = na + nb
    d = mb - ma
    return n, ma + d * (nb / n), M2a + M2b + d ** 2 * (na * nb / n)


def _run(models, streams, Z0s, u, T, h, paths, seed, reducer, chunk, workers, keep):
    K = max(int(round(T / h)), 1)
    times = h * np.arange(K + 1)
    BUs = []
    for model in models:
        if u is None:
            BUs.append(None)
        else:
            if u.n != model.base.input_dim:
                raise DimMismatch('control and system input dimensions differ')
            BUs.append(u(times[:-1]) @ model.base.B.T)
    starts = list(range(0, paths, chunk))

    def work(first):
        count = min(chunk, paths - first)
        cache = {}
        trajs = []
        bad = 0
        for model, stream, Z0, BU in zip(models, streams, Z0s, BUs):
            if stream not in cache:
                cache[stream] = _increments(model, stream, seed, first, count, K, h)
            Z, nb = _em(model, Z0, BU, cache[stream], h)
            trajs.append(Z)
            bad += nb
        values = reducer(trajs, times)
        finite = np.all(np.isfinite(values.reshape(count, -1)), axis=1)
        return values[finite], bad, trajs[0][:keep] if keep else None

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(work, starts))
    else:
        results = [work(s) for s in starts]
    stats = None
    diverged = 0
    kept = []
    for values, bad, sample in results:
        if values.shape[0]:
            stats = _merge(stats, values)
        diverged += bad
        if sample is not None:
            kept.append(sample)
    n, mean, M2 = stats
    stderr = np.sqrt(M2 / max(n - 1, 1) / n)
    est = MonteCarloEstimate(mean=mean, stderr=stderr, paths=int(n), seed=int(seed), h=float(h))
    sample_paths = np.concatenate(kept)[:keep] if kept else np.zeros((0,))
    return times, est, sample_paths, diverged


def _state0(model, Z0):
    k = model.base.state_dim
    if Z0 is None:
        return np.zeros((k, 1))
    Z0 = np.asarray(Z0, dtype=float)
    if Z0.ndim == 1:
        Z0 = Z0[:, None]
    if Z0.shape[0] != k:
        raise DimMismatch(f'initial state has {Z0.shape[0]} rows, system has {k} states')
    return Z0


def simulate_sde(model, u=None, Z0=None, T=5.0, h=1e-2, paths=1000, seed=0,
                 functional='output', stream=0, chunk=1000, workers=1, keep_paths=0):
    """Euler-Maruyama path ensemble with Monte Carlo statistics of a functional.

    Parameters
    ----------
    model : StochasticModel
    u : ControlSignal, optional
        Deterministic control; ``None`` means zero.
    Z0 : array_like, optional
        Initial state, a vector or a ``(k, c)`` matrix of initial states
        driven by the same noise.  Defaults to zero.
    functional : {'output', 'state', 'sqnorm'} or callable
        Per-path quantity on the time grid.  A callable receives the
        ``(P, K+1, k, c)`` paths and the times and returns ``(P, ...)``.
    stream : int
        Random stream id, so that independent models can share a seed.
    chunk, workers : int
        Paths per work unit and worker threads; neither changes the result.
    keep_paths : int
        Number of raw paths to return.
    """
    Z0 = _state0(model, Z0)
    C = model.base.C
    if functional == 'output':
        def reducer(trajs, times):
            return np.einsum('ob,ptbc->ptoc', C, trajs[0])[..., 0] if Z0.shape[1] == 1 \
                else np.einsum('ob,ptbc->ptoc', C, trajs[0])
    elif functional == 'state':
        def reducer(trajs, times):
            return trajs[0][..., 0] if Z0.shape[1] == 1 else trajs[0]
    elif functional == 'sqnorm':
        def reducer(trajs, times):
            return np.sum(trajs[0] ** 2, axis=(2, 3))
    elif callable(functional):
        def reducer(trajs, times):
            return np.asarray(functional(trajs[0], times))
    else:
        raise ValueError(f'unknown functional {functional!r}')
    times, est, sample, bad = _run([model], [stream], [Z0], u, T, h, paths, seed, reducer,
                                   chunk, workers, keep_paths)
    return EnsembleResult(times=times, estimate=est, sample_paths=sample, diverged=bad)


def mc_gramian_quadratic(model, x, T=10.0, h=2e-3, paths=10000, seed=0, **kw):
    """Monte Carlo estimate of ``E int_0^T ||B^T Phi(t)^T x||^2 dt``.

    ``Phi`` is the homogeneous stochastic flow; the expectation tends to
    ``<x, P x>`` with ``P`` the stochastic reachability gramian as ``T`` grows.
    The time integral uses the trapezoid rule.
    """
    x = np.asarray(x, dtype=float).reshape(-1)

    def quad(Z, times):
        vals = np.einsum('a,ptac->ptc', x, Z)
        sq = np.sum(vals ** 2, axis=2)
        dt = times[1] - times[0]
        return dt * (sq.sum(axis=1) - 0.5 * (sq[:, 0] + sq[:, -1]))

    res = simulate_sde(model, None, model.base.B, T, h, paths, seed, functional=quad, **kw)
    return res.estimate


# ---------------------------------------------------------------- bound checks

@dataclass(frozen=True)
class BoundCheck:
    """Measured mean output error against its bound; ``passed`` allows 3 standard errors."""

    measured: float
    bound: float
    passed: bool
    stderr: float
    mode: str
    coupling: str
    deltaH_TC: float


def _lp_time(values, h, p):
    if math.isinf(p):
        return float(np.max(values))
    return float((h * (np.sum(values ** p) - 0.5 * (values[0] ** p + values[-1] ** p))) ** (1 / p))


def stochastic_bound_check(full, red, u, mode='sup-mean', p=2, coupling='independent', T=None,
                           h=1e-2, paths=10000, seed=0, chunk=1000, workers=1, delta=None):
    """Monte Carlo check of the mean output error bounds for a reduced stochastic model.

    ``mode='mean-Lp'`` compares ``||E (y - y_r)||_{L^p}`` with
    ``2 ||Delta H||_TC ||u||_{L^p}``; ``mode='sup-mean'`` compares
    ``sup_t E||y(t) - y_r(t)||`` with ``2 ||Delta H||_TC sup_t ||u(t)||``.
    With ``coupling='independent'`` the two models use separate noise
    streams, as the sup-mean bound assumes; ``'shared'`` feeds both the same
    noise and uses the correspondingly coupled trace norm.
    """
    if full.base.input_dim != red.base.input_dim or full.base.output_dim != red.base.output_dim:
        raise DimMismatch('full and reduced models must share input and output dimensions')
    if not np.array_equal(full.weights, red.weights):
        raise ValueError('full and reduced models must have the same noise specification')
    for model in (full, red):
        stable, alpha = ms_stability(model)
        if not stable:
            raise NotMSStable(f'model {model.base.label!r} has mean-square abscissa {alpha:.3g}')
    if mode not in ('sup-mean', 'mean-Lp'):
        raise ValueError(f'unknown mode {mode!r}')
    if delta is None:
        delta = delta_hankel_trace_norm(full.base, red.base, coupling, full.weights)
    if T is None:
        decay = -max(ms_stability(full)[1], ms_stability(red)[1]) / 2
        T = u.effective_horizon(1e-4) + math.log(1e4) / decay
    streams = [0, 1] if coupling == 'independent' else [0, 0]
    Cf, Cr = full.base.C, red.base.C

    def diff(trajs, times):
        yf = np.einsum('ob,ptb->pto', Cf, trajs[0][..., 0])
        yr = np.einsum('ob,ptb->pto', Cr, trajs[1][..., 0])
        d = yf - yr
        if mode == 'sup-mean':
            return np.linalg.norm(d, axis=2)
        return d

    times, est, _, _ = _run([full, red], streams, [_state0(full, None), _state0(red, None)], u,
                            T, h, paths, seed, diff, chunk, workers, 0)
    twice = 2 * delta.deltaH_TC
    if mode == 'sup-mean':
        a = int(np.argmax(est.mean))
        measured, stderr = float(est.mean[a]), float(est.stderr[a])
        bound = twice * u.h2
    else:
        measured = _lp_time(np.linalg.norm(est.mean, axis=1), h, p)
        stderr = _lp_time(np.linalg.norm(est.stderr, axis=1), h, p)
        bound = twice * u.lp(p)
    return BoundCheck(measured=measured, bound=bound, passed=bool(measured <= bound + 3 * stderr),
                      stderr=stderr, mode=mode if mode == 'sup-mean' else f'mean-L{p}',
                      coupling=coupling, deltaH_TC=delta.deltaH_TC)


# ---------------------------------------------------------------- energies

def deterministic_reachability_gramian(A, B, tau):
    """``int_0^tau e^{At} B B^T e^{A^T t} dt`` by the Van Loan block exponential."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    k = A.shape[0]
    F = np.block([[A, B @ B.T], [np.zeros((k, k)), -A.T]])
    E = sla.expm(F * tau)
    G = E[:k, k:] @ sla.expm(A.T * tau)
    return (G + G.T) / 2


def finite_horizon_gramians(model, tau):
    """Time-truncated stochastic gramians ``(P_tau, O_tau)``.

    ``P_tau = int_0^tau E[Phi(t) B B^T Phi(t)^T] dt`` and dually for ``O_tau``;
    both come from one block exponential of the vectorized mean-square
    generator.
    """
    base = model.base
    k = base.state_dim
    out = []
    for L, Q in ((kronecker_generator(base, model.weights), base.B @ base.B.T),
                 (kronecker_generator(base, model.weights, transpose=True), base.C.T @ base.C)):
        d = k * k
        F = np.zeros((2 * d, 2 * d))
        F[:d, :d] = L
        F[:d, d:] = np.eye(d)
        integral = sla.expm(F * tau)[:d, d:]
        X = (integral @ Q.reshape(-1, order='F')).reshape(k, k, order='F')
        out.append((X + X.T) / 2)
    return tuple(out)


@dataclass(frozen=True, eq=False)
class EnergyReport:
    """Input and output energies of a state ``x`` over the horizon ``tau``."""

    tau: float
    x: np.ndarray
    E_input: float
    E_output: float
    P_det: np.ndarray
    O_tau: np.ndarray
    control: ControlSignal


def energies(model, x, tau, step=None):
    """Minimal input energy to reach ``x`` and output energy released from ``x``.

    ``E_input = <x, (P_tau^det)^# x>`` with the Moore-Penrose pseudoinverse
    (eigenvalues below ``k * eps * lambda_max`` treated as zero) and
    ``E_output = <x, O_tau x>``.  The minimum-energy control
    ``u(t) = B^T e^{A^T (tau - t)} (P_tau^det)^# x`` is returned sampled
    with ``step`` (default ``tau / 2000``).

    Raises
    ------
    NotReachable
        If ``x`` has a component outside the range of ``P_tau^det`` above
        ``1e-8`` relative.
    """
    if isinstance(model, BilinearSystem):
        model = StochasticModel.wiener(model)
    base = model.base
    x = np.asarray(x, dtype=float).reshape(-1)
    k = base.state_dim
    if x.size != k:
        raise DimMismatch(f'x has {x.size} entries, system has {k} states')
    Pd = deterministic_reachability_gramian(base.A, base.B, tau)
    lam, V = np.linalg.eigh(Pd)
    keep = lam > k * np.finfo(float).eps * max(lam.max(), 0.0)
    Vr, lr = V[:, keep], lam[keep]
    xn = np.linalg.norm(x)
    if xn > 0 and np.linalg.norm(x - Vr @ (Vr.T @ x)) > 1e-8 * xn:
        raise NotReachable('target state is outside the range of the finite-horizon gramian')
    y = Vr @ ((Vr.T @ x) / lr)
    E_in = float(x @ y)
    _, O_tau = finite_horizon_gramians(model, tau)
    E_out = float(x @ O_tau @ x)
    if step is None:
        step = tau / 2000
    K = max(int(round(tau / step)), 1)
    step = tau / K
    back = sla.expm(base.A.T * step)
    v = np.empty((K + 1, k))
    v[K] = y
    for n in range(K, 0, -1):
        v[n - 1] = back @ v[n]
    control = ControlSignal.sampled(v @ base.B, step)
    return EnergyReport(tau=float(tau), x=x, E_input=E_in, E_output=max(E_out, 0.0),
                        P_det=Pd, O_tau=O_tau, control=control)

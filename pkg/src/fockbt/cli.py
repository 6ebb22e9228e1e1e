"""Command line interface.

Every subcommand reads a ``bsys v1`` system file, writes its artifacts
into ``--out`` and prints a ``key=value`` summary.  Artifacts start with
``#`` metadata lines echoing the version and the full configuration, and
contain no timestamps, so identical invocations give identical bytes.

Exit codes: 0 success, 1 usage error, 2 parse error, 3 numerical failure.
"""

import argparse
import math
import os
import sys as _sys
import warnings

import numpy as np

from . import __version__
from .balancing import balance, hankel_singular_values, truncate
from .errorbound import bound_report, delta_hankel_trace_norm
from .errors import FockBTError, ParseError
from .gramians import gramian_direct, gramian_fixed_point, gramian_series, h2_norm
from .hankelfock import FockGrid, assemble_hankel
from .stochastic import StochasticModel, ms_stability, simulate_sde, stochastic_gramians
from .sysfile import format_float, read_csv, read_system, write_csv, write_system
from .sysmodel import ControlSignal, stability_certificate
from .transfer import eval_Gk, transfer_bound_check
from .volterra_sim import integrate_rk4, volterra_series

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(_sys.stderr)
        self.exit(EXIT_USAGE, f'{self.prog}: error: {message}\n')


# ------------------------------------------------------------------ helpers

def parse_control(spec, n=1):
    """Control from a spec string.

    ``zero``, ``exp:amp=A,rate=R``, ``window:amp=A,t0=T0,t1=T1`` or
    ``csv:PATH`` (first column time, then one column per channel).  Vector
    amplitudes separate entries by ``;``.
    """
    kind, _, rest = spec.partition(':')
    if kind == 'zero':
        return ControlSignal.zero(n)
    if kind == 'csv':
        _, _, rows = read_csv(rest)
        if rows.shape[0] < 2:
            raise UsageError('control CSV needs at least two rows')
        return ControlSignal.sampled(rows[:, 1:], rows[1, 0] - rows[0, 0])
    params = {}
    for item in filter(None, rest.split(',')):
        key, eq, value = item.partition('=')
        if not eq:
            raise UsageError(f'bad control parameter {item!r}')
        try:
            params[key] = [float(v) for v in value.split(';')]
        except ValueError:
            raise UsageError(f'bad number in control parameter {item!r}') from None
    try:
        if kind == 'exp':
            amp = params.pop('amp', [1.0])
            rate = params.pop('rate', [1.0])[0]
            u = ControlSignal.exponential(amp * n if len(amp) == 1 else amp, rate)
        elif kind == 'window':
            amp = params.pop('amp', [1.0])
            u = ControlSignal.window(amp * n if len(amp) == 1 else amp,
                                     params.pop('t0', [0.0])[0], params.pop('t1', [1.0])[0])
        else:
            raise UsageError(f'unknown control kind {kind!r}')
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if params:
        raise UsageError(f'unknown control parameters: {", ".join(sorted(params))}')
    if u.n != n:
        raise UsageError(f'control has {u.n} channels, system has {n} inputs')
    return u


def _load(path):
    obj = read_system(path)
    if isinstance(obj, StochasticModel):
        return obj.base, obj
    return obj, None


def _meta(args):
    meta = {'version': __version__, 'command': args.command}
    for key in sorted(vars(args)):
        if key in ('command', 'func', 'out'):
            continue
        meta[key] = getattr(args, key)
    return meta


def _out(args, name):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _matrix_csv(args, name, M, meta):
    header = [f'c{j + 1}' for j in range(M.shape[1])]
    write_csv(_out(args, name), header, M, meta)


def _write_kv(args, name, pairs, meta):
    lines = [f'# {k}={v}' for k, v in meta.items()]
    lines += [f'{k}={_fmt(v)}' for k, v in pairs]
    text = '\n'.join(lines) + '\n'
    with open(_out(args, name), 'w', encoding='utf-8', newline='\n') as fh:
        fh.write(text)
    for k, v in pairs:
        print(f'{k}={_fmt(v)}')


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    if v is None:
        return 'none'
    return str(v)


def _certificate_pairs(sys):
    try:
        c = stability_certificate(sys)
    except FockBTError:
        return [('certificate', 'none')]
    return [('cert_method', c.method), ('nu', c.nu), ('M', c.M), ('Gamma', c.Gamma),
            ('Xi', c.Xi), ('theta', c.theta), ('cert_valid', c.valid)]


def _gramians(sys, model, method):
    if model is not None:
        return stochastic_gramians(model)
    if method == 'series':
        return gramian_series(sys).to_pair(sys)
    if method == 'fixed-point':
        return gramian_fixed_point(sys)
    return gramian_direct(sys)


# ------------------------------------------------------------------ commands

def cmd_gramian(args):
    sys, model = _load(args.system)
    g = _gramians(sys, model, args.method)
    meta = _meta(args)
    _matrix_csv(args, 'P.csv', g.P, meta)
    _matrix_csv(args, 'O.csv', g.O, meta)
    _write_kv(args, 'gramian.txt', [('method', g.method), ('residual_P', g.residual_P),
                                    ('residual_O', g.residual_O)] + _certificate_pairs(sys), meta)


def cmd_hsv(args):
    sys, model = _load(args.system)
    s = hankel_singular_values(_gramians(sys, model, args.method))
    write_csv(_out(args, 'hsv.csv'), ['index', 'sigma'],
              np.column_stack([np.arange(1, s.size + 1), s]), _meta(args))
    for i, v in enumerate(s, 1):
        print(f'sigma_{i}={format_float(v)}')


def cmd_balance(args):
    sys, model = _load(args.system)
    bal = balance(sys, _gramians(sys, model, 'direct'))
    meta = _meta(args)
    out = bal.balanced_system if model is None else model.with_base(bal.balanced_system)
    write_system(_out(args, 'balanced.bsys'), out)
    _matrix_csv(args, 'T.csv', bal.T, meta)
    _matrix_csv(args, 'Tinv.csv', bal.Tinv, meta)
    write_csv(_out(args, 'hsv.csv'), ['index', 'sigma'],
              np.column_stack([np.arange(1, bal.sigma.size + 1), bal.sigma]), meta)
    print(f'order={bal.sigma.size}')


def cmd_reduce(args):
    sys, model = _load(args.system)
    bal = balance(sys, _gramians(sys, model, 'direct'))
    red = truncate(bal, args.order, force=args.force)
    out = red.reduced if model is None else model.with_base(red.reduced)
    write_system(_out(args, 'reduced.bsys'), out)
    pairs = [('order', red.order), ('kept_sigma', ' '.join(map(format_float, red.kept_sigma))),
             ('discarded_sigma', ' '.join(map(format_float, red.discarded_sigma)))]
    pairs += [('reduced_' + k, v) for k, v in _certificate_pairs(red.reduced)]
    _write_kv(args, 'reduce.txt', pairs, _meta(args))


def cmd_bound(args):
    sys, model = _load(args.system)
    red, red_model = _load(args.reduced)
    weights = None if model is None else model.weights
    coupling = args.coupling or ('independent' if model is not None else 'shared')
    u = parse_control(args.control, sys.input_dim) if args.control else None
    with warnings.catch_warnings():
        warnings.simplefilter('ignore')
        delta = delta_hankel_trace_norm(sys, red, coupling, weights)
        rep = bound_report(sys, red, u, coupling, weights, delta)
    pairs = [('deltaH_TC', rep.deltaH_TC), ('bound_transfer', rep.bound_transfer),
             ('certified', rep.certified), ('composite_theta', rep.composite_theta),
             ('coupling', rep.coupling)]
    if u is not None:
        pairs += [('bound_output', rep.bound_output), ('admissible', rep.admissible),
                  ('bound_stoch_sup', rep.bound_stoch_sup)]
        pairs += [(f'bound_stoch_mean_L{p}', v) for p, v in rep.bound_stoch_mean.items()]
    meta = _meta(args)
    _write_kv(args, 'bound.txt', pairs, meta)
    s = delta.sigma
    write_csv(_out(args, 'composite_sigma.csv'), ['index', 'sigma'],
              np.column_stack([np.arange(1, s.size + 1), s]), meta)


def cmd_hankel(args):
    sys, _ = _load(args.system)
    grid = FockGrid.for_system(sys, m_t=args.modes, K=args.depth, a=args.scale)
    H = assemble_hankel(sys, grid)
    s = H.svd()[0]
    meta = _meta(args)
    meta['laguerre_scale'] = format_float(grid.a)
    write_csv(_out(args, 'hankel_sigma.csv'), ['index', 'sigma'],
              np.column_stack([np.arange(1, s.size + 1), s]), meta)
    print(f'rows={grid.rows}')
    print(f'cols={grid.cols}')
    print(f'hs_norm={format_float(H.hs_norm())}')
    for i, v in enumerate(s, 1):
        print(f'sigma_{i}={format_float(v)}')


def cmd_simulate(args):
    sys, _ = _load(args.system)
    u = parse_control(args.control, sys.input_dim)
    x0 = None if args.x0 is None else [float(v) for v in args.x0.split(',')]
    if args.method == 'rk4':
        tr = integrate_rk4(sys, u, x0, args.T, args.h)
    elif args.method.startswith('volterra:'):
        try:
            depth = int(args.method.split(':', 1)[1])
        except ValueError:
            raise UsageError(f'bad Volterra depth in {args.method!r}') from None
        with warnings.catch_warnings():
            warnings.simplefilter('ignore')
            tr = volterra_series(sys, u, x0, args.T, args.h, depth)
    else:
        raise UsageError(f'unknown method {args.method!r}')
    header = ['t'] + [f'y{i + 1}' for i in range(sys.output_dim)] + \
        [f'x{i + 1}' for i in range(sys.state_dim)]
    meta = _meta(args)
    meta['diverged'] = str(tr.diverged).lower()
    write_csv(_out(args, 'trace.csv'), header,
              np.column_stack([tr.times, tr.outputs, tr.states]), meta)
    print(f'steps={tr.times.size - 1}')
    print(f'diverged={str(tr.diverged).lower()}')
    print(f'sup_output={format_float(np.nanmax(np.linalg.norm(tr.outputs, axis=1)))}')


def cmd_stochastic(args):
    sys, model = _load(args.system)
    if model is None:
        model = StochasticModel.wiener(sys)
    u = parse_control(args.control, sys.input_dim) if args.control else None
    x0 = None if args.x0 is None else [float(v) for v in args.x0.split(',')]
    stable, alpha = ms_stability(model)
    res = simulate_sde(model, u, x0, args.T, args.h, args.paths, args.seed,
                       functional='output', workers=args.workers)
    est = res.estimate
    m = sys.output_dim
    header = ['t'] + [f'mean_y{i + 1}' for i in range(m)] + [f'stderr_y{i + 1}' for i in range(m)]
    meta = _meta(args)
    meta['ms_abscissa'] = format_float(alpha)
    meta['paths_used'] = est.paths
    meta['diverged'] = res.diverged
    write_csv(_out(args, 'stochastic.csv'), header,
              np.column_stack([res.times, est.mean.reshape(len(res.times), -1),
                               est.stderr.reshape(len(res.times), -1)]), meta)
    print(f'ms_stable={str(stable).lower()}')
    print(f'ms_abscissa={format_float(alpha)}')
    print(f'paths={est.paths}')
    print(f'seed={args.seed}')


def cmd_h2(args):
    sys, model = _load(args.system)
    g = _gramians(sys, model, args.method)
    via_O, via_P = h2_norm(sys, g)
    _write_kv(args, 'h2.txt', [('h2_squared_via_O', via_O), ('h2_squared_via_P', via_P),
                               ('h2_norm', math.sqrt(max(via_O, 0.0)))], _meta(args))


def cmd_transfer(args):
    sys, _ = _load(args.system)
    meta = _meta(args)
    if args.s:
        pts = [complex(v.replace(' ', '')) for v in args.s.split(',')]
    else:
        pts = [0j] * (args.k + 1)
    if len(pts) != args.k + 1:
        raise UsageError(f'G_{args.k} needs {args.k + 1} frequency points')
    G = eval_Gk(sys, args.k, pts)
    header = []
    for j in range(G.shape[1]):
        header += [f're_col{j + 1}', f'im_col{j + 1}']
    rows = np.empty((G.shape[0], 2 * G.shape[1]))
    rows[:, 0::2], rows[:, 1::2] = G.real, G.imag
    write_csv(_out(args, 'transfer.csv'), header, rows, meta)
    print(f'rows={G.shape[0]}')
    if args.check13:
        if not args.reduced:
            raise UsageError('--check13 needs --reduced')
        red, _ = _load(args.reduced)
        with warnings.catch_warnings():
            warnings.simplefilter('ignore')
            res = transfer_bound_check(sys, red, kmax=min(args.k, 2))
        pairs = [('partial_sum', res.partial_sum), ('bound', res.bound), ('pass', res.passed)]
        pairs += [(f'term_k{t.k}_sup{t.i}', t.value) for t in res.terms]
        _write_kv(args, 'transfer_bound.txt', pairs, meta)


# ------------------------------------------------------------------ parser

def build_parser():
    p = _Parser(prog='fockbt', description='Balanced truncation of bilinear and stochastic '
                                           'systems.')
    p.add_argument('--version', action='version', version=f'fockbt {__version__}')
    sub = p.add_subparsers(dest='command', required=True, parser_class=_Parser)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument('system', help='system file (bsys v1)')
        sp.add_argument('--out', default='.', help='artifact directory (default: .)')
        sp.set_defaults(func=func)
        return sp

    methods = ('direct', 'series', 'fixed-point')
    sp = add('gramian', cmd_gramian, 'write P.csv, O.csv and residuals')
    sp.add_argument('--method', choices=methods, default='direct')
    sp = add('hsv', cmd_hsv, 'Hankel singular values')
    sp.add_argument('--method', choices=methods, default='direct')
    add('balance', cmd_balance, 'balanced realization')
    sp = add('reduce', cmd_reduce, 'balanced truncation to a given order')
    sp.add_argument('--order', type=int, required=True)
    sp.add_argument('--force', action='store_true', help='allow cutting a degenerate pair')
    sp = add('bound', cmd_bound, 'error bounds against a reduced model')
    sp.add_argument('--reduced', required=True)
    sp.add_argument('--control', default=None)
    sp.add_argument('--coupling', choices=('shared', 'independent'), default=None)
    sp = add('hankel', cmd_hankel, 'discretized Fock-space Hankel singular values')
    sp.add_argument('--depth', type=int, default=3)
    sp.add_argument('--modes', type=int, default=20)
    sp.add_argument('--scale', type=float, default=None)
    sp = add('simulate', cmd_simulate, 'deterministic simulation')
    sp.add_argument('--control', default='zero')
    sp.add_argument('--method', default='rk4', help='rk4 or volterra:DEPTH')
    sp.add_argument('--T', type=float, default=10.0)
    sp.add_argument('--h', type=float, default=1e-2)
    sp.add_argument('--x0', default=None, help='comma separated initial state')
    sp = add('stochastic', cmd_stochastic, 'Monte Carlo output statistics')
    sp.add_argument('--paths', type=int, default=1000)
    sp.add_argument('--seed', type=int, default=0)
    sp.add_argument('--control', default=None)
    sp.add_argument('--T', type=float, default=5.0)
    sp.add_argument('--h', type=float, default=1e-2)
    sp.add_argument('--x0', default=None)
    sp.add_argument('--workers', type=int, default=1)
    sp = add('h2', cmd_h2, 'H2 norm from the gramians')
    sp.add_argument('--method', choices=methods, default='direct')
    sp = add('transfer', cmd_transfer, 'evaluate G_k and check the transfer bound')
    sp.add_argument('--k', type=int, default=0)
    sp.add_argument('--s', default=None, help='comma separated complex points')
    sp.add_argument('--check13', action='store_true')
    sp.add_argument('--reduced', default=None)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        print(f'usage error: {exc}', file=_sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f'usage error: {exc}', file=_sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        print(f'parse error: {exc}', file=_sys.stderr)
        return EXIT_PARSE
    except FockBTError as exc:
        print(f'numerical failure: {type(exc).__name__}: {exc}', file=_sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == '__main__':
    _sys.exit(main())

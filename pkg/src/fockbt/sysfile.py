"""Plain-text system files (``bsys v1``) and CSV artifacts.

A system file looks like::

    bsys v1
    label scalar
    n_state 1
    n_in 1
    n_out 1
    A
    -1
    N 1
    0.5
    B
    1
    C
    1
    noise 1 cpoisson 2.0

Matrix sections are followed by their rows, whitespace separated.  ``#``
starts a comment.  Floats are written with ``repr`` so a serialize/parse
round trip reproduces every bit.
"""

import io
import math

import numpy as np

from .errors import ParseError
from .stochastic import NoiseSpec, StochasticModel
from .sysmodel import BilinearSystem, validate_system

__all__ = ['parse_system', 'serialize_system', 'read_system', 'write_system',
           'write_csv', 'read_csv', 'format_float']

HEADER = 'bsys v1'
DIM_KEYS = ('n_state', 'n_in', 'n_out')


def format_float(x):
    """Shortest string that parses back to the same double."""
    return repr(float(x))


class _Lines:
    def __init__(self, text):
        self.items = []
        for no, raw in enumerate(text.splitlines(), 1):
            body = raw.split('#', 1)[0]
            if body.strip():
                self.items.append((no, body))
        self.pos = 0

    def peek(self):
        return self.items[self.pos] if self.pos < len(self.items) else None

    def next(self):
        item = self.peek()
        self.pos += 1
        return item

    @staticmethod
    def tokens(body):
        """Tokens with their 1-based columns."""
        out = []
        i = 0
        while i < len(body):
            if body[i].isspace():
                i += 1
                continue
            j = i
            while j < len(body) and not body[j].isspace():
                j += 1
            out.append((body[i:j], i + 1))
            i = j
        return out


def _number(tok, no, col):
    try:
        x = float(tok)
    except ValueError:
        raise ParseError(f'expected a number, got {tok!r}', no, col) from None
    if not math.isfinite(x):
        raise ParseError(f'non-finite entry {tok!r}', no, col)
    return x


def _count(tok, no, col, what):
    try:
        v = int(tok)
    except ValueError:
        raise ParseError(f'{what} must be a positive integer, got {tok!r}', no, col) from None
    if v < 1:
        raise ParseError(f'{what} must be a positive integer, got {tok!r}', no, col)
    return v


def _matrix(lines, rows, cols, name, head_no):
    out = np.empty((rows, cols))
    for r in range(rows):
        item = lines.next()
        if item is None:
            raise ParseError(f'section {name} ended after {r} of {rows} rows', head_no, 1)
        no, body = item
        toks = lines.tokens(body)
        if toks and not _is_number(toks[0][0]):
            raise ParseError(f'section {name} has {r} rows, expected {rows}', no, toks[0][1])
        if len(toks) != cols:
            col = toks[cols][1] if len(toks) > cols else len(body.rstrip()) + 1
            raise ParseError(f'row {r + 1} of section {name} has {len(toks)} entries, '
                             f'expected {cols}', no, col)
        out[r] = [_number(t, no, c) for t, c in toks]
    nxt = lines.peek()
    if nxt is not None:
        toks = lines.tokens(nxt[1])
        if _is_number(toks[0][0]):
            raise ParseError(f'section {name} has more than {rows} rows', nxt[0], toks[0][1])
    return out


def _is_number(tok):
    try:
        float(tok)
        return True
    except ValueError:
        return False


def parse_system(text):
    """Parse ``bsys v1`` text into a :class:`BilinearSystem` or :class:`StochasticModel`.

    Raises
    ------
    ParseError
        With the 1-based line and column of the first problem.
    """
    lines = _Lines(text)
    first = lines.next()
    if first is None or ' '.join(first[1].split()) != HEADER:
        raise ParseError(f'expected header {HEADER!r}', first[0] if first else 1, 1)
    dims = {}
    mats = {}
    N = {}
    noise = {}
    label = ''
    while True:
        item = lines.next()
        if item is None:
            break
        no, body = item
        toks = lines.tokens(body)
        key, kcol = toks[0]
        if key in DIM_KEYS:
            if len(toks) != 2:
                raise ParseError(f'{key} takes one value', no, kcol)
            if key in dims:
                raise ParseError(f'duplicate {key}', no, kcol)
            dims[key] = _count(toks[1][0], no, toks[1][1], key)
        elif key == 'label':
            label = body.strip()[len('label'):].strip()
        elif key in ('A', 'B', 'C', 'N'):
            missing = [d for d in DIM_KEYS if d not in dims]
            if missing:
                raise ParseError(f'section {key} before {", ".join(missing)} is declared', no, kcol)
            k, n, m = dims['n_state'], dims['n_in'], dims['n_out']
            if key == 'N':
                if len(toks) != 2:
                    raise ParseError('N section needs a channel index', no, kcol)
                idx = _count(toks[1][0], no, toks[1][1], 'channel index')
                if idx > n:
                    raise ParseError(f'channel index {idx} exceeds n_in={n}', no, toks[1][1])
                if idx in N:
                    raise ParseError(f'duplicate section N {idx}', no, kcol)
                N[idx] = _matrix(lines, k, k, f'N {idx}', no)
            else:
                if len(toks) != 1:
                    raise ParseError(f'unexpected text after section {key}', no, toks[1][1])
                if key in mats:
                    raise ParseError(f'duplicate section {key}', no, kcol)
                shape = {'A': (k, k), 'B': (k, n), 'C': (m, k)}[key]
                mats[key] = _matrix(lines, *shape, key, no)
        elif key == 'noise':
            if len(toks) < 3:
                raise ParseError('noise needs a channel index and a kind', no, kcol)
            idx = _count(toks[1][0], no, toks[1][1], 'channel index')
            kind, col = toks[2]
            if kind == 'wiener' and len(toks) == 3:
                noise[idx] = NoiseSpec('wiener')
            elif kind == 'cpoisson' and len(toks) == 4:
                rate = _number(toks[3][0], no, toks[3][1])
                if rate <= 0:
                    raise ParseError('Poisson rate must be positive', no, toks[3][1])
                noise[idx] = NoiseSpec('cpoisson', rate)
            else:
                raise ParseError("noise kind must be 'wiener' or 'cpoisson <rate>'", no, col)
        else:
            raise ParseError(f'unknown keyword {key!r}', no, kcol)
    end = (lines.items[-1][0] if lines.items else 1)
    for key in ('A', 'B', 'C'):
        if key not in mats:
            raise ParseError(f'missing section {key}', end, 1)
    n = dims['n_in']
    for i in range(1, n + 1):
        if i not in N:
            raise ParseError(f'missing section N {i}', end, 1)
    sys = BilinearSystem(mats['A'], [N[i] for i in range(1, n + 1)], mats['B'], mats['C'], label)
    problems = validate_system(sys)
    if problems:
        raise ParseError('; '.join(problems), end, 1)
    if not noise:
        return sys
    if sorted(noise) != list(range(1, n + 1)):
        raise ParseError('noise must be given for every channel or none', end, 1)
    return StochasticModel(sys, tuple(noise[i] for i in range(1, n + 1)))


def serialize_system(obj):
    """Text of a system or stochastic model; inverse of :func:`parse_system`."""
    if isinstance(obj, StochasticModel):
        sys, noise = obj.base, obj.noise
    else:
        sys, noise = obj, ()
    out = [HEADER]
    if sys.label:
        out.append(f'label {sys.label}')
    out += [f'n_state {sys.state_dim}', f'n_in {sys.input_dim}', f'n_out {sys.output_dim}']

    def block(name, M):
        out.append(name)
        out.extend(' '.join(format_float(x) for x in row) for row in M)

    block('A', sys.A)
    for i, Ni in enumerate(sys.N, 1):
        block(f'N {i}', Ni)
    block('B', sys.B)
    block('C', sys.C)
    for i, nz in enumerate(noise, 1):
        out.append(f'noise {i} wiener' if nz.kind == 'wiener'
                   else f'noise {i} cpoisson {format_float(nz.rate)}')
    return '\n'.join(out) + '\n'


def read_system(path):
    with open(path, encoding='utf-8') as fh:
        return parse_system(fh.read())


def write_system(path, obj):
    with open(path, 'w', encoding='utf-8', newline='\n') as fh:
        fh.write(serialize_system(obj))


def write_csv(target, header, rows, metadata=None):
    """CSV with ``# key=value`` metadata lines, a header row and ``repr`` floats.

    ``target`` is a path or a text stream.  Returns the written text.
    """
    buf = io.StringIO()
    for key, value in (metadata or {}).items():
        buf.write(f'# {key}={value}\n')
    buf.write(','.join(header) + '\n')
    for row in np.atleast_2d(np.asarray(rows, dtype=float)) if len(rows) else []:
        if len(row) != len(header):
            raise ValueError(f'row has {len(row)} fields, header has {len(header)}')
        buf.write(','.join(format_float(x) for x in row) + '\n')
    text = buf.getvalue()
    if hasattr(target, 'write'):
        target.write(text)
    else:
        with open(target, 'w', encoding='utf-8', newline='\n') as fh:
            fh.write(text)
    return text


def read_csv(source):
    """Inverse of :func:`write_csv`: ``(metadata, header, rows)``."""
    if hasattr(source, 'read'):
        text = source.read()
    else:
        with open(source, encoding='utf-8') as fh:
            text = fh.read()
    meta, header, rows = {}, None, []
    for no, line in enumerate(text.splitlines(), 1):
        if line.startswith('#'):
            key, _, value = line[1:].strip().partition('=')
            meta[key] = value
        elif header is None:
            header = line.split(',')
        elif line:
            fields = line.split(',')
            if len(fields) != len(header):
                raise ParseError(f'{len(fields)} fields, header has {len(header)}', no, 1)
            rows.append([_number(f, no, 1) for f in fields])
    if header is None:
        raise ParseError('missing header row', 1, 1)
    return meta, header, np.array(rows, dtype=float).reshape(-1, len(header))

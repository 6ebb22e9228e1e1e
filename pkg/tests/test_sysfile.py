import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fockbt import BilinearSystem, NoiseSpec, StochasticModel, parse_system, serialize_system
from fockbt.errors import ParseError
from fockbt.sysfile import read_csv, write_csv

SCALAR_TEXT = """bsys v1
label scalar   # comment
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
1e0
"""


def test_parse_scalar():
    s = parse_system(SCALAR_TEXT)
    assert isinstance(s, BilinearSystem) and s.label == 'scalar'
    assert (s.A[0, 0], s.N[0][0, 0], s.B[0, 0], s.C[0, 0]) == (-1.0, 0.5, 1.0, 1.0)


def test_parse_noise():
    m = parse_system(SCALAR_TEXT + 'noise 1 cpoisson 2.0\n')
    assert isinstance(m, StochasticModel)
    np.testing.assert_array_equal(m.weights, [2.0])
    assert parse_system(SCALAR_TEXT + 'noise 1 wiener\n').noise[0].kind == 'wiener'


@pytest.mark.parametrize('text, line, col', [
    ('bsys v2\n', 1, 1),
    (SCALAR_TEXT.replace('n_state 1', 'n_state 2'), 7, 3),
    (SCALAR_TEXT.replace('0.5', 'x.5'), 9, 1),
    (SCALAR_TEXT.replace('N 1', 'N 2'), 8, 3),
    (SCALAR_TEXT + 'noise 1 gauss\n', 14, 9),
    (SCALAR_TEXT + 'foo 1\n', 14, 1),
    (SCALAR_TEXT.replace('-1', 'inf'), 7, 1),
])
def test_parse_errors_carry_position(text, line, col):
    with pytest.raises(ParseError) as exc:
        parse_system(text)
    assert (exc.value.line, exc.value.column) == (line, col)
    assert str(exc.value).startswith(f'line {line}, column {col}:')


def test_missing_section():
    with pytest.raises(ParseError, match='missing section C'):
        parse_system(SCALAR_TEXT.split('C\n')[0])


matrices = st.integers(1, 4).flatmap(lambda k: st.tuples(
    st.just(k), st.integers(1, 3), st.integers(1, 3), st.integers(0, 2 ** 32 - 1)))


@settings(max_examples=40, deadline=None)
@given(matrices, st.booleans())
def test_round_trip_is_bit_exact(dims, noisy):
    k, n, m, seed = dims
    rng = np.random.default_rng(seed)
    scale = 10.0 ** rng.integers(-300, 300, size=4)
    s = BilinearSystem(rng.standard_normal((k, k)) * scale[0],
                       [rng.standard_normal((k, k)) * scale[1] for _ in range(n)],
                       rng.standard_normal((k, n)) * scale[2], rng.standard_normal((m, k)) * scale[3],
                       label='rt')
    obj = StochasticModel(s, tuple(NoiseSpec('cpoisson', 1.5) for _ in range(n))) if noisy else s
    text = serialize_system(obj)
    back = parse_system(text)
    base = back.base if noisy else back
    for a, b in [(s.A, base.A), (s.B, base.B), (s.C, base.C)] + list(zip(s.N, base.N)):
        assert a.tobytes() == b.tobytes()
    assert serialize_system(back) == text


@settings(max_examples=30, deadline=None)
@given(st.lists(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=3,
                         max_size=3), min_size=1, max_size=20))
def test_csv_round_trip(rows):
    buf = io.StringIO()
    write_csv(buf, ['a', 'b', 'c'], rows, {'seed': 3})
    meta, header, back = read_csv(io.StringIO(buf.getvalue()))
    assert meta == {'seed': '3'} and header == ['a', 'b', 'c']
    assert np.array(rows, dtype=float).tobytes() == back.tobytes()

import os

import numpy as np
import pytest

from fockbt import serialize_system
from fockbt.cli import main, parse_control
from fockbt.sysfile import read_csv, read_system

from conftest import make_2d, make_scalar


@pytest.fixture
def files(tmp_path):
    paths = {}
    for name, sys in [('scalar', make_scalar()), ('twod', make_2d())]:
        p = tmp_path / f'{name}.bsys'
        p.write_text(serialize_system(sys))
        paths[name] = str(p)
    paths['out'] = str(tmp_path / 'out')
    return paths


def run(*args):
    return main([str(a) for a in args])


def test_gramian_command(files, capsys):
    assert run('gramian', files['scalar'], '--out', files['out']) == 0
    meta, header, P = read_csv(os.path.join(files['out'], 'P.csv'))
    assert meta['version'] and meta['command'] == 'gramian'
    assert abs(P[0, 0] - 4 / 7) < 1e-12
    assert 'theta=0.125' in capsys.readouterr().out


def test_hsv_and_h2(files, capsys):
    assert run('hsv', files['twod'], '--out', files['out']) == 0
    assert run('h2', files['scalar'], '--out', files['out']) == 0
    out = capsys.readouterr().out
    assert 'sigma_1=0.50257' in out and 'h2_squared_via_O=0.5714285714285' in out


def test_reduce_then_bound(files, capsys):
    assert run('reduce', files['twod'], '--order', 1, '--out', files['out']) == 0
    red = os.path.join(files['out'], 'reduced.bsys')
    assert read_system(red).state_dim == 1
    assert run('bound', files['twod'], '--reduced', red, '--control', 'exp:amp=0.3,rate=1',
               '--out', files['out']) == 0
    out = capsys.readouterr().out
    assert 'deltaH_TC=0.05089' in out and 'admissible=true' in out


def test_balance(files):
    assert run('balance', files['twod'], '--out', files['out']) == 0
    assert read_system(os.path.join(files['out'], 'balanced.bsys')).state_dim == 2


def test_hankel(files, capsys):
    assert run('hankel', files['scalar'], '--depth', 3, '--modes', 10, '--out', files['out']) == 0
    _, _, sig = read_csv(os.path.join(files['out'], 'hankel_sigma.csv'))
    assert abs(sig[0, 1] - 4 / 7) < 5e-3


def test_simulate(files):
    assert run('simulate', files['scalar'], '--control', 'window:amp=0.5,t0=0,t1=1',
               '--method', 'volterra:6', '--T', 2, '--out', files['out']) == 0
    _, header, rows = read_csv(os.path.join(files['out'], 'trace.csv'))
    assert header == ['t', 'y1', 'x1'] and rows.shape == (201, 3)


def test_transfer_bound_flag(files, capsys, tmp_path):
    lin = tmp_path / 'lin.bsys'
    lin.write_text(serialize_system(make_scalar().linear_part()))
    assert run('transfer', files['scalar'], '--k', 1, '--s', '0,0', '--check13', '--reduced', lin,
               '--out', files['out']) == 0
    out = capsys.readouterr().out
    assert 'pass=true' in out


def test_stochastic_rerun_is_byte_identical(files, tmp_path):
    outs = []
    for i in range(2):
        d = tmp_path / f'run{i}'
        assert run('stochastic', files['scalar'], '--paths', 300, '--seed', 5, '--T', 1,
                   '--control', 'exp:amp=1,rate=1', '--out', d) == 0
        outs.append((d / 'stochastic.csv').read_bytes())
    assert outs[0] == outs[1]
    assert b'# seed=5' in outs[0]


def test_exit_codes(files, tmp_path, capsys):
    bad = tmp_path / 'bad.bsys'
    bad.write_text('bsys v1\nn_state x\n')
    assert run('h2', bad) == 2
    assert 'line 2, column 9' in capsys.readouterr().err
    assert run('reduce', files['twod'], '--order', 5, '--out', files['out']) == 3
    assert 'BadOrder' in capsys.readouterr().err
    assert run('simulate', files['scalar'], '--control', 'sine:amp=1') == 1
    assert run('h2', tmp_path / 'missing.bsys') == 1
    with pytest.raises(SystemExit) as exc:
        run('nope')
    assert exc.value.code == 1


def test_parse_control(tmp_path):
    u = parse_control('exp:amp=2,rate=3')
    assert u.linf == 2.0 and abs(u.l2 - 2 / np.sqrt(6)) < 1e-12
    v = parse_control('window:amp=1;2,t0=0,t1=1', n=2)
    assert v.n == 2 and v.h2 == pytest.approx(np.sqrt(5))
    p = tmp_path / 'u.csv'
    p.write_text('t,u1\n0,1\n0.5,2\n1,3\n')
    w = parse_control(f'csv:{p}')
    assert w(0.25)[0] == pytest.approx(1.5)

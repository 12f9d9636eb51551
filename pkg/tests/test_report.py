import numpy as np
import pytest

from src.bounds import BoundResult
from src.errors import InvalidSpec
from src.optimize import SweepRow, SweepTable
from src.report import (
    SWEEP_HEADER,
    format_bound,
    format_number,
    format_table,
    parse_number,
    read_bound_csv,
    read_matrix_csv,
    read_sweep_csv,
    write_bound_csv,
    write_matrix_csv,
    write_sweep_csv,
    write_table_csv,
)


def _table():
    rows = (
        SweepRow(0.5, 0.25, 'global', 0.123456789012345, 0.02, 0.162, 'ok'),
        SweepRow(0.5, 1.0, 'ww', None, None, None, 'unsupported'),
    )
    return SweepTable(rows=rows, model_digest='abc', cfg_digest='def')


def test_format_number():
    assert format_number(0.5) == '0.5000000000'
    assert format_number(0.64, 3) == '0.640'
    assert format_number(1234.5, 3) == '1.23e+03'
    assert format_number(None) == ''
    assert format_number(float('inf')) == 'inf'
    assert parse_number('') is None
    assert parse_number('0.5000000000') == 0.5


def test_sweep_csv_layout(tmp_path):
    path = tmp_path / 'out' / 'sweep.csv'
    write_sweep_csv(_table(), path)
    lines = path.read_text(encoding='utf-8').split('\n')
    assert lines[0] == ','.join(SWEEP_HEADER)
    assert lines[1] == '0.5000000000,0.2500000000,global,0.1234567890,0.02000000000,0.1620000000,ok'
    assert lines[2] == '0.5000000000,1.000000000,ww,,,,unsupported'


def test_sweep_csv_read_back(tmp_path):
    path = tmp_path / 'sweep.csv'
    write_sweep_csv(_table(), path)
    rows = read_sweep_csv(path)
    assert rows[0].value == pytest.approx(0.123456789012345, rel=1e-9)
    assert rows[1].status == 'unsupported'
    assert rows[1].value is None


def test_writes_are_byte_identical(tmp_path):
    first, second = tmp_path / 'a.csv', tmp_path / 'b.csv'
    write_sweep_csv(_table(), first)
    write_sweep_csv(_table(), second)
    assert first.read_bytes() == second.read_bytes()


def test_bound_csv(tmp_path):
    path = tmp_path / 'bound.csv'
    result = BoundResult('conditional', 'ok', 0.25, 0.0625, 0.25, {'h': 1.0, 's': 0.5, 'y': -0.3})
    write_bound_csv([result], path, precision=6)
    [back] = read_bound_csv(path)
    assert back.flavor == 'conditional'
    assert back.value == 0.25
    assert back.meta == {'h': 1.0, 's': 0.5, 'y': -0.3}


def test_format_bound_lists_notes():
    result = BoundResult('asymptotic', 'non_regular', None, notes=('first note', 'second note'))
    text = format_bound(result)
    assert 'status:      non_regular' in text
    assert 'value:       n/a' in text
    assert text.endswith('note:        second note')


def test_matrix_csv(tmp_path):
    path = tmp_path / 'matrix.csv'
    matrix = np.array([[0.5, 0.1], [0.1, 0.25]])
    write_matrix_csv(matrix, path)
    assert path.read_text(encoding='utf-8').split('\n')[:2] == ['q,r', '2,2']
    assert read_matrix_csv(path) == pytest.approx(matrix)


def test_readers_reject_foreign_files(tmp_path):
    path = tmp_path / 'other.csv'
    write_table_csv(('name', 'passed', 'detail'), [['x', 'PASS', '']], path)
    with pytest.raises(InvalidSpec):
        read_sweep_csv(path)
    with pytest.raises(InvalidSpec):
        read_matrix_csv(path)


def test_format_table_alignment():
    text = format_table(('a', 'long'), [['xyz', '1'], ['q', '22']])
    assert text.split('\n') == ['a    long', '---  ----', 'xyz  1', 'q    22']

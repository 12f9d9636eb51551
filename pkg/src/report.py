"""
Text and CSV output.

Numbers print with a fixed count of significant digits so that reruns with the
same config produce byte-identical files.
"""
import csv
import io
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .bounds import BoundResult
from .errors import InvalidSpec
from .optimize import SweepRow, SweepTable

DEFAULT_PRECISION = 10

SWEEP_HEADER = ('h', 's', 'flavor', 'value', 'numerator', 'denominator', 'status')
BOUND_HEADER = ('flavor', 'h', 's', 'y', 'value', 'numerator', 'denominator', 'status')
COMPARE_HEADER = ('family', 'flavor', 'h', 's', 'value', 'status', 'tightness')
VERIFY_HEADER = ('name', 'passed', 'detail')


def format_number(value: Optional[float], precision: int = DEFAULT_PRECISION) -> str:
    """`precision` significant digits, trailing zeros kept; empty for None."""
    if value is None:
        return ''
    value = float(value)
    if not np.isfinite(value):
        return repr(value)
    return f"{value:#.{precision}g}"


def parse_number(text: str) -> Optional[float]:
    return None if text == '' else float(text)


def _write_rows(path, header: Sequence[str], rows: Iterable[Sequence[str]]):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    writer.writerows(rows)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(buffer.getvalue(), encoding='utf-8')


def _read_rows(path, header: Sequence[str]) -> List[Dict[str, str]]:
    with open(path, 'r', encoding='utf-8', newline='') as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != tuple(header):
            raise InvalidSpec(f"{path}: expected header {','.join(header)}, got {reader.fieldnames}")
        return list(reader)


# ---------------------------------------------------------------------------
# Sweep tables
# ---------------------------------------------------------------------------

def sweep_rows(table: SweepTable, precision: int = DEFAULT_PRECISION) -> List[List[str]]:
    return [
        [
            format_number(r.h, precision),
            format_number(r.s, precision),
            r.flavor,
            format_number(r.value, precision),
            format_number(r.numerator, precision),
            format_number(r.denominator, precision),
            r.status,
        ]
        for r in table.rows
    ]


def write_sweep_csv(table: SweepTable, path, precision: int = DEFAULT_PRECISION):
    _write_rows(path, SWEEP_HEADER, sweep_rows(table, precision))


def read_sweep_csv(path) -> List[SweepRow]:
    return [
        SweepRow(
            h=float(row['h']),
            s=float(row['s']),
            flavor=row['flavor'],
            value=parse_number(row['value']),
            numerator=parse_number(row['numerator']),
            denominator=parse_number(row['denominator']),
            status=row['status'],
        )
        for row in _read_rows(path, SWEEP_HEADER)
    ]


# ---------------------------------------------------------------------------
# Bound results
# ---------------------------------------------------------------------------

def bound_row(result: BoundResult, precision: int = DEFAULT_PRECISION) -> List[str]:
    meta = result.meta
    return [
        result.flavor,
        format_number(meta.get('h'), precision),
        format_number(meta.get('s'), precision),
        format_number(meta.get('y'), precision),
        format_number(result.value, precision),
        format_number(result.numerator, precision),
        format_number(result.denominator, precision),
        result.status,
    ]


def write_bound_csv(results: Sequence[BoundResult], path, precision: int = DEFAULT_PRECISION):
    _write_rows(path, BOUND_HEADER, [bound_row(r, precision) for r in results])


def read_bound_csv(path) -> List[BoundResult]:
    results = []
    for row in _read_rows(path, BOUND_HEADER):
        meta = {k: float(row[k]) for k in ('h', 's', 'y') if row[k] != ''}
        results.append(BoundResult(
            flavor=row['flavor'],
            status=row['status'],
            value=parse_number(row['value']),
            numerator=parse_number(row['numerator']),
            denominator=parse_number(row['denominator']),
            meta=meta,
        ))
    return results


def format_bound(result: BoundResult, precision: int = DEFAULT_PRECISION) -> str:
    lines = [f"flavor:      {result.flavor}", f"status:      {result.status}"]
    for key in ('h', 's', 'y'):
        if key in result.meta:
            lines.append(f"{key + ':':<13}{format_number(result.meta[key], precision)}")
    lines.append(f"value:       {format_number(result.value, precision) or 'n/a'}")
    lines.append(f"numerator:   {format_number(result.numerator, precision) or 'n/a'}")
    lines.append(f"denominator: {format_number(result.denominator, precision) or 'n/a'}")
    lines.extend(f"note:        {note}" for note in result.notes)
    return '\n'.join(lines)


# ---------------------------------------------------------------------------
# Matrices
# ---------------------------------------------------------------------------

def write_matrix_csv(matrix, path, precision: int = DEFAULT_PRECISION):
    """Header `q,r`, then the dimensions, then the rows."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    rows = [[str(matrix.shape[0]), str(matrix.shape[1])]]
    rows.extend([format_number(v, precision) for v in line] for line in matrix)
    _write_rows(path, ('q', 'r'), rows)


def read_matrix_csv(path) -> np.ndarray:
    with open(path, 'r', encoding='utf-8', newline='') as f:
        lines = list(csv.reader(f))
    if not lines or lines[0] != ['q', 'r']:
        raise InvalidSpec(f"{path}: not a matrix file")
    q, r = int(lines[1][0]), int(lines[1][1])
    matrix = np.array([[float(v) for v in line] for line in lines[2:]], dtype=float)
    if matrix.shape != (q, r):
        raise InvalidSpec(f"{path}: declared {q}x{r}, found {matrix.shape}")
    return matrix


# ---------------------------------------------------------------------------
# Generic tables
# ---------------------------------------------------------------------------

def write_table_csv(header: Sequence[str], rows: Sequence[Sequence[str]], path):
    _write_rows(path, header, rows)


def format_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(c)) for c in column) for column in zip(header, *rows)]
    lines = ['  '.join(str(c).ljust(w) for c, w in zip(header, widths)).rstrip()]
    lines.append('  '.join('-' * w for w in widths))
    lines.extend('  '.join(str(c).ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows)
    return '\n'.join(lines)

"""
Excel report generation using openpyxl.
Generates a workbook with 2 sheets:
  1. Summary
  2. Compare table (bound families at their optimized (h, s)) or sweep table
"""
from typing import List, Optional, Sequence

from openpyxl import Workbook
from openpyxl.styles import Alignment, Border, Font, PatternFill, Side
from openpyxl.utils import get_column_letter

from .optimize import SweepTable
from .report import COMPARE_HEADER, SWEEP_HEADER, parse_number

PRIMARY_COLOR = "1F4E79"


def create_compare_workbook(rows: Sequence[Sequence[str]], model_name: str, output_path: str):
    """Workbook with one row per bound family plus the exact risk and asymptotic rows."""
    wb = Workbook()
    _write_summary_sheet(wb, model_name, "compare", [
        ("Families", str(sum(1 for r in rows if r[0] in ('ww', 'cond')))),
        ("Exact risk", rows[-1][4]),
    ])
    _write_table_sheet(wb, "Compare", COMPARE_HEADER, rows, numeric_cols={3, 4, 5, 7}, tightness_col=7)
    wb.save(output_path)


def create_sweep_workbook(table: SweepTable, model_name: str, output_path: str):
    """Workbook with the sweep grid; values are written as numbers."""
    wb = Workbook()
    ok = table.ok_rows()
    _write_summary_sheet(wb, model_name, "sweep", [
        ("Rows", str(len(table.rows))),
        ("Ok rows", str(len(ok))),
        ("Best value", "" if table.best_value() is None else repr(table.best_value())),
        ("Model digest", table.model_digest),
        ("Integration digest", table.cfg_digest),
    ])
    rows = [[r.h, r.s, r.flavor, r.value, r.numerator, r.denominator, r.status] for r in table.rows]
    _write_table_sheet(wb, "Sweep", SWEEP_HEADER, rows, numeric_cols={1, 2, 4, 5, 6})
    wb.save(output_path)


def _get_styles():
    """Create reusable styles."""
    return {
        'header_fill': PatternFill(start_color=PRIMARY_COLOR, fill_type="solid"),
        'header_font': Font(color="FFFFFF", bold=True, size=11, name="Arial"),
        'title_font': Font(color=PRIMARY_COLOR, bold=True, size=16, name="Arial"),
        'label_font': Font(color="666666", size=11, name="Arial"),
        'value_font': Font(color="1A1A1A", bold=True, size=11, name="Arial"),
        'data_font': Font(size=10, name="Arial"),
        'ok_font': Font(color="2E7D32", size=10, name="Arial", bold=True),
        'bad_font': Font(color="C62828", size=10, name="Arial", bold=True),
        'na_font': Font(color="9E9E9E", size=10, name="Arial", italic=True),
        'thin_border': Border(
            left=Side(style='thin', color='DDDDDD'),
            right=Side(style='thin', color='DDDDDD'),
            top=Side(style='thin', color='DDDDDD'),
            bottom=Side(style='thin', color='DDDDDD'),
        ),
    }


def _write_summary_sheet(wb: Workbook, model_name: str, kind: str, items: List[tuple]):
    """Sheet 1: Summary."""
    ws = wb.active
    ws.title = "Summary"
    styles = _get_styles()

    ws.column_dimensions['A'].width = 5
    ws.column_dimensions['B'].width = 25
    ws.column_dimensions['C'].width = 40

    ws.merge_cells('B2:C2')
    ws['B2'].value = f"Bayes-risk bounds: {kind}"
    ws['B2'].font = styles['title_font']

    row = 4
    for label, value in [("Model", model_name)] + items:
        ws.cell(row=row, column=2, value=label).font = styles['label_font']
        ws.cell(row=row, column=3, value=value).font = styles['value_font']
        row += 1


def _cell_value(value, numeric: bool):
    if not numeric:
        return value
    if isinstance(value, str):
        return parse_number(value)
    return value


def _write_table_sheet(wb: Workbook, title: str, headers: Sequence[str], rows: Sequence[Sequence],
                       numeric_cols: set, tightness_col: Optional[int] = None):
    """Sheet 2: data table with a status column colored by outcome."""
    ws = wb.create_sheet(title)
    styles = _get_styles()
    status_col = list(headers).index('status') + 1

    for col, header in enumerate(headers, 1):
        cell = ws.cell(row=1, column=col, value=header)
        cell.fill = styles['header_fill']
        cell.font = styles['header_font']
        cell.alignment = Alignment(horizontal='center', vertical='center')
        cell.border = styles['thin_border']
        ws.column_dimensions[get_column_letter(col)].width = 18
    ws.row_dimensions[1].height = 24

    for i, values in enumerate(rows):
        row = i + 2
        for col, raw in enumerate(values, 1):
            value = _cell_value(raw, col in numeric_cols)
            cell = ws.cell(row=row, column=col, value=value)
            cell.font = styles['data_font']
            cell.border = styles['thin_border']
            if value is None:
                cell.value = "N/A"
                cell.font = styles['na_font']
                cell.alignment = Alignment(horizontal='center')
            elif col in numeric_cols:
                cell.number_format = '0.0000000000'
                cell.alignment = Alignment(horizontal='right')
            else:
                cell.alignment = Alignment(horizontal='center')

        status = ws.cell(row=row, column=status_col)
        status.font = styles['ok_font'] if status.value == 'ok' else styles['bad_font']

        if tightness_col is not None:
            tight = ws.cell(row=row, column=tightness_col)
            if isinstance(tight.value, float) and tight.value > 1.0:
                tight.font = styles['bad_font']

    ws.freeze_panes = 'A2'
    ws.auto_filter.ref = f"A1:{get_column_letter(len(headers))}{len(rows) + 1}"

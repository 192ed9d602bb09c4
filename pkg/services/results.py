# -*- coding: utf-8 -*-
"""
Results - per-stream JSON records, the plotting table and the Excel export
"""

import json
import logging
from io import BytesIO
from pathlib import Path

import numpy as np
import openpyxl
from openpyxl.styles import Font
from openpyxl.utils import get_column_letter

logger = logging.getLogger(__name__)

TABLE_HEADER = ('stream', 'accuracy', 'forgetting')


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    return value


def dumps_record(record):
    return json.dumps(_jsonable(record), sort_keys=True)


def table_rows(overall_accuracy, forgetting):
    """(stream, accuracy, forgetting or None) per stream"""
    return [(t, float(acc), None if f is None else float(f))
            for t, (acc, f) in enumerate(zip(overall_accuracy, forgetting), start=1)]


def format_table(rows):
    """CSV text of the table; six decimals, empty forgetting for stream 1"""
    lines = [','.join(TABLE_HEADER)]
    for stream, accuracy, forgetting in rows:
        lines.append(f"{stream},{accuracy:.6f},{'' if forgetting is None else f'{forgetting:.6f}'}")
    return '\n'.join(lines) + '\n'


def build_workbook(rows, accuracy_matrix):
    """Workbook with the per-stream table and the lower-triangular accuracy matrix"""
    wb = openpyxl.Workbook()
    ws = wb.active
    ws.title = "streams"
    _write_sheet(ws, TABLE_HEADER, [[s, a, '' if f is None else f] for s, a, f in rows])

    matrix = wb.create_sheet("accuracy_matrix")
    width = len(accuracy_matrix)
    header = ['after stream'] + [f"task {j}" for j in range(1, width + 1)]
    body = [[t] + list(row) + [''] * (width - len(row))
            for t, row in enumerate(accuracy_matrix, start=1)]
    _write_sheet(matrix, header, body)
    return wb


def _write_sheet(ws, header, body):
    for col, title in enumerate(header, 1):
        cell = ws.cell(row=1, column=col, value=title)
        cell.font = Font(bold=True)
        ws.column_dimensions[get_column_letter(col)].width = 15
    for r, values in enumerate(body, 2):
        for col, value in enumerate(values, 1):
            ws.cell(row=r, column=col, value=value)


def workbook_bytes(rows, accuracy_matrix):
    output = BytesIO()
    build_workbook(rows, accuracy_matrix).save(output)
    output.seek(0)
    return output


class ResultsWriter:
    """Writes one run's result files into `out_dir`"""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.streams_path = self.out_dir / 'streams.jsonl'
        self.table_path = self.out_dir / 'table.csv'
        self.workbook_path = self.out_dir / 'results.xlsx'
        self.streams_path.write_text('', encoding='utf-8')

    def write_config(self, config):
        config.to_file(self.out_dir / 'config.txt')

    def on_stream(self, record, metrics):
        """Harness callback: append the stream's record"""
        with self.streams_path.open('a', encoding='utf-8') as handle:
            handle.write(dumps_record(record) + '\n')

    def finish(self, metrics, summary):
        """streams.jsonl in full (resumed runs included), table.csv and results.xlsx"""
        lines = [dumps_record(record) for record in metrics.records]
        lines.append(dumps_record({'summary': summary}))
        self.streams_path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
        rows = table_rows(metrics.overall_accuracy, summary['forgetting'])
        self.table_path.write_text(format_table(rows), encoding='utf-8')
        build_workbook(rows, metrics.accuracy_matrix).save(self.workbook_path)
        logger.info("results written to %s", self.out_dir)
        return rows

    def write_json(self, name, payload):
        """Experiment-level JSON output (ablation, sweeps, joint)"""
        path = self.out_dir / name
        path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + '\n',
                        encoding='utf-8')
        return path

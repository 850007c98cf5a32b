"""
Escrita de relatórios: JSON-lines por época, resumo JSON, CSV e tabela de console
"""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from gloss.training.trainer import TrainReport
from gloss.utils.logging_helper import to_jsonable

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class ReportFormatter:
    """Formatador dos artefatos de saída de treino e experimentos"""

    def __init__(self, float_digits: int = 4):
        self.float_digits = float_digits

    def write_epochs_jsonl(self, report: TrainReport, path: PathLike) -> Path:
        """Um registro JSON por época"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            for record in report.epochs:
                f.write(json.dumps(to_jsonable(record.to_dict()), ensure_ascii=False) + '\n')
        return path

    def write_json(self, data: Dict[str, Any], path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(to_jsonable(data), f, ensure_ascii=False, indent=2)
        return path

    def write_report(self, report: TrainReport, out_dir: PathLike, prefix: str = '') -> Dict[str, Path]:
        """epochs.jsonl + summary.json no diretório de saída"""
        out_dir = Path(out_dir)
        return {
            'epochs': self.write_epochs_jsonl(report, out_dir / f'{prefix}epochs.jsonl'),
            'summary': self.write_json(report.summary(), out_dir / f'{prefix}summary.json'),
        }

    def write_csv(self, rows: Sequence[Dict[str, Any]], path: PathLike,
                  columns: Optional[List[str]] = None) -> Path:
        """CSV com cabeçalho; colunas na ordem de primeira aparição se não informadas"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        columns = columns or self._columns(rows)
        with open(path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.DictWriter(f, fieldnames=columns, extrasaction='ignore')
            writer.writeheader()
            for row in rows:
                writer.writerow({k: self._csv_value(row.get(k)) for k in columns})
        return path

    def write_matrix(self, matrix: np.ndarray, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(path, np.atleast_2d(matrix), delimiter=',', fmt='%.17g')
        return path

    def format_table(self, rows: Sequence[Dict[str, Any]], columns: Optional[List[str]] = None) -> str:
        """Tabela de texto alinhada para o console"""
        if not rows:
            return '(vazio)'
        columns = columns or self._columns(rows)
        cells = [[self._cell(row.get(c)) for c in columns] for row in rows]
        widths = [max(len(c), *(len(r[i]) for r in cells)) for i, c in enumerate(columns)]
        lines = [
            '  '.join(c.ljust(w) for c, w in zip(columns, widths)),
            '  '.join('-' * w for w in widths),
        ]
        lines.extend('  '.join(v.ljust(w) for v, w in zip(r, widths)) for r in cells)
        return '\n'.join(lines)

    @staticmethod
    def _columns(rows: Sequence[Dict[str, Any]]) -> List[str]:
        columns: List[str] = []
        for row in rows:
            columns.extend(k for k in row if k not in columns)
        return columns

    def _cell(self, value: Any) -> str:
        if value is None:
            return '-'
        if isinstance(value, (float, np.floating)):
            return f"{float(value):.{self.float_digits}f}"
        return str(value)

    @staticmethod
    def _csv_value(value: Any) -> Any:
        if value is None:
            return ''
        if isinstance(value, (np.floating, np.integer)):
            return value.item()
        if isinstance(value, (list, tuple)):
            return ';'.join(str(v) for v in value)
        return value

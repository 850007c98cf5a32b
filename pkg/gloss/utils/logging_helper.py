"""
Helper para logging detalhado de execuções
"""

import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np


def to_jsonable(value: Any) -> Any:
    """Converte tipos numpy (e aninhados) para tipos JSON nativos"""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, Path):
        return str(value)
    return value


class RunLogger:
    """Logger para uma execução de treinamento ou experimento"""

    def __init__(self, run_id: str, logger_name: str = 'gloss.run'):
        self.run_id = run_id
        self.records: List[Dict[str, Any]] = []
        self._logger = logging.getLogger(logger_name)

    def log(self, level: str, step: str, message: str, details: Optional[Dict[str, Any]] = None):
        """
        Adiciona um log para a execução

        Args:
            level: INFO, WARNING, ERROR
            step: data, train, epoch, head, test, sweep, compare, export
            message: Mensagem do log
            details: Detalhes adicionais em formato dict
        """
        try:
            level = level.upper()
            self.records.append({
                'timestamp': datetime.now().isoformat(timespec='milliseconds'),
                'run_id': self.run_id,
                'level': level,
                'step': step,
                'message': message,
                'details': to_jsonable(details) if details else None,
            })
            self._logger.log(getattr(logging, level, logging.INFO), f"[{self.run_id}] {step}: {message}")
        except Exception as e:
            # erros de logging não interrompem a execução
            logging.getLogger(__name__).error(f"Erro ao registrar log: {e}")

    def info(self, step: str, message: str, details: Optional[Dict[str, Any]] = None):
        self.log('INFO', step, message, details)

    def warning(self, step: str, message: str, details: Optional[Dict[str, Any]] = None):
        self.log('WARNING', step, message, details)

    def error(self, step: str, message: str, details: Optional[Dict[str, Any]] = None):
        self.log('ERROR', step, message, details)

    def step_start(self, step: str, message: str):
        """Marca o início de uma etapa"""
        self.info(step, f"🚀 Iniciando: {message}")

    def step_progress(self, step: str, message: str, progress: Optional[Dict[str, Any]] = None):
        self.info(step, f"📊 {message}", progress)

    def step_complete(self, step: str, message: str, stats: Optional[Dict[str, Any]] = None):
        """Marca a conclusão de uma etapa"""
        self.info(step, f"✅ Concluído: {message}", stats)

    def step_error(self, step: str, message: str, error: Exception):
        details = {
            'error_type': type(error).__name__,
            'error_message': str(error),
        }
        self.error(step, f"❌ Erro: {message}", details)

    def flush(self, path: Union[str, Path]) -> Optional[Path]:
        """Acrescenta os registros pendentes a um arquivo JSON-lines"""
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, 'a', encoding='utf-8') as f:
                for record in self.records:
                    f.write(json.dumps(record, ensure_ascii=False) + '\n')
            self.records.clear()
            return path
        except OSError as e:
            logging.getLogger(__name__).error(f"Erro ao salvar log em {path}: {e}")
            return None

"""
Exceções do pacote G-Loss
"""

from typing import Optional


class GLossError(Exception):
    """Erro base do pacote"""


class ValidationError(GLossError, ValueError):
    """Entrada fora do domínio permitido"""


class DatasetParseError(GLossError, ValueError):
    """Arquivo de dataset malformado"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"linha {line}: {message}"
        super().__init__(message)


class ShapeError(GLossError, ValueError):
    """Formas incompatíveis em uma operação do tape"""


class TapeError(GLossError):
    """Uso inválido do tape (backward sem forward, raiz não escalar...)"""


class GraphError(GLossError):
    """Grafo degenerado (grau nulo, mediana nula...)"""


class SingularPropagationError(GLossError):
    """Sistema (I - T_uu) numericamente singular"""

    def __init__(self, message: str, rho: Optional[float] = None, rcond: Optional[float] = None):
        self.rho = rho
        self.rcond = rcond
        details = []
        if rho is not None:
            details.append(f"rho={rho:.6g}")
        if rcond is not None:
            details.append(f"rcond={rcond:.3g}")
        if details:
            message = f"{message} ({', '.join(details)})"
        super().__init__(message)


class ConvergenceError(GLossError):
    """Série de Neumann não convergiu dentro de max_iter"""

    def __init__(self, message: str, residual: float):
        self.residual = residual
        super().__init__(f"{message} (resíduo={residual:.3g})")


class ConfigError(GLossError, ValueError):
    """Chave ou valor de configuração inválido"""

    def __init__(self, message: str, key: Optional[str] = None):
        self.key = key
        super().__init__(message)


class TrainingError(GLossError):
    """Época sem nenhum batch válido"""


class TestSetAccessError(GLossError):
    """O conjunto de teste só pode ser avaliado uma vez por execução"""

    __test__ = False

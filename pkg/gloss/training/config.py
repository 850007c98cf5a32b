"""
Configuração de treinamento (TrainConfig) com validação de faixas
"""

import logging
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, List, Mapping, Optional, Tuple

from gloss.exceptions import ConfigError
from gloss.processors.encoder import ARCHITECTURES, OPTIMIZERS
from gloss.processors.graph import SIGMA_MODES
from gloss.processors.losses import LossKind

logger = logging.getLogger(__name__)

MODES = ('integrated', 'standalone')

# faixas recomendadas: fora delas apenas aviso
GAMMA_RANGE = (0.1, 0.9)
SIGMA_RANGE = (0.01, 10.0)
LAMBDA_RANGE = (0.1, 0.9)

# chave no arquivo -> atributo (lambda é palavra reservada)
KEY_ALIASES = {'lambda': 'lam'}

TRUE_VALUES = ('1', 'true', 'yes', 'on', 'sim')
FALSE_VALUES = ('0', 'false', 'no', 'off', 'nao', 'não')


def _parse_bool(key: str, value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in TRUE_VALUES:
        return True
    if text in FALSE_VALUES:
        return False
    raise ConfigError(f"valor booleano inválido para '{key}': {value}", key)


def _parse_seeds(key: str, value: Any) -> Tuple[int, ...]:
    if isinstance(value, (list, tuple)):
        items = list(value)
    else:
        items = [s for s in str(value).replace(';', ',').split(',') if s.strip()]
    try:
        seeds = tuple(int(s) for s in items)
    except (TypeError, ValueError):
        raise ConfigError(f"lista de sementes inválida para '{key}': {value}", key)
    if not seeds:
        raise ConfigError(f"'{key}' precisa de ao menos uma semente", key)
    return seeds


@dataclass
class TrainConfig:
    """Hiperparâmetros de uma execução"""
    mode: str = 'integrated'                # integrated | standalone
    loss: str = 'gloss_o'                   # gloss_o | gloss_sqrt | ce | scl | triplet | cosine
    lam: float = 0.8                        # peso da perda de grafo na composta
    lambda_baseline: float = -1.0           # peso SCL/triplet/cosine + CE (-1 = usa lam)
    gamma: float = 0.6                      # fração de rótulos visíveis
    sigma_mode: str = 'fixed'               # fixed | sqrt (gloss_sqrt força sqrt)
    sigma: float = 0.5
    sigma_multiplier: float = 1.0
    eta: float = 1e-3
    optimizer: str = 'adam'
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 10
    seed: int = 0
    tau: float = 0.1
    margin: float = 0.5
    normalize_embeddings: bool = True
    architecture: str = 'linear'
    embedding_dim: int = 32
    hidden_dim: int = 64
    stratify_split: bool = True
    shuffle: bool = True
    head_epochs: int = 100
    head_eta: float = 1e-2
    rho_iters: int = 100
    seeds: Tuple[int, ...] = field(default=(0, 1, 2))

    @classmethod
    def keys(cls) -> List[str]:
        inverse = {v: k for k, v in KEY_ALIASES.items()}
        return [inverse.get(f.name, f.name) for f in fields(cls)]

    @classmethod
    def from_dict(cls, values: Mapping[str, Any], base: Optional['TrainConfig'] = None) -> 'TrainConfig':
        """
        Constrói a partir de pares chave/valor (strings aceitas)

        Raises:
            ConfigError: chave desconhecida ou valor não conversível
        """
        base = base or cls()
        known = {f.name for f in fields(cls)}
        updates = {}
        for raw_key, value in values.items():
            key = raw_key.strip()
            attr = KEY_ALIASES.get(key, key)
            if attr not in known:
                raise ConfigError(f"chave de configuração desconhecida: '{key}'", key)
            updates[attr] = cls._coerce(key, attr, value)
        return replace(base, **updates)

    @staticmethod
    def _coerce(key: str, attr: str, value: Any) -> Any:
        if attr == 'seeds':
            return _parse_seeds(key, value)
        default = getattr(TrainConfig, attr, None)
        if isinstance(default, bool):
            return _parse_bool(key, value)
        try:
            if isinstance(default, int):
                return int(str(value).strip()) if not isinstance(value, int) else value
            if isinstance(default, float):
                return float(value)
        except ValueError:
            raise ConfigError(f"valor inválido para '{key}': {value}", key)
        return str(value).strip()

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['lambda'] = data.pop('lam')
        data['seeds'] = list(self.seeds)
        return data

    @property
    def loss_kind(self) -> LossKind:
        return LossKind(self.loss)

    @property
    def effective_sigma_mode(self) -> str:
        return 'sqrt' if self.loss == LossKind.GLOSS_SQRT.value else self.sigma_mode

    @property
    def effective_lambda_baseline(self) -> float:
        return self.lam if self.lambda_baseline < 0 else self.lambda_baseline

    @property
    def uses_graph(self) -> bool:
        """O caminho do grafo só roda se houver peso para a perda de grafo"""
        if not self.loss_kind.is_graph:
            return False
        return self.mode == 'standalone' or self.lam > 0.0

    def validate(self) -> Dict[str, Any]:
        """
        Valida limites rígidos (erros) e faixas recomendadas (avisos)

        Returns:
            {'valid': bool, 'warnings': [...], 'errors': [...], 'error_keys': [...]}
            (error_keys[i] é a chave de configuração de errors[i])
        """
        result = {'valid': True, 'warnings': [], 'errors': [], 'error_keys': []}
        warns = result['warnings']

        def fail(key: str, message: str):
            result['errors'].append(message)
            result['error_keys'].append(key)

        kind = self.loss_kind_or_none()
        graph_loss = kind is not None and kind.is_graph

        if self.mode not in MODES:
            fail('mode', f"mode inválido: {self.mode}")
        if kind is None:
            fail('loss', f"loss inválida: {self.loss}")
        elif self.mode == 'standalone' and self.loss == LossKind.CE.value:
            fail('loss', "modo standalone exige uma perda de representação (não 'ce')")
        if self.sigma_mode not in SIGMA_MODES:
            fail('sigma_mode', f"sigma_mode inválido: {self.sigma_mode}")
        if self.optimizer not in OPTIMIZERS:
            fail('optimizer', f"optimizer inválido: {self.optimizer}")
        if self.architecture not in ARCHITECTURES:
            fail('architecture', f"architecture inválida: {self.architecture}")

        if not 0.0 < self.gamma < 1.0:
            fail('gamma', f"gamma precisa estar em (0, 1), recebeu {self.gamma}")
        elif not GAMMA_RANGE[0] <= self.gamma <= GAMMA_RANGE[1]:
            warns.append(f"gamma={self.gamma} fora da faixa recomendada {GAMMA_RANGE}")
        if not 0.0 <= self.lam <= 1.0:
            fail('lambda', f"lambda precisa estar em [0, 1], recebeu {self.lam}")
        elif graph_loss and not LAMBDA_RANGE[0] <= self.lam <= LAMBDA_RANGE[1]:
            warns.append(f"lambda={self.lam} fora da faixa recomendada {LAMBDA_RANGE}")
        if self.lambda_baseline > 1.0:
            fail('lambda_baseline', f"lambda_baseline precisa estar em [0, 1], recebeu {self.lambda_baseline}")
        if self.sigma <= 0:
            fail('sigma', f"sigma precisa ser positivo, recebeu {self.sigma}")
        elif not SIGMA_RANGE[0] <= self.sigma <= SIGMA_RANGE[1]:
            warns.append(f"sigma={self.sigma} fora da faixa recomendada {SIGMA_RANGE}")
        if self.sigma_multiplier <= 0:
            fail('sigma_multiplier', f"sigma_multiplier precisa ser positivo, recebeu {self.sigma_multiplier}")

        if self.eta <= 0:
            fail('eta', f"eta precisa ser positivo, recebeu {self.eta}")
        if self.head_eta <= 0:
            fail('head_eta', f"head_eta precisa ser positivo, recebeu {self.head_eta}")
        if self.tau <= 0:
            fail('tau', f"tau precisa ser positivo, recebeu {self.tau}")
        if self.margin < 0:
            fail('margin', f"margin precisa ser >= 0, recebeu {self.margin}")
        if self.batch_size < 1:
            fail('batch_size', f"batch_size precisa ser >= 1, recebeu {self.batch_size}")
        elif graph_loss and self.batch_size < 4:
            fail('batch_size', f"perdas de grafo exigem batch_size >= 4, recebeu {self.batch_size}")
        for name in ('max_epochs', 'patience', 'embedding_dim', 'hidden_dim', 'head_epochs'):
            if getattr(self, name) < 1:
                fail(name, f"{name} precisa ser >= 1, recebeu {getattr(self, name)}")
        if self.rho_iters < 10:
            fail('rho_iters', f"rho_iters precisa ser >= 10, recebeu {self.rho_iters}")

        result['valid'] = not result['errors']
        return result

    def loss_kind_or_none(self) -> Optional[LossKind]:
        try:
            return LossKind(self.loss)
        except ValueError:
            return None

    def check(self) -> 'TrainConfig':
        """Levanta ConfigError no primeiro erro e emite os avisos"""
        result = self.validate()
        for message in result['warnings']:
            warnings.warn(message, stacklevel=2)
        if not result['valid']:
            raise ConfigError('; '.join(result['errors']), result['error_keys'][0])
        return self

"""
Carregamento de arquivos de configuração chave = valor
"""

import logging
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

from dotenv import dotenv_values

from gloss.exceptions import ConfigError
from gloss.training.config import TrainConfig

logger = logging.getLogger(__name__)

CONFIG_SUFFIX = '.cfg'


class ConfigLoader:
    """Classe para carregar configurações de treino de arquivos externos"""

    def __init__(self, configs_dir: Optional[Union[str, Path]] = None):
        """
        Inicializa o carregador de configurações

        Args:
            configs_dir: Diretório dos arquivos .cfg.
                        Se None, usa configs/ na raiz do projeto
        """
        if configs_dir is None:
            base_dir = Path(__file__).parent.parent.parent
            self.configs_dir = base_dir / "configs"
        else:
            self.configs_dir = Path(configs_dir)

        self._cache: Dict[Path, Dict[str, str]] = {}

    def get_available_configs(self) -> List[str]:
        """Nomes dos arquivos de configuração disponíveis"""
        if not self.configs_dir.exists():
            return []
        return sorted(p.stem for p in self.configs_dir.glob(f"*{CONFIG_SUFFIX}"))

    def resolve(self, name_or_path: Union[str, Path]) -> Path:
        path = Path(name_or_path)
        if path.exists():
            return path
        candidate = self.configs_dir / f"{name_or_path}{CONFIG_SUFFIX}"
        if candidate.exists():
            return candidate
        raise ConfigError(f"arquivo de configuração não encontrado: {name_or_path}")

    def load_values(self, name_or_path: Union[str, Path]) -> Dict[str, str]:
        """
        Lê os pares chave = valor de um arquivo

        Returns:
            Dicionário de strings (cópia do cache)
        """
        path = self.resolve(name_or_path)
        if path not in self._cache:
            values = dotenv_values(path)
            missing = [k for k, v in values.items() if v is None]
            if missing:
                raise ConfigError(f"chave sem valor em {path.name}: {missing[0]}", missing[0])
            self._cache[path] = {k: v for k, v in values.items()}
            logger.debug(f"Configuração carregada: {path}")
        return dict(self._cache[path])

    @staticmethod
    def parse_overrides(items: Optional[Sequence[str]]) -> Dict[str, str]:
        """Converte ['chave=valor', ...] (flag --set) em dicionário"""
        overrides = {}
        for item in items or []:
            key, sep, value = item.partition('=')
            key = key.strip()
            if not sep or not key:
                raise ConfigError(f"override inválido (esperado chave=valor): '{item}'", key or None)
            overrides[key] = value.strip()
        return overrides

    def load(self, name_or_path: Optional[Union[str, Path]] = None,
             overrides: Optional[Mapping[str, str]] = None,
             base: Optional[TrainConfig] = None) -> TrainConfig:
        """Arquivo (opcional) + overrides sobre a configuração base"""
        values: Dict[str, str] = {}
        if name_or_path:
            values.update(self.load_values(name_or_path))
        values.update(overrides or {})
        return TrainConfig.from_dict(values, base=base)

    def validate_config(self, values: Mapping[str, str]) -> Dict:
        """
        Valida pares chave/valor sem levantar exceção

        Returns:
            Dicionário com resultado da validação
        """
        validation_result = {'valid': True, 'warnings': [], 'errors': []}
        known = set(TrainConfig.keys())
        unknown = [k for k in values if k.strip() not in known]
        for key in unknown:
            validation_result['errors'].append(f"chave desconhecida: '{key}'")
        if unknown:
            validation_result['valid'] = False
            return validation_result

        try:
            config = TrainConfig.from_dict(values)
        except ConfigError as e:
            validation_result['valid'] = False
            validation_result['errors'].append(str(e))
            return validation_result

        checked = config.validate()
        validation_result['warnings'].extend(checked['warnings'])
        validation_result['errors'].extend(checked['errors'])
        validation_result['valid'] = checked['valid']
        return validation_result

    def reload_configs(self):
        """Limpa o cache"""
        self._cache.clear()

    def create_config_template(self, name: str, config: Optional[TrainConfig] = None) -> Path:
        """Escreve um arquivo .cfg com todos os valores de uma configuração"""
        config = config or TrainConfig()
        self.configs_dir.mkdir(parents=True, exist_ok=True)
        path = self.configs_dir / f"{name}{CONFIG_SUFFIX}"
        lines = [f"# configuração '{name}'"]
        for key, value in config.to_dict().items():
            if isinstance(value, list):
                value = ','.join(str(v) for v in value)
            elif isinstance(value, bool):
                value = str(value).lower()
            lines.append(f"{key} = {value}")
        path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
        self._cache.pop(path, None)
        return path

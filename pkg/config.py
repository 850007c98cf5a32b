import logging
import os

from dotenv import load_dotenv

# Carregar variáveis de ambiente
load_dotenv()


class Config:
    """Configurações base da aplicação"""

    # Saídas
    OUTPUT_FOLDER = os.environ.get('GLOSS_OUTPUT_FOLDER') or 'data/outputs'
    CONFIGS_FOLDER = os.environ.get('GLOSS_CONFIGS_FOLDER') or 'configs'

    # Logging
    LOG_LEVEL = os.environ.get('GLOSS_LOG_LEVEL', 'INFO').upper()
    LOG_FORMAT = os.environ.get('GLOSS_LOG_FORMAT') or '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    LOG_FILE = os.environ.get('GLOSS_LOG_FILE')  # opcional

    # Execução
    SEED = int(os.environ.get('GLOSS_SEED', 0))
    WORKERS = int(os.environ.get('GLOSS_WORKERS', 1))  # pontos da varredura em paralelo

    @classmethod
    def init_app(cls, output_dir: str = None):
        """Cria diretórios de saída e configura o logging"""
        os.makedirs(output_dir or cls.OUTPUT_FOLDER, exist_ok=True)

        handlers = [logging.StreamHandler()]
        if cls.LOG_FILE:
            handlers.append(logging.FileHandler(cls.LOG_FILE, encoding='utf-8'))
        logging.basicConfig(
            level=getattr(logging, cls.LOG_LEVEL, logging.INFO),
            format=cls.LOG_FORMAT,
            handlers=handlers,
            force=True,
        )


class DevelopmentConfig(Config):
    """Configurações para desenvolvimento"""
    LOG_LEVEL = os.environ.get('GLOSS_LOG_LEVEL', 'DEBUG').upper()


class ProductionConfig(Config):
    """Configurações para execuções longas (varreduras, comparações)"""
    LOG_LEVEL = os.environ.get('GLOSS_LOG_LEVEL', 'INFO').upper()
    WORKERS = int(os.environ.get('GLOSS_WORKERS', max(1, (os.cpu_count() or 2) // 2)))


class TestingConfig(Config):
    """Configurações para testes"""
    LOG_LEVEL = 'WARNING'
    OUTPUT_FOLDER = 'tests/outputs'
    WORKERS = 1


# Dicionário de configurações
config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': Config,
}

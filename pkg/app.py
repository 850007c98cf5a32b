#!/usr/bin/env python3
"""
Ponto de entrada da linha de comando

Uso: python app.py <comando> [opções]   (ver python app.py --help)
O ambiente é escolhido por GLOSS_ENV (development, production, testing).
"""

import os
import sys

from config import config
from gloss.cli import main

if __name__ == '__main__':
    sys.exit(main(settings=config[os.environ.get('GLOSS_ENV', 'default')]))

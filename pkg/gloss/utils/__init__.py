"""Utilitários: logging de execução e carregamento de configuração"""

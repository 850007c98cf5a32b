"""Configuração de treino, laço de treino e experimentos"""

"""Métricas e verificações numéricas"""

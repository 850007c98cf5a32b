"""Fita de diferenciação, grafo, propagação, perdas e encoder"""

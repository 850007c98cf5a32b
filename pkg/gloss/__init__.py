"""
G-Loss: perda guiada por grafo com propagação de rótulos diferenciável
"""

__version__ = '1.0.0'

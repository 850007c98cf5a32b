"""Escrita de relatórios"""

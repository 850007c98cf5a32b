"""Leitura e escrita de datasets"""

"""Relativistic bit commitment simulator and exact verification toolkit"""
__version__ = "0.1.0"

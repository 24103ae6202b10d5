"""
src/__init__.py
"""


from .app import main


__all__ = ["main"]

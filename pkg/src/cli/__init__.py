"""
Command line, experiment documents and artifact files.
"""

from .main import build_parser, main

__all__ = ["build_parser", "main"]

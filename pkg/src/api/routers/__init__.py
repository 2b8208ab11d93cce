"""
API routers for different endpoints.
"""

from . import health, toolkit

__all__ = ["health", "toolkit"]

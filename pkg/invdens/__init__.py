"""Invariant-density estimation for ergodic diffusions observed with noise."""

from invdens.core.config import settings

__version__ = settings.VERSION

__all__ = ["__version__"]

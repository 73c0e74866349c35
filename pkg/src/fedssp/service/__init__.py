"""HTTP service wrapping the experiment drivers."""

from .app import create_app

__all__ = ["create_app"]

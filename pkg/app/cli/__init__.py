"""Command line module initialization"""

from app.cli import dependencies

__all__ = ["dependencies"]

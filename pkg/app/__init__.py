"""Driver-specific IDM modeling from driving codes"""

__version__ = "0.1.0"

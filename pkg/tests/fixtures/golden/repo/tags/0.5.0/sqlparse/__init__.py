"""sqlparse - a non-validating SQL parser."""

from sqlparse.sql import parse

__version__ = "0.5.0"

__all__ = ["parse"]

"""sqlparse - a non-validating SQL parser."""

from sqlparse.sql import parse

__version__ = "0.4.4"

__all__ = ["parse"]

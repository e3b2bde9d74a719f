"""Automated CVE reproduction: resource gathering, environment rebuild,
PoC exploit generation, and flag-releasing verification."""

__version__ = "0.1.0"

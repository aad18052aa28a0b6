"""Data engine and evaluation toolkit for interleaved visual-reasoning datasets."""

__version__ = "0.1.0"

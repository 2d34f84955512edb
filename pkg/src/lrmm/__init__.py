"""Learned risk metric maps for kinodynamic vehicles among obstacles."""

__version__ = "0.1.0"

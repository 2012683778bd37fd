"""Weighted-constraint nuclear-norm matrix completion for haplotype reconstruction."""

__version__ = "0.1.0"

"""Covers of near-zero sets of polynomial subspaces and moment-based learners."""

__version__ = "0.1.0"

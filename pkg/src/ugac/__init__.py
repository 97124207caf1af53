"""Uncertainty-aware generalized adaptive cycle consistency for unpaired image translation."""

__version__ = "0.1.0"

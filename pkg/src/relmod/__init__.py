"""Relation Module and conditional-margin triplet loss for cross-domain face matching."""

__version__ = "0.1.0"

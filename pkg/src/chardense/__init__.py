"""Densely connected character-level features for Bi-LSTM(-CRF) sequence tagging."""

__version__ = "0.1.0"

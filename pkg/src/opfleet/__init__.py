"""Deterministic simulator for multi-operator multi-robot exploration under
range-limited, intermittent communication."""

__version__ = "0.1.0"

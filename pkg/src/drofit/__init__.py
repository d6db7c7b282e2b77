"""Streaming band-fused frequency-attention speech enhancement."""

__version__ = "0.1.0"

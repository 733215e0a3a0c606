"""Quantization dimensions, antichains and Lloyd codebooks for self-affine
measures on Bedford-McMullen carpets."""

__version__ = "0.3.0"

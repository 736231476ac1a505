"""Tensor-train toolbox for nearest-neighbor interaction systems."""
__version__ = "0.1.0"

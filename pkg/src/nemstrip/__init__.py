"""Thin-strip nematic flow solvers: anisotropic Q-tensor/Navier-Stokes system,
its hydrostatic limit, and tools comparing the two."""

__version__ = "0.1.0"

"""Pseudo-spectral laboratory for the mollified incompressible
Navier-Stokes equations on a periodic box emulating free space."""

__version__ = "0.1.0"

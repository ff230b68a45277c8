"""Desk-scale numerics for dilute Bose gases: scattering, GP/NLS fields, lattice many-body dynamics,
reduced density matrices, hierarchy checks and Duhamel graph combinatorics."""

__version__ = "0.1.0"

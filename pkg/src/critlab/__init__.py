"""Superradiant criticality in the quantum Rabi and Dicke models.

Exact diagonalization in truncated Fock spaces, imaginary-time correlators,
power-law scaling analysis and lattice Monte Carlo of the effective scalar-field
action, driven by the ``criticality-lab`` command.
"""
from __future__ import annotations

__version__ = "0.1.0"

"""Quantum emitters coupled to a two-dimensional square-lattice photonic bath.

Modules:
    bath: lattice, dispersion, momentum transforms, density of states.
    greens: lattice Green's functions and self-energies.
    spectral: resolvent analysis (rates, poles, residues, Fourier amplitudes).
    dynamics: exact single-excitation time evolution and emission maps.
    scenarios: experiment pipelines with comparison reports.
    cli: command-line entry point.
"""

__version__ = "0.1.0"

from .bath import LatticeSpec, KPoint, dispersion, dos, dos_exact
from .errors import (
    ConfigError,
    DivergenceError,
    LatticeQEError,
    NormDriftError,
    NumericalFailure,
    TailWindowError,
)

__all__ = [
    "__version__",
    "LatticeSpec",
    "KPoint",
    "dispersion",
    "dos",
    "dos_exact",
    "LatticeQEError",
    "ConfigError",
    "NumericalFailure",
    "DivergenceError",
    "NormDriftError",
    "TailWindowError",
]

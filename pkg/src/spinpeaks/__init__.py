"""Spin-polarization peaks of optically pumped 87Rb vapor in a zero-mean
dual-harmonic magnetic field, and the free-spin periodicity analysis that
predicts where the peaks sit."""
from .atom import AtomSpec, AtomSystem, build_atom_system
from .fields import DriveConfig, PumpConfig
from .liouville import RelaxationRates, SpinProblem, evolve_to_steady
from .observables import convolution_c1, convolution_c2

__version__ = "0.1.0"

__all__ = [
    "AtomSpec",
    "AtomSystem",
    "DriveConfig",
    "PumpConfig",
    "RelaxationRates",
    "SpinProblem",
    "build_atom_system",
    "convolution_c1",
    "convolution_c2",
    "evolve_to_steady",
]

"""Magnetic Weyl calculus: symbolic two-parameter product expansion, grid
oracles for the twisted product, and the semirelativistic Dirac application."""

from .symcore import PhaseSpace, normalize, phase_space
from .magnetics import MagneticField, VectorPotential, Triangle, transversal_gauge
from .expansion import expand_product, product_term_nk, precision_bookkeeping
from .dsl import parse_dsl, print_dsl

__all__ = [
    "PhaseSpace", "normalize", "phase_space", "MagneticField", "VectorPotential",
    "Triangle", "transversal_gauge", "expand_product", "product_term_nk",
    "precision_bookkeeping", "parse_dsl", "print_dsl",
]
__version__ = "0.1.0"

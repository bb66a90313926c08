"""Vector-spin l^p Grothendieck problem: finite-N solvers, Parisi-type
functionals and verification tools."""

__version__ = "0.1.0"

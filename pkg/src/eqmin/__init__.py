"""Numerical equivariant minimal surfaces in hyperbolic 3- and 4-space.

Builds triangulated closed hyperbolic surfaces, discrete holomorphic
sections of K^m L^n, solves the Gauss and Gauss+Ricci equations for the
induced conformal factor(s), checks the invariant identities, and
classifies the resulting Higgs-bundle data.
"""

__version__ = "0.1.0"

from .errors import EqminError

__all__ = ["EqminError", "__version__"]

"""Large-N saddle point, matrix-tree and Monte Carlo tools for lattice
hyperbolic sigma-models with target space H_N.

Submodules
----------
lattice       periodic hypercubic lattices, Laplacian, momentum spectrum
latmat        factorizations, hatted matrices and exact integer determinants
dual_action   the dual action S[a, H], its derivatives and the map chi
gap_solver    gap equation, saddle certificates, descents and asymptotics
matrix_tree   spanning trees, convexity checks and the cycle bound
mc_sampler    Metropolis sampling of the theta field
cli           command-line front end
"""
from ._kernels import BACKEND
from .dual_action import ModelParams
from .lattice import Lattice, build_lattice

__version__ = "0.1.0"

__all__ = ["BACKEND", "Lattice", "ModelParams", "build_lattice", "__version__"]

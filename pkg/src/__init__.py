"""
fshape-match - signal matching on fixed triangulated surfaces.

This package provides discrete fshape energies (L2, H1 and BV penalties plus
a varifold attachment term), their minimization at fixed geometry and the
refinement experiments that compare discrete minima with continuous ones.
"""

__version__ = "1.0.0"
__author__ = "fshape-match developers"

from .controllers import ExperimentController, MatchingController, MatchProblem
from .utils import EnergyModel, KernelParams, SignalP0, SignalP1, TriangleMesh, load_fshape, save_fshape

__all__ = [
    'MatchProblem',
    'MatchingController',
    'ExperimentController',
    'EnergyModel',
    'KernelParams',
    'SignalP0',
    'SignalP1',
    'TriangleMesh',
    'load_fshape',
    'save_fshape',
]

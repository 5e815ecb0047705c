"""
Controllers package for energy minimization and refinement experiments.
"""

from .matching_controller import (DescentTrace, EnergyBreakdown, MatchingController,
                                  MatchProblem)
from .experiment_controller import ExperimentController, GammaResult, loglog_slope

__all__ = [
    'MatchProblem',
    'MatchingController',
    'EnergyBreakdown',
    'DescentTrace',
    'ExperimentController',
    'GammaResult',
    'loglog_slope',
]

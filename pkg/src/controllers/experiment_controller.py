"""
Experiment Controller - refinement experiments built on the matching
controller.

Key Features:
- gamma_experiment: minimize the discrete energy on a refinement family,
  lift every minimizer to the surface and tabulate energy and L1 gaps
- refinement diagnostics: area convergence, angle ratio and varifold
  approximation rate of a RefinementFamily
- oscillation_report: masked total variation and sup norm of an optimum
- synthetic testbeds (half-overlapping squares, displaced sphere caps)
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..utils.energy_model import DescentConfig, EnergyModel
from ..utils.errors import BadParams, LengthMismatch
from ..utils.fem import Signal, SignalP0, SignalP1, total_variation
from ..utils.mesh import TriangleMesh, grid_mesh, total_area
from ..utils.oracle import continuous_energy_oracle, continuous_varifold
from ..utils.sampling import (RefinementFamily, admissibility_report, discretize_signal,
                              lift_signal)
from ..utils.surface import AnalyticSurface, SignalFunction, SphereCap
from ..utils.topology import jump_total_variation
from ..utils.varifold import DiscreteVarifold, KernelParams, from_fshape, squared_distance
from .matching_controller import DescentTrace, MatchingController, MatchProblem

logger = logging.getLogger(__name__)

MIN_GAMMA_LEVELS = 4
GAMMA_HEADER = ["h", "min_energy", "energy_gap", "l1_gap", "oracle_gap"]


@dataclass
class GammaLevel:
    h: float
    n_triangles: int
    min_energy: float
    energy_gap: float
    l1_gap: float
    oracle_gap: float
    iterations: int
    reason: str
    missed_measure: float = 0.0


@dataclass
class GammaResult:
    levels: List[GammaLevel] = field(default_factory=list)
    traces: List[DescentTrace] = field(default_factory=list)

    @property
    def header(self) -> List[str]:
        return list(GAMMA_HEADER)

    def rows(self) -> List[list]:
        return [[lv.h, lv.min_energy, lv.energy_gap, lv.l1_gap, lv.oracle_gap] for lv in self.levels]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(lv, name) for lv in self.levels], dtype=float)


@dataclass
class OscillationReport:
    total_variation: float
    sup_norm: float
    n_selected: int


@dataclass
class Testbed:
    """Source mesh, target fshape and the mask of source triangles outside the overlap."""
    source: TriangleMesh
    target: TriangleMesh
    target_signal: Signal
    mask: np.ndarray


def loglog_slope(h: Sequence[float], values: Sequence[float]) -> float:
    """Least-squares slope of log(values) against log(h); nonpositive values are skipped."""
    h = np.asarray(h, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = (h > 0) & (values > 0) & np.isfinite(values)
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(h[keep]), np.log(values[keep]), 1)[0])


def half_overlap_testbed(n: int = 8, cells: int = 4, shift: float = 0.5) -> Testbed:
    """
    Unit square source and a copy translated by `shift` along x carrying a
    checkerboard P0 signal (+1 / -1 on a cells x cells board). The mask
    selects source triangles with no target underneath.
    """
    source = grid_mesh(n, n)
    target = grid_mesh(n, n, origin=(shift, 0.0))
    local = target.barycenters[:, :2] - np.array([shift, 0.0])
    board = np.floor(local * cells).astype(int).sum(axis=1) % 2
    signal = SignalP0(target, np.where(board == 0, 1.0, -1.0))
    mask = source.barycenters[:, 0] < shift
    return Testbed(source, target, signal, mask)


def displaced_cap_testbed(radius: float = 1.0, theta_max: float = np.pi / 3,
                          offset: Sequence[float] = (0.1, 0.0, 0.0)):
    """A sphere cap and the same cap rigidly translated by `offset`."""
    return SphereCap(radius, theta_max), SphereCap(radius, theta_max, offset=offset)


class ExperimentController:
    """Runs refinement experiments with one descent configuration."""

    def __init__(self, descent: Optional[DescentConfig] = None, workers: Optional[int] = None,
                 quadrature_order: int = 4) -> None:
        self.descent = descent or DescentConfig()
        self.workers = workers
        self.quadrature_order = quadrature_order
        self.matching = MatchingController(self.descent)

    # ===================================================================
    # SECTION 1: CONVERGENCE OF MINIMA
    # ===================================================================

    def target_varifold(self, surface: AnalyticSurface, g: SignalFunction,
                        kernel: KernelParams) -> DiscreteVarifold:
        """Quadrature varifold of the continuous target fshape."""
        return continuous_varifold(surface, g, kernel, order=max(self.quadrature_order, 8))

    def gamma_experiment(self, surface: AnalyticSurface, target_surface: AnalyticSurface,
                         f0: SignalFunction, g: SignalFunction, model: EnergyModel,
                         family: RefinementFamily) -> GammaResult:
        """
        Minimize E_h on every level of `family` starting from the discretized f0.

        Per level: min_energy is the final accepted energy; energy_gap is
        |min E_h - min E_previous|; l1_gap is the L1 distance on the surface
        between this lifted minimizer and the previous one; oracle_gap is
        |min E_h - E(lifted minimizer)| with E the continuous energy. Gaps of
        the first level are NaN.

        Raises:
            BadParams: fewer than four levels
        """
        if len(family.levels) < MIN_GAMMA_LEVELS:
            raise BadParams(f"a gamma experiment needs at least {MIN_GAMMA_LEVELS} levels, "
                            f"got {len(family.levels)}")
        target = self.target_varifold(target_surface, g, model.kernel)
        u, v, w = surface.parameter_quadrature(self.quadrature_order, model.kernel.sigma_e / 2.0)
        weights = w * surface.area_element(u, v)

        result = GammaResult()
        previous_energy: Optional[float] = None
        previous_lift: Optional[np.ndarray] = None
        previous_hit: Optional[np.ndarray] = None
        for h, mesh in family.levels:
            initial = discretize_signal(surface, f0, mesh, model.element)
            problem = MatchProblem(mesh, model, target, initial, self.workers)
            trace = self.matching.minimize(problem, self.descent)
            min_energy = trace.final_energy

            lifted = lift_signal(trace.signal, mesh, surface, u, v, weights)
            oracle = continuous_energy_oracle(surface, self._lifted_function(trace.signal, mesh, surface),
                                              target, model, order=self.quadrature_order, adaptive=False)
            if previous_lift is None:
                energy_gap = l1_gap = float("nan")
            else:
                both = lifted.hit & previous_hit
                energy_gap = abs(min_energy - previous_energy)
                l1_gap = float(np.sum(weights[both] * np.abs(lifted.values[both] - previous_lift[both])))
            level = GammaLevel(h=float(h), n_triangles=mesh.n_triangles, min_energy=min_energy,
                               energy_gap=energy_gap, l1_gap=l1_gap,
                               oracle_gap=abs(min_energy - oracle.value),
                               iterations=trace.iterations, reason=trace.reason,
                               missed_measure=lifted.missed_measure)
            logger.info("h=%.4g: %d triangles, min E=%.10g, energy gap=%.3e, L1 gap=%.3e (%s)",
                        h, mesh.n_triangles, min_energy, energy_gap, l1_gap, trace.reason)
            result.levels.append(level)
            result.traces.append(trace)
            previous_energy, previous_lift, previous_hit = min_energy, lifted.values, lifted.hit
        return result

    @staticmethod
    def _lifted_function(signal: Signal, mesh: TriangleMesh, surface: AnalyticSurface) -> SignalFunction:
        def f(u, v, points):
            shape = np.shape(u)
            return lift_signal(signal, mesh, surface, u, v).values.reshape(shape)
        return f

    # ===================================================================
    # SECTION 2: REFINEMENT DIAGNOSTICS
    # ===================================================================

    def area_convergence(self, family: RefinementFamily, samples: int = 2000) -> List[Dict[str, float]]:
        """Per level: mesh area, |area - surface area|, alpha_max and alpha_max / h."""
        exact = family.surface.area()
        rows = []
        for h, mesh in family.levels:
            report = admissibility_report(mesh, family.surface, h, surface_samples=samples)
            area = total_area(mesh)
            rows.append({"h": h, "area": area, "area_error": abs(area - exact),
                         "alpha_max": report.alpha_max, "alpha_ratio": report.alpha_ratio})
        return rows

    def varifold_rate(self, family: RefinementFamily, f: SignalFunction, kernel: KernelParams,
                      element: str = "p1", order: int = 8) -> List[Dict[str, float]]:
        """Per level: W' distance between the discretized fshape and the continuous one."""
        reference = continuous_varifold(family.surface, f, kernel, order)
        rows = []
        for h, mesh in family.levels:
            mu = from_fshape(mesh, discretize_signal(family.surface, f, mesh, element))
            distance = float(np.sqrt(squared_distance(mu, reference, kernel, self.workers)))
            logger.info("h=%.4g: varifold distance %.6e", h, distance)
            rows.append({"h": h, "distance": distance})
        return rows

    # ===================================================================
    # SECTION 3: OSCILLATIONS
    # ===================================================================

    @staticmethod
    def oscillation_report(signal: Signal, mask: Sequence[bool]) -> OscillationReport:
        """
        Total variation and sup norm of `signal` on the triangles selected by
        `mask`. P1 signals use the gradient total variation; P0 signals use
        the jump total variation across edges between selected triangles.

        Raises:
            LengthMismatch: mask length differs from the triangle count
        """
        mesh = signal.mesh
        mask = np.asarray(mask, dtype=bool).reshape(-1)
        if len(mask) != mesh.n_triangles:
            raise LengthMismatch(f"mask has {len(mask)} entries for {mesh.n_triangles} triangles")
        if isinstance(signal, SignalP1):
            tv = total_variation(signal, 0.0, mask)
            selected = signal.values[np.unique(mesh.triangles[mask])] if mask.any() else np.zeros(0)
        else:
            tv = jump_total_variation(mesh, signal.values, mask)
            selected = signal.values[mask]
        sup = float(np.max(np.abs(selected))) if selected.size else 0.0
        return OscillationReport(tv, sup, int(mask.sum()))

    def compare_oscillations(self, testbed: Testbed, models: Sequence[EnergyModel]) -> Dict[str, OscillationReport]:
        """Minimize every model on the testbed and report masked oscillations of the optima."""
        reports = {}
        for model in models:
            problem = MatchProblem.from_fshapes(testbed.source, model, testbed.target,
                                                testbed.target_signal, workers=self.workers)
            trace = self.matching.minimize(problem, self.descent)
            reports[model.variant] = self.oscillation_report(trace.signal, testbed.mask)
            logger.info("%s optimum: masked TV %.6g, sup %.6g", model.variant,
                        reports[model.variant].total_variation, reports[model.variant].sup_norm)
        return reports

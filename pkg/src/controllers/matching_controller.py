"""
Matching Controller - discrete energies, their signal gradients and the
adaptive gradient descent that minimizes them at fixed geometry.

The source mesh never moves; only its signal is optimized. Each energy is a
weighted sum of named terms:

    l2:  "l2" = gamma_f/2 ||f||^2_{P0},   "varifold" = gamma_w/2 Var
    h1:  "l2" = alpha ||f||^2_{NC},  "h1" = beta |f|^2_{H1},  "varifold"
    bv:  "l1" = alpha ||f||_{1,eps}, "tv" = beta TV_eps(f),   "varifold"

Var is the squared varifold distance between the source fshape and the
target varifold; P1 signals enter it through their barycenter values.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..utils.energy_model import DescentConfig, EnergyModel
from ..utils.errors import MeshMismatch, NonsmoothEnergy, WrongModel
from ..utils.fem import (Signal, SignalP0, SignalP1, h1_gradient, h1_seminorm, l1_exact,
                         l1_smoothed, l1_smoothed_gradient, lp_norm_p0, make_signal,
                         newton_cotes_l2_gradient, newton_cotes_lp, p0_project,
                         p0_project_adjoint, require_same_mesh, total_variation,
                         total_variation_gradient)
from ..utils.mesh import TriangleMesh, total_area
from ..utils.parallel import map_blocks
from ..utils.varifold import DiscreteVarifold, FixedGeometryVarifoldTerm, from_fshape

logger = logging.getLogger(__name__)

# a sweep is flagged when the bound ratio grows by more than this factor
BOUND_EXPLOSION_FACTOR = 10.0
SMOOTHING_BLOCK = 256


class MatchProblem:
    """
    Source mesh, target varifold and energy model of one matching run.

    The element kind follows the model (P0 for l2, P1 for h1 and bv). The
    varifold term against the target is precomputed once, so a problem can be
    shared by threads running independent descents.

    Attributes:
        mesh (TriangleMesh): source geometry
        model (EnergyModel): energy variant, weights and kernel
        target (DiscreteVarifold): target fvarifold
        initial (Signal): starting signal (zero by default)
        target_area (float): total weight of the target atoms
    """

    def __init__(self, mesh: TriangleMesh, model: EnergyModel, target: DiscreteVarifold,
                 initial: Optional[Signal] = None, workers: Optional[int] = None) -> None:
        mesh.require_nondegenerate()
        self.mesh = mesh
        self.model = model
        self.target = target
        self.workers = workers
        self.element = model.element
        n = mesh.n_triangles if self.element == "p0" else mesh.n_vertices
        if initial is None:
            initial = make_signal(mesh, np.zeros(n), self.element)
        self.initial = self.check_signal(initial)
        self.target_area = float(np.sum(target.weights))
        self.source_atoms = from_fshape(mesh, SignalP0(mesh, np.zeros(mesh.n_triangles)))
        self.varifold: Optional[FixedGeometryVarifoldTerm] = None
        if model.gamma_w > 0:
            self.varifold = FixedGeometryVarifoldTerm(self.source_atoms, target, model.kernel, workers)

    @classmethod
    def from_fshapes(cls, mesh: TriangleMesh, model: EnergyModel, target_mesh: TriangleMesh,
                     target_signal: Signal, initial: Optional[Signal] = None,
                     workers: Optional[int] = None) -> "MatchProblem":
        """Build the target varifold from a target fshape (one atom per target triangle)."""
        return cls(mesh, model, from_fshape(target_mesh, target_signal), initial, workers)

    def check_signal(self, signal: Signal) -> Signal:
        require_same_mesh(signal, self.mesh)
        if signal.element != self.element:
            raise WrongModel(f"the {self.model.variant} model works on {self.element.upper()} "
                             f"signals, got {signal.element.upper()}")
        return signal

    def signal(self, values) -> Signal:
        return make_signal(self.mesh, values, self.element)

    @property
    def n_dofs(self) -> int:
        return self.mesh.n_triangles if self.element == "p0" else self.mesh.n_vertices

    @property
    def dof_positions(self) -> np.ndarray:
        """Barycenters for P0, vertices for P1."""
        return self.mesh.barycenters if self.element == "p0" else self.mesh.vertices

    def __repr__(self) -> str:
        return (f"MatchProblem({self.model.variant}, n_triangles={self.mesh.n_triangles}, "
                f"target_atoms={len(self.target)})")


@dataclass
class EnergyBreakdown:
    total: float
    terms: Dict[str, float]

    @property
    def penalty(self) -> float:
        return float(sum(v for k, v in self.terms.items() if k != "varifold"))

    @property
    def varifold(self) -> float:
        return self.terms.get("varifold", 0.0)


@dataclass
class DescentRecord:
    iteration: int
    energy: EnergyBreakdown
    grad_norm: float
    step: float
    accepted: bool


@dataclass
class DescentTrace:
    """Every trial of a descent; accepted records have nonincreasing energy."""
    records: List[DescentRecord] = field(default_factory=list)
    signal: Optional[Signal] = None
    reason: str = ""
    iterations: int = 0

    @property
    def accepted(self) -> List[DescentRecord]:
        return [r for r in self.records if r.accepted]

    @property
    def final_energy(self) -> float:
        return self.accepted[-1].energy.total

    def rows(self) -> List[list]:
        """CSV rows matching TRACE_HEADER."""
        return [[r.iteration, r.energy.total, r.energy.penalty, r.energy.varifold,
                 r.grad_norm, r.step, int(r.accepted)] for r in self.records]


TRACE_HEADER = ["iteration", "E_total", "E_penalty", "E_var", "grad_inf", "step", "accepted"]


@dataclass
class BoundReport:
    """sup|f*| * gamma_f / (gamma_w * (area_X + area_Y)) for one optimum."""
    ratio: float
    sup_norm: float
    gamma_f: float
    gamma_w: float
    area_source: float
    area_target: float


@dataclass
class BoundSweep:
    gamma_f: List[float]
    reports: List[BoundReport]
    exploding: bool

    @property
    def ratios(self) -> List[float]:
        return [r.ratio for r in self.reports]


class MatchingController:
    """Energy evaluation and minimization for MatchProblem instances."""

    def __init__(self, config: Optional[DescentConfig] = None) -> None:
        self.config = config or DescentConfig()

    # ===================================================================
    # SECTION 1: ENERGY AND GRADIENT
    # ===================================================================

    def energy(self, problem: MatchProblem, signal: Signal, smoothed: bool = True) -> EnergyBreakdown:
        """
        Total energy and its per-term breakdown.

        With smoothed=False the bv model reports its unsmoothed value
        (exact L1 norm and plain total variation).

        Raises:
            MeshMismatch: the signal lives on another mesh
            WrongModel: the signal element does not match the model
        """
        problem.check_signal(signal)
        model = problem.model
        terms: Dict[str, float] = {}
        if model.variant == "l2":
            terms["l2"] = 0.5 * model.gamma_f * lp_norm_p0(signal, 2)
        elif model.variant == "h1":
            terms["l2"] = model.alpha * newton_cotes_lp(signal, 2)
            terms["h1"] = model.beta * h1_seminorm(signal)
        else:
            eps = model.epsilon if smoothed else 0.0
            terms["l1"] = model.alpha * (l1_smoothed(signal, eps) if smoothed else l1_exact(signal))
            terms["tv"] = model.beta * total_variation(signal, eps)
        terms["varifold"] = self._varifold_value(problem, signal)
        return EnergyBreakdown(float(sum(terms.values())), terms)

    def energy_gradient(self, problem: MatchProblem, signal: Signal, smoothed: bool = True) -> np.ndarray:
        """
        Derivative of energy() with respect to every signal value.

        Raises:
            NonsmoothEnergy: unsmoothed bv energy requested
        """
        problem.check_signal(signal)
        model = problem.model
        if model.variant == "bv" and not smoothed:
            raise NonsmoothEnergy("the bv energy is differentiable only with epsilon > 0")
        if model.variant == "l2":
            grad = model.gamma_f * problem.mesh.areas * signal.values
        elif model.variant == "h1":
            grad = model.alpha * newton_cotes_l2_gradient(signal) + model.beta * h1_gradient(signal)
        else:
            grad = (model.alpha * l1_smoothed_gradient(signal, model.epsilon)
                    + model.beta * total_variation_gradient(signal, model.epsilon))
        if problem.varifold is not None:
            atoms = problem.varifold.gradient(self._atom_signals(signal))
            if isinstance(signal, SignalP1):
                atoms = p0_project_adjoint(problem.mesh, atoms)
            grad = grad + 0.5 * model.gamma_w * atoms
        return np.asarray(grad, dtype=float)

    @staticmethod
    def _atom_signals(signal: Signal) -> np.ndarray:
        return p0_project(signal).values if isinstance(signal, SignalP1) else signal.values

    def _varifold_value(self, problem: MatchProblem, signal: Signal) -> float:
        if problem.varifold is None:
            return 0.0
        return 0.5 * problem.model.gamma_w * problem.varifold.value(self._atom_signals(signal))

    # ===================================================================
    # SECTION 2: DESCENT
    # ===================================================================

    def smooth_direction(self, problem: MatchProblem, grad: np.ndarray, length: float) -> np.ndarray:
        """
        Gaussian smoothing of the gradient over the dof positions,
        scaled by the largest kernel row sum.
        """
        x = problem.dof_positions
        n = len(grad)

        def block(rows: range) -> np.ndarray:
            diff = x[rows.start:rows.stop, None, :] - x[None, :, :]
            K = np.exp(-np.einsum("abj,abj->ab", diff, diff) / length ** 2)
            return np.stack([K @ grad, K.sum(axis=1)], axis=1)

        parts = np.concatenate(map_blocks(block, n, SMOOTHING_BLOCK, problem.workers))
        return parts[:, 0] / parts[:, 1].max()

    def minimize(self, problem: MatchProblem, config: Optional[DescentConfig] = None,
                 initial: Optional[Signal] = None) -> DescentTrace:
        """
        Backtracking gradient descent from `initial` (problem.initial by default).

        A trial f - s d is accepted when E(f - s d) <= E(f) - armijo s <g, d>
        (d = g unless smoothing is on); the step grows by `grow` after an
        accepted trial and shrinks by `shrink` after a rejected one. Stops
        when max|g| <= grad_tol ('converged'), after max_iters accepted steps
        ('max_iters') or when the step falls below min_step ('step_underflow').
        """
        config = config or self.config
        signal = problem.check_signal(initial) if initial is not None else problem.initial
        trace = DescentTrace()
        current = self.energy(problem, signal)
        step = config.initial_step
        trace.records.append(DescentRecord(0, current, float("nan"), 0.0, True))

        iteration = 0
        reason = "max_iters"
        while True:
            grad = self.energy_gradient(problem, signal)
            grad_norm = float(np.max(np.abs(grad))) if grad.size else 0.0
            trace.records[-1].grad_norm = grad_norm
            if grad_norm <= config.grad_tol:
                reason = "converged"
                break
            if iteration >= config.max_iters:
                break
            if config.smoothing > 0:
                direction = self.smooth_direction(problem, grad, config.smoothing)
            else:
                direction = grad
            slope = float(np.dot(grad, direction))

            accepted = False
            while step >= config.min_step:
                trial = problem.signal(signal.values - step * direction)
                energy = self.energy(problem, trial)
                if energy.total <= current.total - config.armijo * step * slope:
                    iteration += 1
                    trace.records.append(DescentRecord(iteration, energy, float("nan"), step, True))
                    logger.debug("iter %d: E=%.12g step=%.3g |g|=%.3e", iteration, energy.total, step, grad_norm)
                    signal, current = trial, energy
                    step *= config.grow
                    accepted = True
                    break
                trace.records.append(DescentRecord(iteration, energy, grad_norm, step, False))
                step *= config.shrink
            if not accepted:
                reason = "step_underflow"
                break

        trace.signal = signal
        trace.reason = reason
        trace.iterations = iteration
        logger.info("descent stopped (%s) after %d iterations: E=%.12g",
                    reason, iteration, current.total)
        return trace

    # ===================================================================
    # SECTION 3: MINIMUM BOUND
    # ===================================================================

    def minimum_bound_check(self, trace: DescentTrace, problem: MatchProblem) -> BoundReport:
        """
        Ratio sup|f*| gamma_f / (gamma_w (area_X + area_Y)) of a descent result;
        0 when gamma_w = 0.

        Raises:
            WrongModel: the problem does not use the l2 model
        """
        model = problem.model
        if model.variant != "l2":
            raise WrongModel(f"the minimum bound applies to the l2 model, got {model.variant}")
        if trace.signal is None:
            raise MeshMismatch("the trace carries no final signal")
        problem.check_signal(trace.signal)
        sup = float(np.max(np.abs(trace.signal.values))) if trace.signal.values.size else 0.0
        area_x = total_area(problem.mesh)
        if model.gamma_w == 0:
            ratio = 0.0
        else:
            ratio = sup * model.gamma_f / (model.gamma_w * (area_x + problem.target_area))
        return BoundReport(ratio, sup, model.gamma_f, model.gamma_w, area_x, problem.target_area)

    def minimum_bound_sweep(self, problem: MatchProblem, gamma_f: Sequence[float],
                            config: Optional[DescentConfig] = None) -> BoundSweep:
        """Minimize for every gamma_f and flag ratios that grow by more than BOUND_EXPLOSION_FACTOR."""
        reports = []
        for value in gamma_f:
            model = problem.model.with_weights(gamma_f=float(value))
            sub = MatchProblem(problem.mesh, model, problem.target, problem.initial, problem.workers)
            reports.append(self.minimum_bound_check(self.minimize(sub, config), sub))
        ratios = [r.ratio for r in reports]
        base = min((r for r in ratios if r > 0), default=0.0)
        exploding = base > 0 and max(ratios) > BOUND_EXPLOSION_FACTOR * base
        logger.info("bound sweep over gamma_f=%s: ratios %s", list(gamma_f), ["%.3g" % r for r in ratios])
        return BoundSweep([float(v) for v in gamma_f], reports, exploding)

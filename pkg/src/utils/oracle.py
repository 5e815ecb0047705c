"""
Continuous-energy oracle.

Evaluates the continuous energies on an analytic surface by composite tensor
Gauss-Legendre quadrature over the parameter domain. Panels are no longer
than sigma_e / 2 in physical length; the per-panel order is raised by 2 until
two consecutive values agree to `rtol`.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .energy_model import EnergyModel
from .errors import BadParams, NoConvergence
from .sampling import evaluate_signal
from .surface import AnalyticSurface, SignalFunction
from .varifold import DiscreteVarifold, KernelParams, squared_distance

logger = logging.getLogger(__name__)


@dataclass
class OracleResult:
    value: float
    terms: Dict[str, float] = field(default_factory=dict)
    order: int = 0
    converged: bool = True


def continuous_varifold(surface: AnalyticSurface, f: SignalFunction, kp: KernelParams,
                        order: int = 8) -> DiscreteVarifold:
    """Quadrature atoms (node weight * area element, point, normal, f) approximating the continuous varifold."""
    u, v, w = surface.parameter_quadrature(order, kp.sigma_e / 2.0)
    weights = w * surface.area_element(u, v)
    return DiscreteVarifold(weights, surface.point(u, v), surface.normal(u, v),
                            evaluate_signal(surface, f, u, v))


def _energy_at_order(surface: AnalyticSurface, f: SignalFunction, target: Optional[DiscreteVarifold],
                     model: EnergyModel, order: int) -> Dict[str, float]:
    kp = model.kernel
    u, v, w = surface.parameter_quadrature(order, kp.sigma_e / 2.0)
    dA = w * surface.area_element(u, v)
    F = evaluate_signal(surface, f, u, v)
    terms: Dict[str, float] = {}
    if model.variant == "l2":
        terms["l2"] = 0.5 * model.gamma_f * float(np.sum(dA * F * F))
    else:
        grad2 = surface.signal_surface_gradient2(f, u, v) if model.beta else np.zeros_like(F)
        if model.variant == "h1":
            terms["l2"] = model.alpha * float(np.sum(dA * F * F))
            terms["h1"] = model.beta * float(np.sum(dA * grad2))
        else:
            eps2 = model.epsilon ** 2
            terms["l1"] = model.alpha * float(np.sum(dA * np.sqrt(F * F + eps2)))
            terms["tv"] = model.beta * float(np.sum(dA * np.sqrt(grad2 + eps2)))
    if model.gamma_w and target is not None:
        mu = DiscreteVarifold(dA, surface.point(u, v), surface.normal(u, v), F)
        terms["varifold"] = 0.5 * model.gamma_w * squared_distance(mu, target, kp)
    else:
        terms["varifold"] = 0.0
    return terms


def continuous_energy_oracle(surface: AnalyticSurface, f: SignalFunction,
                             target: Optional[DiscreteVarifold], model: EnergyModel,
                             order: int = 4, max_order: int = 12, rtol: float = 1e-6,
                             adaptive: bool = True) -> OracleResult:
    """
    Continuous energy of signal f on `surface` against `target`.

    With adaptive=False the value at `order` is returned without the
    convergence check (for signals with kinks, such as lifted P1 signals).

    Raises:
        BadParams: order < 4
        NoConvergence: no two consecutive orders agree to rtol up to max_order
    """
    if order < 4:
        raise BadParams(f"quadrature order must be >= 4, got {order}")
    terms = _energy_at_order(surface, f, target, model, order)
    previous = sum(terms.values())
    if not adaptive:
        return OracleResult(previous, terms, order, converged=False)
    current_order = order
    while current_order + 2 <= max_order:
        current_order += 2
        terms = _energy_at_order(surface, f, target, model, current_order)
        value = sum(terms.values())
        if abs(value - previous) <= rtol * max(abs(value), 1e-300) or value == previous:
            logger.debug("oracle converged at order %d: %.12g", current_order, value)
            return OracleResult(value, terms, current_order, converged=True)
        previous = value
    raise NoConvergence(f"continuous energy did not converge to rtol={rtol} by order {max_order}")

"""
Energy model and descent settings.

EnergyModel selects the penalty (l2, h1 or bv) and its weights:

    l2:  gamma_f/2 * ||f||^2_{P0}                  + gamma_w/2 * Var
    h1:  alpha * ||f||^2_{NC}  + beta * |f|^2_{H1}  + gamma_w/2 * Var
    bv:  alpha * ||f||_{1,eps} + beta * TV_eps(f)   + gamma_w/2 * Var
"""

from dataclasses import dataclass, replace
from typing import Tuple

from .errors import BadParams, NonpositiveEpsilon
from .varifold import KernelParams

VARIANTS = ("l2", "h1", "bv")


@dataclass(frozen=True)
class EnergyModel:
    variant: str
    kernel: KernelParams
    gamma_f: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    gamma_w: float = 1.0
    epsilon: float = 1e-3

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise BadParams(f"model variant must be one of {', '.join(VARIANTS)}, got '{self.variant}'")
        for name in ("gamma_f", "alpha", "beta", "gamma_w"):
            if getattr(self, name) < 0:
                raise BadParams(f"model weight {name} must be >= 0, got {getattr(self, name)}")
        if self.variant == "bv" and self.epsilon <= 0:
            raise NonpositiveEpsilon(f"bv model needs epsilon > 0, got {self.epsilon}")

    @property
    def element(self) -> str:
        """P0 for the l2 model, P1 for h1 and bv."""
        return "p0" if self.variant == "l2" else "p1"

    @property
    def term_names(self) -> Tuple[str, ...]:
        return {"l2": ("l2", "varifold"),
                "h1": ("l2", "h1", "varifold"),
                "bv": ("l1", "tv", "varifold")}[self.variant]

    def with_weights(self, **weights) -> "EnergyModel":
        return replace(self, **weights)


@dataclass(frozen=True)
class DescentConfig:
    """Backtracking gradient descent settings."""
    max_iters: int = 500
    grad_tol: float = 1e-8
    initial_step: float = 1.0
    shrink: float = 0.5
    grow: float = 1.3
    armijo: float = 1e-4
    min_step: float = 1e-14
    smoothing: float = 0.0

    def __post_init__(self) -> None:
        if self.max_iters < 0:
            raise BadParams("descent.max_iters must be >= 0")
        if not 0 < self.shrink < 1:
            raise BadParams("descent.shrink must be in (0, 1)")
        if self.grow < 1:
            raise BadParams("descent.grow must be >= 1")
        if self.initial_step <= 0 or self.min_step <= 0:
            raise BadParams("descent steps must be > 0")
        if not 0 <= self.armijo < 1:
            raise BadParams("descent.armijo must be in [0, 1)")
        if self.grad_tol < 0 or self.smoothing < 0:
            raise BadParams("descent.grad_tol and descent.smoothing must be >= 0")

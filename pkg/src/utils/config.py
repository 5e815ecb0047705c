"""
Run configuration.

Flat `key=value` text with one level of dotted sections:

    # comment
    model.variant = bv
    kernel.sigma_e = 0.3
    gamma.levels = 0.2, 0.1, 0.05, 0.025

Unknown keys and bad values raise ConfigError naming the key.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .energy_model import DescentConfig, EnergyModel
from .errors import ConfigError, ExpressionError, FShapeError, IoError
from .expression import SignalExpression
from .file_io import read_file
from .surface import SURFACES, AnalyticSurface, builtin_surface
from .varifold import KernelParams

logger = logging.getLogger(__name__)

SURFACE_PARAMS = {
    "sphere_cap": ("radius", "theta_max"),
    "cylinder_patch": ("radius", "angle", "height"),
    "monge_patch": ("a", "b", "c", "width", "depth"),
}


@dataclass
class CheckConfig:
    alpha_ratio_max: float = 2.0
    out_area_ratio_max: float = 1.0
    samples: int = 10_000


@dataclass
class QuadratureConfig:
    order: int = 4
    max_order: int = 12
    rtol: float = 1e-6


@dataclass
class RunConfig:
    """Everything a CLI run needs, validated."""
    model: EnergyModel
    descent: DescentConfig = field(default_factory=DescentConfig)
    surface_name: str = "sphere_cap"
    surface_params: Dict[str, object] = field(default_factory=dict)
    source_signal: str = "0"
    target_signal: str = "0"
    target_offset: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    target_surface: Optional[str] = None
    gamma_levels: List[float] = field(default_factory=lambda: [0.2, 0.1, 0.05, 0.025])
    check: CheckConfig = field(default_factory=CheckConfig)
    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)
    output_dir: str = "out"
    workers: int = 1

    def build_surface(self) -> AnalyticSurface:
        return builtin_surface(self.surface_name, self.surface_params)

    def build_target_surface(self) -> AnalyticSurface:
        name = self.target_surface or self.surface_name
        params = {k: v for k, v in self.surface_params.items() if k in SURFACE_PARAMS[name]}
        params["offset"] = self.target_offset
        return builtin_surface(name, params)

    def source_expression(self) -> SignalExpression:
        return SignalExpression(self.source_signal)

    def target_expression(self) -> SignalExpression:
        return SignalExpression(self.target_signal)


# ===================================================================
# VALUE CONVERTERS
# ===================================================================

def _number(key: str, text: str) -> float:
    """A float literal or a constant expression such as pi/3."""
    try:
        return float(text)
    except ValueError:
        pass
    try:
        expr = SignalExpression(text)
    except ExpressionError as e:
        raise ConfigError(key, f"not a number: {e}") from None
    if expr.variables:
        raise ConfigError(key, f"'{text}' must be a constant")
    value = float(expr(np.zeros(1), np.zeros(1), np.zeros((1, 3)))[0])
    if not np.isfinite(value):
        raise ConfigError(key, f"'{text}' is not finite")
    return value


def _integer(key: str, text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got '{text}'") from None


def _numbers(key: str, text: str) -> List[float]:
    return [_number(key, part.strip()) for part in text.split(",") if part.strip()]


def _vector3(key: str, text: str) -> Tuple[float, float, float]:
    values = _numbers(key, text)
    if len(values) != 3:
        raise ConfigError(key, f"expected three comma separated numbers, got '{text}'")
    return values[0], values[1], values[2]


def _expression(key: str, text: str) -> str:
    try:
        SignalExpression(text)
    except ExpressionError as e:
        raise ConfigError(key, str(e)) from None
    return text


KEYS: Dict[str, Callable[[str, str], object]] = {
    "model.variant": lambda k, t: t.lower(),
    "model.gamma_f": _number,
    "model.alpha": _number,
    "model.beta": _number,
    "model.gamma_w": _number,
    "model.epsilon": _number,
    "kernel.sigma_e": _number,
    "kernel.sigma_t": _number,
    "kernel.sigma_f": _number,
    "descent.max_iters": _integer,
    "descent.grad_tol": _number,
    "descent.initial_step": _number,
    "descent.shrink": _number,
    "descent.grow": _number,
    "descent.armijo": _number,
    "descent.min_step": _number,
    "descent.smoothing": _number,
    "surface.name": lambda k, t: t,
    "source.signal": _expression,
    "target.signal": _expression,
    "target.offset": _vector3,
    "target.surface": lambda k, t: t,
    "gamma.levels": _numbers,
    "check.alpha_ratio_max": _number,
    "check.out_area_ratio_max": _number,
    "check.samples": _integer,
    "quadrature.order": _integer,
    "quadrature.max_order": _integer,
    "quadrature.rtol": _number,
    "output.dir": lambda k, t: t,
    "run.workers": _integer,
}
SURFACE_KEYS = {f"surface.{p}" for params in SURFACE_PARAMS.values() for p in params}


# ===================================================================
# PARSING
# ===================================================================

def parse_pairs(text: str, source: str = "<config>") -> Dict[str, str]:
    """Split config text into raw key -> value strings (last assignment wins)."""
    pairs: Dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(line, f"{source}:{number}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key.count(".") != 1:
            raise ConfigError(key, f"{source}:{number}: keys must look like section.field")
        pairs[key.lower()] = value
    return pairs


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """
    Build a validated RunConfig from config text.

    Raises:
        ConfigError: unknown key, malformed value or violated constraint
    """
    raw = parse_pairs(text, source)
    values: Dict[str, object] = {}
    surface_params: Dict[str, object] = {}
    for key, text_value in raw.items():
        if key in KEYS:
            values[key] = KEYS[key](key, text_value)
        elif key in SURFACE_KEYS:
            surface_params[key.split(".", 1)[1]] = _number(key, text_value)
        else:
            raise ConfigError(key, "unknown key")

    def section(prefix: str) -> Dict[str, object]:
        return {k.split(".", 1)[1]: v for k, v in values.items() if k.startswith(prefix + ".")}

    try:
        kernel = KernelParams(**{"sigma_e": 0.5, "sigma_t": 1.0, "sigma_f": 1.0, **section("kernel")})
    except FShapeError as e:
        raise ConfigError("kernel", str(e)) from None
    model_values = section("model")
    try:
        model = EnergyModel(variant=model_values.pop("variant", "l2"), kernel=kernel, **model_values)
    except FShapeError as e:
        raise ConfigError("model", str(e)) from None
    try:
        descent = DescentConfig(**section("descent"))
    except FShapeError as e:
        raise ConfigError("descent", str(e)) from None

    surface_name = str(values.get("surface.name", "sphere_cap"))
    if surface_name not in SURFACES:
        raise ConfigError("surface.name", f"unknown surface '{surface_name}'")
    for param in surface_params:
        if param not in SURFACE_PARAMS[surface_name]:
            raise ConfigError(f"surface.{param}", f"not a parameter of {surface_name}")
    target_surface = values.get("target.surface")
    if target_surface is not None and target_surface not in SURFACES:
        raise ConfigError("target.surface", f"unknown surface '{target_surface}'")

    levels = list(values.get("gamma.levels", [0.2, 0.1, 0.05, 0.025]))
    if any(b >= a for a, b in zip(levels, levels[1:])) or any(h <= 0 for h in levels):
        raise ConfigError("gamma.levels", "steps must be positive and strictly decreasing")

    quadrature = QuadratureConfig(**section("quadrature"))
    if quadrature.order < 4 or quadrature.max_order < quadrature.order:
        raise ConfigError("quadrature.order", "need 4 <= order <= max_order")
    workers = int(values.get("run.workers", 1))
    if workers < 0:
        raise ConfigError("run.workers", "must be >= 0")

    config = RunConfig(
        model=model,
        descent=descent,
        surface_name=surface_name,
        surface_params=surface_params,
        source_signal=str(values.get("source.signal", "0")),
        target_signal=str(values.get("target.signal", "0")),
        target_offset=values.get("target.offset", (0.0, 0.0, 0.0)),
        target_surface=target_surface,
        gamma_levels=levels,
        check=CheckConfig(**section("check")),
        quadrature=quadrature,
        output_dir=str(values.get("output.dir", "out")),
        workers=workers,
    )
    try:
        config.build_surface()
        config.build_target_surface()
    except FShapeError as e:
        raise ConfigError("surface", str(e)) from None
    return config


def load_config(path: str) -> RunConfig:
    """Read and parse a config file; raises IoError if it cannot be read."""
    ok, content = read_file(path)
    if not ok:
        raise IoError(f"cannot read config '{path}': {content}")
    logger.debug("loaded config %s", path)
    return parse_config(content, path)

"""
Varifold Module
===============
Discrete functional varifolds (one weighted Dirac atom per triangle), the
Gaussian kernel on position x plane x signal, and the dual-norm inner
products, distances and signal-gradients built on it.

Kernel between atoms a, b:

    k(a, b) = exp(-|x_a - x_b|^2 / sigma_e^2)
            * exp(-2 (1 - <n_a, n_b>^2) / sigma_t^2)
            * exp(-(f_a - f_b)^2 / sigma_f^2)

The plane factor depends on <n_a, n_b>^2 only, so normals are unoriented.
Double sums are exact; they are evaluated in row blocks of the first
measure and reduced in block order (see parallel.py).
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import BadParams, MeshMismatch, NonUnitNormal, ValidationError
from .fem import SignalP0, SignalP1, p0_project, p0_project_adjoint, require_same_mesh
from .mesh import TriangleMesh
from .parallel import blocked_sum, map_blocks

logger = logging.getLogger(__name__)

UNIT_TOLERANCE = 1e-12
CLAMP_RATIO = 1e-10
VARIFOLD_BLOCK = 128
# cache geometric Gram matrices up to this many entries
GRAM_CACHE_ENTRIES = 4_000_000


@dataclass(frozen=True)
class KernelParams:
    """Kernel widths: sigma_e (length), sigma_t (dimensionless), sigma_f (signal units)."""
    sigma_e: float
    sigma_t: float
    sigma_f: float

    def __post_init__(self) -> None:
        for name in ("sigma_e", "sigma_t", "sigma_f"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise BadParams(f"kernel {name} must be > 0, got {value}")


@dataclass(frozen=True)
class VarifoldAtom:
    weight: float
    point: Tuple[float, float, float]
    normal: Tuple[float, float, float]
    signal: float


class DiscreteVarifold:
    """
    Finite list of weighted atoms stored column-wise.

    Attributes:
        weights (np.ndarray): (N,)
        points (np.ndarray): (N, 3)
        normals (np.ndarray): (N, 3) unit vectors
        signals (np.ndarray): (N,)
    """

    def __init__(self, weights, points, normals, signals) -> None:
        self.weights = np.array(weights, dtype=float).reshape(-1)
        n = len(self.weights)
        self.points = np.array(points, dtype=float).reshape(n, 3)
        self.normals = np.array(normals, dtype=float).reshape(n, 3)
        self.signals = np.array(signals, dtype=float).reshape(n)
        if np.any(self.weights < 0):
            raise ValidationError("atom weights must be nonnegative")
        if n and np.max(np.abs(np.linalg.norm(self.normals, axis=1) - 1.0)) > UNIT_TOLERANCE:
            raise NonUnitNormal("every atom normal must have unit length")
        for array in (self.weights, self.points, self.normals, self.signals):
            array.flags.writeable = False

    @classmethod
    def from_atoms(cls, atoms: Sequence[VarifoldAtom]) -> "DiscreteVarifold":
        if not atoms:
            return cls(np.zeros(0), np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0))
        return cls([a.weight for a in atoms], [a.point for a in atoms],
                   [a.normal for a in atoms], [a.signal for a in atoms])

    @property
    def atoms(self) -> List[VarifoldAtom]:
        return [VarifoldAtom(float(w), tuple(p), tuple(n), float(f))
                for w, p, n, f in zip(self.weights, self.points, self.normals, self.signals)]

    def with_signals(self, signals) -> "DiscreteVarifold":
        """Same geometry, new signal values."""
        return DiscreteVarifold(self.weights, self.points, self.normals, signals)

    def transformed(self, rotation: Optional[np.ndarray] = None,
                    translation: Optional[Sequence[float]] = None) -> "DiscreteVarifold":
        """Apply one rigid motion to points and normals."""
        points, normals = self.points, self.normals
        if rotation is not None:
            R = np.asarray(rotation, dtype=float)
            points, normals = points @ R.T, normals @ R.T
        if translation is not None:
            points = points + np.asarray(translation, dtype=float)
        return DiscreteVarifold(self.weights, points, normals, self.signals)

    def __len__(self) -> int:
        return len(self.weights)

    def __repr__(self) -> str:
        return f"DiscreteVarifold(n_atoms={len(self)})"


# ===================================================================
# SECTION 1: CONSTRUCTION AND ELEMENTARY KERNELS
# ===================================================================

def from_fshape(mesh: TriangleMesh, signal: Union[SignalP0, SignalP1]) -> DiscreteVarifold:
    """One atom (|T_k|, barycenter, unit normal, f_0^k) per triangle; P1 goes through p0_project."""
    require_same_mesh(signal, mesh)
    mesh.require_nondegenerate()
    if isinstance(signal, SignalP1):
        signal = p0_project(signal)
    return DiscreteVarifold(mesh.areas, mesh.barycenters, mesh.normals, signal.values)


def _require_unit(n: np.ndarray) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    if abs(np.linalg.norm(n) - 1.0) > UNIT_TOLERANCE:
        raise NonUnitNormal(f"expected a unit vector, got norm {np.linalg.norm(n):.3e}")
    return n


def grassmann_distance(n1, n2) -> float:
    """sqrt(2 (1 - <n1, n2>^2)): distance between the planes with normals n1, n2."""
    c = float(np.dot(_require_unit(n1), _require_unit(n2)))
    return float(np.sqrt(max(0.0, 2.0 * (1.0 - c * c))))


def atom_kernel(a: VarifoldAtom, b: VarifoldAtom, kp: KernelParams) -> float:
    """Kernel value between two atoms (weights not included)."""
    d = np.asarray(a.point, dtype=float) - np.asarray(b.point, dtype=float)
    c = float(np.dot(a.normal, b.normal))
    df = a.signal - b.signal
    return float(np.exp(-np.dot(d, d) / kp.sigma_e ** 2)
                 * np.exp(-2.0 * (1.0 - c * c) / kp.sigma_t ** 2)
                 * np.exp(-df * df / kp.sigma_f ** 2))


def geometric_gram(pa: np.ndarray, na: np.ndarray, pb: np.ndarray, nb: np.ndarray,
                   kp: KernelParams) -> np.ndarray:
    """Position x plane factors of the kernel for every pair (rows a, columns b)."""
    diff = pa[:, None, :] - pb[None, :, :]
    d2 = np.einsum("abj,abj->ab", diff, diff)
    c = na @ nb.T
    return np.exp(-d2 / kp.sigma_e ** 2 - 2.0 * (1.0 - c * c) / kp.sigma_t ** 2)


def signal_factor(fa: np.ndarray, fb: np.ndarray, kp: KernelParams) -> np.ndarray:
    df = fa[:, None] - fb[None, :]
    return np.exp(-df * df / kp.sigma_f ** 2)


# ===================================================================
# SECTION 2: INNER PRODUCTS AND DISTANCES
# ===================================================================

def inner_product(mu: DiscreteVarifold, nu: DiscreteVarifold, kp: KernelParams,
                  workers: Optional[int] = None) -> float:
    """sum_a sum_b w_a w_b k(a, b)."""
    if len(mu) == 0 or len(nu) == 0:
        return 0.0

    def block(rows: range) -> float:
        s = slice(rows.start, rows.stop)
        K = geometric_gram(mu.points[s], mu.normals[s], nu.points, nu.normals, kp)
        K *= signal_factor(mu.signals[s], nu.signals, kp)
        return float(mu.weights[s] @ K @ nu.weights)

    return float(blocked_sum(block, len(mu), VARIFOLD_BLOCK, workers))


def _clamp(value: float, scale: float) -> float:
    if value < 0.0:
        if value < -CLAMP_RATIO * scale:
            logger.warning("squared distance %.3e is negative beyond rounding (scale %.3e)", value, scale)
        return 0.0
    return value


def squared_distance(mu: DiscreteVarifold, nu: DiscreteVarifold, kp: KernelParams,
                     workers: Optional[int] = None) -> float:
    """<mu, mu> - 2 <mu, nu> + <nu, nu>, with tiny negative values clamped to 0."""
    mm = inner_product(mu, mu, kp, workers)
    nn = inner_product(nu, nu, kp, workers)
    value = mm - 2.0 * inner_product(mu, nu, kp, workers) + nn
    return _clamp(value, mm + nn)


def signal_gradient(mu: DiscreteVarifold, nu: DiscreteVarifold, kp: KernelParams,
                    mesh: Optional[TriangleMesh] = None, element: str = "p0",
                    workers: Optional[int] = None) -> np.ndarray:
    """
    Derivative of squared_distance(mu, nu) with respect to the signal values.

    With element 'p0' the result has one entry per atom; with 'p1' the atom
    derivatives are pulled back through p0_project onto the vertices of
    `mesh` (each vertex collects 1/3 of every incident triangle).
    """
    if mesh is not None and len(mu) != mesh.n_triangles:
        raise MeshMismatch(f"varifold has {len(mu)} atoms but mesh has {mesh.n_triangles} triangles")
    if element == "p1" and mesh is None:
        raise MeshMismatch("P1 gradients need the source mesh")
    grad = _atom_gradient(mu, nu, kp, workers)
    if element == "p1":
        return p0_project_adjoint(mesh, grad)
    return grad


def _kernel_derivative(fa: np.ndarray, fb: np.ndarray, kp: KernelParams) -> np.ndarray:
    """d/df_a of the signal factor, for every pair."""
    df = fa[:, None] - fb[None, :]
    return -2.0 * df / kp.sigma_f ** 2 * np.exp(-df * df / kp.sigma_f ** 2)


def _atom_gradient(mu: DiscreteVarifold, nu: DiscreteVarifold, kp: KernelParams,
                   workers: Optional[int]) -> np.ndarray:
    if len(mu) == 0:
        return np.zeros(0)

    def block(rows: range) -> np.ndarray:
        s = slice(rows.start, rows.stop)
        self_part = geometric_gram(mu.points[s], mu.normals[s], mu.points, mu.normals, kp)
        self_part *= _kernel_derivative(mu.signals[s], mu.signals, kp)
        out = 2.0 * mu.weights[s] * (self_part @ mu.weights)
        if len(nu):
            cross = geometric_gram(mu.points[s], mu.normals[s], nu.points, nu.normals, kp)
            cross *= _kernel_derivative(mu.signals[s], nu.signals, kp)
            out -= 2.0 * mu.weights[s] * (cross @ nu.weights)
        return out

    return np.concatenate(map_blocks(block, len(mu), VARIFOLD_BLOCK, workers))


# ===================================================================
# SECTION 3: FIXED-GEOMETRY ATTACHMENT TERM
# ===================================================================

class FixedGeometryVarifoldTerm:
    """
    squared_distance(mu(f), nu) and its gradient for a source whose geometry
    never changes, only its signal.

    The target self-product is computed once. The position x plane factors
    are cached as dense matrices when small enough; otherwise they are
    recomputed blockwise on each call.
    """

    def __init__(self, source: DiscreteVarifold, target: DiscreteVarifold, kp: KernelParams,
                 workers: Optional[int] = None) -> None:
        self.source = source
        self.target = target
        self.kp = kp
        self.workers = workers
        self.target_norm2 = inner_product(target, target, kp, workers)
        n, m = len(source), len(target)
        self._cached = n * max(n, m) <= GRAM_CACHE_ENTRIES
        if self._cached:
            self._g_ss = geometric_gram(source.points, source.normals, source.points, source.normals, kp)
            self._g_st = geometric_gram(source.points, source.normals, target.points, target.normals, kp)
        logger.debug("varifold term: %d source atoms, %d target atoms, gram cache %s",
                     n, m, "on" if self._cached else "off")

    def value(self, signals: np.ndarray) -> float:
        """Squared distance between the source carrying `signals` and the target."""
        signals = np.asarray(signals, dtype=float)
        if len(signals) != len(self.source):
            raise MeshMismatch(f"expected {len(self.source)} atom signals, got {len(signals)}")
        if not self._cached:
            mu = self.source.with_signals(signals)
            mm = inner_product(mu, mu, self.kp, self.workers)
            value = mm - 2.0 * inner_product(mu, self.target, self.kp, self.workers) + self.target_norm2
            return _clamp(value, mm + self.target_norm2)
        w, wt = self.source.weights, self.target.weights

        def block(rows: range) -> float:
            s = slice(rows.start, rows.stop)
            ss = self._g_ss[s] * signal_factor(signals[s], signals, self.kp)
            st = self._g_st[s] * signal_factor(signals[s], self.target.signals, self.kp)
            return float(w[s] @ ss @ w) - 2.0 * float(w[s] @ st @ wt)

        partial = float(blocked_sum(block, len(signals), VARIFOLD_BLOCK, self.workers))
        value = partial + self.target_norm2
        return _clamp(value, abs(partial) + 2.0 * self.target_norm2)

    def gradient(self, signals: np.ndarray) -> np.ndarray:
        """Derivative of value() with respect to each atom signal."""
        signals = np.asarray(signals, dtype=float)
        if len(signals) != len(self.source):
            raise MeshMismatch(f"expected {len(self.source)} atom signals, got {len(signals)}")
        if not self._cached:
            return _atom_gradient(self.source.with_signals(signals), self.target, self.kp, self.workers)
        w, wt = self.source.weights, self.target.weights

        def block(rows: range) -> np.ndarray:
            s = slice(rows.start, rows.stop)
            ss = self._g_ss[s] * _kernel_derivative(signals[s], signals, self.kp)
            st = self._g_st[s] * _kernel_derivative(signals[s], self.target.signals, self.kp)
            return 2.0 * w[s] * (ss @ w) - 2.0 * w[s] * (st @ wt)

        if len(signals) == 0:
            return np.zeros(0)
        return np.concatenate(map_blocks(block, len(signals), VARIFOLD_BLOCK, self.workers))

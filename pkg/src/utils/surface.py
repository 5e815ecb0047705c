"""
Analytic Surfaces
=================
Parametric reference surfaces with closest-point projection, unit normals,
principal curvatures and a reach bound.

Key Features:
- SphereCap, CylinderPatch and MongePatch built from a name + params mapping
- Vectorised projection onto the complete underlying surface; the foot
  parameters may fall outside the patch domain, which is reported
- Composite Gauss-Legendre surface quadrature over the parameter domain

Conventions:
    Principal curvatures are the eigenvalues of the differential of the unit
    normal, so a sphere with outward normal has kappa_1 = kappa_2 = 1/R.
    A point p projects to (foot, t) with p = foot + t * n_X(foot).
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .errors import BadParams, OutsideReach
from .quadrature import composite_gauss_legendre

logger = logging.getLogger(__name__)

# f(u, v, points) -> values, all arrays of matching leading shape
SignalFunction = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]

Domain = Tuple[Tuple[float, float], Tuple[float, float]]


@dataclass
class Projection:
    """Result of projecting points onto a surface (arrays, one entry per point)."""
    foot: np.ndarray
    t: np.ndarray
    u: np.ndarray
    v: np.ndarray
    in_domain: np.ndarray


class AnalyticSurface(ABC):
    """
    Parametric surface phi: [u0, u1] x [v0, v1] -> R^3, rigidly translated by
    `offset`.
    """

    name = "surface"

    def __init__(self, domain: Domain, offset: Sequence[float] = (0.0, 0.0, 0.0)) -> None:
        (u0, u1), (v0, v1) = domain
        if not (u1 > u0 and v1 > v0):
            raise BadParams(f"{self.name}: parameter domain is empty")
        self.domain: Domain = ((float(u0), float(u1)), (float(v0), float(v1)))
        self.offset = np.asarray(offset, dtype=float).reshape(3)

    # ===================================================================
    # SECTION 1: GEOMETRY TO IMPLEMENT
    # ===================================================================

    @abstractmethod
    def _point(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Untranslated position, shape u.shape + (3,)."""

    @abstractmethod
    def derivatives(self, u: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(phi_u, phi_v)."""

    @abstractmethod
    def second_derivatives(self, u: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(phi_uu, phi_uv, phi_vv)."""

    @abstractmethod
    def _project_local(self, p: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Foot parameters (u, v) of untranslated points p (n, 3)."""

    @property
    @abstractmethod
    def reach(self) -> float:
        """Distance within which projection is unique."""

    # ===================================================================
    # SECTION 2: DERIVED QUANTITIES
    # ===================================================================

    def point(self, u, v) -> np.ndarray:
        return self._point(np.asarray(u, dtype=float), np.asarray(v, dtype=float)) + self.offset

    def normal(self, u, v) -> np.ndarray:
        pu, pv = self.derivatives(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
        n = np.cross(pu, pv)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def area_element(self, u, v) -> np.ndarray:
        pu, pv = self.derivatives(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
        return np.linalg.norm(np.cross(pu, pv), axis=-1)

    def fundamental_forms(self, u, v) -> Tuple[np.ndarray, np.ndarray]:
        """First and second fundamental forms, shape u.shape + (2, 2)."""
        u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
        pu, pv = self.derivatives(u, v)
        puu, puv, pvv = self.second_derivatives(u, v)
        n = self.normal(u, v)
        dot = lambda a, b: np.sum(a * b, axis=-1)
        I = np.stack([np.stack([dot(pu, pu), dot(pu, pv)], -1), np.stack([dot(pu, pv), dot(pv, pv)], -1)], -2)
        II = np.stack([np.stack([dot(puu, n), dot(puv, n)], -1), np.stack([dot(puv, n), dot(pvv, n)], -1)], -2)
        return I, II

    def principal_curvatures(self, u, v) -> Tuple[np.ndarray, np.ndarray]:
        """Eigenvalues (kappa_1 >= kappa_2) of the normal's differential, -I^{-1} II."""
        I, II = self.fundamental_forms(u, v)
        S = -np.linalg.solve(I, II)
        # S is self-adjoint for I, so its eigenvalues are real
        eig = np.sort(np.real(np.linalg.eigvals(S)), axis=-1)
        return eig[..., 1], eig[..., 0]

    def contains(self, u, v, tol: float = 1e-12) -> np.ndarray:
        (u0, u1), (v0, v1) = self.domain
        u, v = np.asarray(u), np.asarray(v)
        return (u >= u0 - tol) & (u <= u1 + tol) & (v >= v0 - tol) & (v <= v1 + tol)

    def clamp(self, u, v) -> Tuple[np.ndarray, np.ndarray]:
        """Nearest parameter point inside the domain."""
        (u0, u1), (v0, v1) = self.domain
        return np.clip(u, u0, u1), np.clip(v, v0, v1)

    def area(self) -> float:
        u, v, w = self.parameter_quadrature(order=12, panel_length=None)
        return float(np.sum(w * self.area_element(u, v)))

    def diameter(self) -> float:
        """Diameter estimate of the patch from a parameter grid."""
        (u0, u1), (v0, v1) = self.domain
        U, V = np.meshgrid(np.linspace(u0, u1, 33), np.linspace(v0, v1, 33), indexing="ij")
        P = self.point(U.ravel(), V.ravel())
        lo, hi = P.min(axis=0), P.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    def side_lengths(self) -> Tuple[float, float]:
        """Longest physical length of the u-lines and of the v-lines."""
        (u0, u1), (v0, v1) = self.domain
        s = np.linspace(0.0, 1.0, 65)
        best_u = best_v = 0.0
        for c in np.linspace(0.0, 1.0, 5):
            pu = self.point(u0 + s * (u1 - u0), np.full_like(s, v0 + c * (v1 - v0)))
            pv = self.point(np.full_like(s, u0 + c * (u1 - u0)), v0 + s * (v1 - v0))
            best_u = max(best_u, float(np.sum(np.linalg.norm(np.diff(pu, axis=0), axis=1))))
            best_v = max(best_v, float(np.sum(np.linalg.norm(np.diff(pv, axis=0), axis=1))))
        return best_u, best_v

    # ===================================================================
    # SECTION 3: PROJECTION
    # ===================================================================

    def project_points(self, points) -> Projection:
        """Project many points without checking the reach."""
        p = np.asarray(points, dtype=float).reshape(-1, 3) - self.offset
        u, v = self._project_local(p)
        foot_local = self._point(u, v)
        n = self.normal(u, v)
        t = np.sum((p - foot_local) * n, axis=-1)
        return Projection(foot_local + self.offset, t, u, v, self.contains(u, v))

    def project(self, p) -> Tuple[np.ndarray, float]:
        """
        Closest point and signed distance of a single point.

        Raises:
            OutsideReach: |t| >= reach
        """
        proj = self.project_points(np.asarray(p, dtype=float).reshape(1, 3))
        t = float(proj.t[0])
        if abs(t) >= self.reach:
            raise OutsideReach(f"point {tuple(np.ravel(p))} is at distance {abs(t):.3e} >= reach {self.reach:.3e}")
        return proj.foot[0], t

    # ===================================================================
    # SECTION 4: QUADRATURE
    # ===================================================================

    def parameter_quadrature(self, order: int, panel_length: Optional[float],
                             min_panels: int = 4) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Tensor composite Gauss-Legendre nodes over the domain.

        Panels are no longer than `panel_length` in physical length (when
        given) and at least `min_panels` per direction.

        Returns:
            tuple: (u, v, w) flat arrays; w are parameter weights (multiply
            by area_element for surface measure)
        """
        (u0, u1), (v0, v1) = self.domain
        lu, lv = self.side_lengths()
        nu = max(min_panels, int(np.ceil(lu / panel_length))) if panel_length else min_panels
        nv = max(min_panels, int(np.ceil(lv / panel_length))) if panel_length else min_panels
        xu, wu = composite_gauss_legendre(u0, u1, nu, order)
        xv, wv = composite_gauss_legendre(v0, v1, nv, order)
        U, V = np.meshgrid(xu, xv, indexing="ij")
        W = np.outer(wu, wv)
        return U.ravel(), V.ravel(), W.ravel()

    def surface_samples(self, n: int = 10_000) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Stratified samples (cell midpoints of a parameter grid) on the patch."""
        (u0, u1), (v0, v1) = self.domain
        lu, lv = self.side_lengths()
        ratio = lu / max(lv, 1e-300)
        nu = max(2, int(round(np.sqrt(n * ratio))))
        nv = max(2, int(round(n / nu)))
        su = u0 + (np.arange(nu) + 0.5) * (u1 - u0) / nu
        sv = v0 + (np.arange(nv) + 0.5) * (v1 - v0) / nv
        U, V = np.meshgrid(su, sv, indexing="ij")
        U, V = U.ravel(), V.ravel()
        return U, V, self.point(U, V)

    def signal_surface_gradient2(self, f: SignalFunction, u: np.ndarray, v: np.ndarray,
                                 step: float = 1e-6) -> np.ndarray:
        """|grad_X f|^2 at parameter nodes, by central differences in (u, v)."""
        def g(uu, vv):
            return np.asarray(f(uu, vv, self.point(uu, vv)), dtype=float)
        fu = (g(u + step, v) - g(u - step, v)) / (2.0 * step)
        fv = (g(u, v + step) - g(u, v - step)) / (2.0 * step)
        I, _ = self.fundamental_forms(u, v)
        df = np.stack([fu, fv], axis=-1)
        return np.einsum("ni,ni->n", df, np.linalg.solve(I, df[..., None])[..., 0])

    def __repr__(self) -> str:
        return f"{type(self).__name__}(domain={self.domain}, reach={self.reach:.4g})"


class SphereCap(AnalyticSurface):
    """
    Cap of the sphere of radius R around +z: u = polar angle in [0, theta_max],
    v = azimuth in [0, 2 pi], outward normal.
    """

    name = "sphere_cap"

    def __init__(self, radius: float = 1.0, theta_max: float = np.pi / 3,
                 offset: Sequence[float] = (0.0, 0.0, 0.0)) -> None:
        if radius <= 0:
            raise BadParams(f"sphere_cap: radius must be > 0, got {radius}")
        if not 0 < theta_max <= np.pi:
            raise BadParams(f"sphere_cap: theta_max must be in (0, pi], got {theta_max}")
        self.radius = float(radius)
        self.theta_max = float(theta_max)
        super().__init__(((0.0, self.theta_max), (0.0, 2.0 * np.pi)), offset)

    @property
    def reach(self) -> float:
        return self.radius

    def _point(self, u, v):
        s = np.sin(u)
        return self.radius * np.stack([s * np.cos(v), s * np.sin(v), np.cos(u)], axis=-1)

    def derivatives(self, u, v):
        R = self.radius
        pu = R * np.stack([np.cos(u) * np.cos(v), np.cos(u) * np.sin(v), -np.sin(u)], axis=-1)
        pv = R * np.stack([-np.sin(u) * np.sin(v), np.sin(u) * np.cos(v), np.zeros_like(u * v)], axis=-1)
        return pu, pv

    def second_derivatives(self, u, v):
        R = self.radius
        puu = -R * np.stack([np.sin(u) * np.cos(v), np.sin(u) * np.sin(v), np.cos(u)], axis=-1)
        puv = R * np.stack([-np.cos(u) * np.sin(v), np.cos(u) * np.cos(v), np.zeros_like(u * v)], axis=-1)
        pvv = -R * np.stack([np.sin(u) * np.cos(v), np.sin(u) * np.sin(v), np.zeros_like(u * v)], axis=-1)
        return puu, puv, pvv

    def normal(self, u, v):
        u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
        return self._point(u, v) / self.radius

    def principal_curvatures(self, u, v):
        k = np.full(np.broadcast(np.asarray(u), np.asarray(v)).shape, 1.0 / self.radius)
        return k, k.copy()

    def _project_local(self, p):
        r = np.linalg.norm(p, axis=-1)
        safe = np.where(r > 0, r, 1.0)
        u = np.arccos(np.clip(p[:, 2] / safe, -1.0, 1.0))
        v = np.mod(np.arctan2(p[:, 1], p[:, 0]), 2.0 * np.pi)
        return u, v

    def contains(self, u, v, tol: float = 1e-12):
        # azimuth is periodic
        return np.asarray(u) <= self.theta_max + tol

    def area(self) -> float:
        return 2.0 * np.pi * self.radius ** 2 * (1.0 - np.cos(self.theta_max))


class CylinderPatch(AnalyticSurface):
    """
    (R cos u, R sin u, v) for u in [-angle/2, angle/2], v in [0, height];
    outward normal, kappa = (1/R, 0).
    """

    name = "cylinder_patch"

    def __init__(self, radius: float = 1.0, angle: float = np.pi / 2, height: float = 1.0,
                 offset: Sequence[float] = (0.0, 0.0, 0.0)) -> None:
        if radius <= 0 or height <= 0:
            raise BadParams("cylinder_patch: radius and height must be > 0")
        if not 0 < angle < 2 * np.pi:
            raise BadParams(f"cylinder_patch: angle must be in (0, 2 pi), got {angle}")
        self.radius, self.angle, self.height = float(radius), float(angle), float(height)
        super().__init__(((-angle / 2.0, angle / 2.0), (0.0, self.height)), offset)

    @property
    def reach(self) -> float:
        return self.radius

    def _point(self, u, v):
        u, v = np.broadcast_arrays(u, v)
        return np.stack([self.radius * np.cos(u), self.radius * np.sin(u), v], axis=-1)

    def derivatives(self, u, v):
        u, v = np.broadcast_arrays(u, v)
        pu = np.stack([-self.radius * np.sin(u), self.radius * np.cos(u), np.zeros_like(u)], axis=-1)
        pv = np.stack([np.zeros_like(u), np.zeros_like(u), np.ones_like(u)], axis=-1)
        return pu, pv

    def second_derivatives(self, u, v):
        u, v = np.broadcast_arrays(u, v)
        puu = np.stack([-self.radius * np.cos(u), -self.radius * np.sin(u), np.zeros_like(u)], axis=-1)
        zero = np.zeros(u.shape + (3,))
        return puu, zero, zero.copy()

    def principal_curvatures(self, u, v):
        shape = np.broadcast(np.asarray(u), np.asarray(v)).shape
        return np.full(shape, 1.0 / self.radius), np.zeros(shape)

    def _project_local(self, p):
        u = np.arctan2(p[:, 1], p[:, 0])
        return u, p[:, 2].copy()

    def area(self) -> float:
        return self.radius * self.angle * self.height


class MongePatch(AnalyticSurface):
    """
    Graph z = a u^2 + b v^2 + c u v over [0, width] x [0, depth] (x = u,
    y = v), upward normal.
    """

    name = "monge_patch"
    NEWTON_ITERS = 60
    STARTS = 4

    def __init__(self, a: float = 0.0, b: float = 0.0, c: float = 0.0,
                 width: float = 1.0, depth: Optional[float] = None,
                 offset: Sequence[float] = (0.0, 0.0, 0.0)) -> None:
        depth = width if depth is None else depth
        if width <= 0 or depth <= 0:
            raise BadParams("monge_patch: width and depth must be > 0")
        self.a, self.b, self.c = float(a), float(b), float(c)
        super().__init__(((0.0, float(width)), (0.0, float(depth))), offset)
        self._starts_tree: Optional[cKDTree] = None

    @property
    def flat(self) -> bool:
        return self.a == 0.0 and self.b == 0.0 and self.c == 0.0

    @property
    def reach(self) -> float:
        (u0, u1), (v0, v1) = self.domain
        diam = float(np.hypot(u1 - u0, v1 - v0))
        bound = 2.0 * max(abs(self.a), abs(self.b)) + abs(self.c)
        return diam if bound == 0.0 else min(diam, 1.0 / (2.0 * bound))

    def height(self, u, v):
        return self.a * u * u + self.b * v * v + self.c * u * v

    def _point(self, u, v):
        u, v = np.broadcast_arrays(u, v)
        return np.stack([u, v, self.height(u, v)], axis=-1)

    def derivatives(self, u, v):
        u, v = np.broadcast_arrays(u, v)
        one, zero = np.ones_like(u), np.zeros_like(u)
        pu = np.stack([one, zero, 2.0 * self.a * u + self.c * v], axis=-1)
        pv = np.stack([zero, one, 2.0 * self.b * v + self.c * u], axis=-1)
        return pu, pv

    def second_derivatives(self, u, v):
        u, v = np.broadcast_arrays(u, v)
        zero = np.zeros_like(u)
        puu = np.stack([zero, zero, np.full_like(u, 2.0 * self.a)], axis=-1)
        puv = np.stack([zero, zero, np.full_like(u, self.c)], axis=-1)
        pvv = np.stack([zero, zero, np.full_like(u, 2.0 * self.b)], axis=-1)
        return puu, puv, pvv

    def area(self) -> float:
        if self.flat:
            (u0, u1), (v0, v1) = self.domain
            return (u1 - u0) * (v1 - v0)
        return super().area()

    def _start_tree(self) -> Tuple[cKDTree, np.ndarray]:
        if self._starts_tree is None:
            (u0, u1), (v0, v1) = self.domain
            pad_u, pad_v = 0.5 * (u1 - u0), 0.5 * (v1 - v0)
            U, V = np.meshgrid(np.linspace(u0 - pad_u, u1 + pad_u, 33),
                               np.linspace(v0 - pad_v, v1 + pad_v, 33), indexing="ij")
            self._start_params = np.stack([U.ravel(), V.ravel()], axis=1)
            self._starts_tree = cKDTree(self._point(U.ravel(), V.ravel()))
        return self._starts_tree, self._start_params

    def _project_local(self, p):
        if self.flat:
            return p[:, 0].copy(), p[:, 1].copy()
        tree, params = self._start_tree()
        _, idx = tree.query(p, k=self.STARTS)
        idx = np.asarray(idx).reshape(len(p), -1)
        best_u = np.zeros(len(p))
        best_v = np.zeros(len(p))
        best_d = np.full(len(p), np.inf)
        for s in range(idx.shape[1]):
            u, v = self._newton(p, params[idx[:, s], 0].copy(), params[idx[:, s], 1].copy())
            d = np.sum((self._point(u, v) - p) ** 2, axis=-1)
            better = d < best_d
            best_u[better], best_v[better], best_d[better] = u[better], v[better], d[better]
        return best_u, best_v

    def _newton(self, p: np.ndarray, u: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Damped Newton on the squared distance |phi(u, v) - p|^2."""
        tol = 1e-12 * self.reach
        dist = lambda uu, vv: np.sum((self._point(uu, vv) - p) ** 2, axis=-1)
        current = dist(u, v)
        active = np.ones(len(p), dtype=bool)
        for _ in range(self.NEWTON_ITERS):
            if not active.any():
                break
            r = self._point(u, v) - p
            pu, pv = self.derivatives(u, v)
            puu, puv, pvv = self.second_derivatives(u, v)
            g = np.stack([np.sum(r * pu, -1), np.sum(r * pv, -1)], axis=-1)
            H = np.empty((len(p), 2, 2))
            H[:, 0, 0] = np.sum(pu * pu, -1) + np.sum(r * puu, -1)
            H[:, 0, 1] = H[:, 1, 0] = np.sum(pu * pv, -1) + np.sum(r * puv, -1)
            H[:, 1, 1] = np.sum(pv * pv, -1) + np.sum(r * pvv, -1)
            det = H[:, 0, 0] * H[:, 1, 1] - H[:, 0, 1] ** 2
            # fall back to a gradient step where the Hessian is not positive definite
            pd = (det > 0) & (H[:, 0, 0] > 0)
            step = np.where(pd[:, None],
                            np.stack([H[:, 1, 1] * g[:, 0] - H[:, 0, 1] * g[:, 1],
                                      H[:, 0, 0] * g[:, 1] - H[:, 0, 1] * g[:, 0]], -1) / np.where(pd, det, 1.0)[:, None],
                            g)
            step[~active] = 0.0
            scale = np.ones(len(p))
            for _ in range(30):
                trial = dist(u - scale * step[:, 0], v - scale * step[:, 1])
                ok = trial <= current
                if ok.all():
                    break
                scale = np.where(ok, scale, 0.5 * scale)
            trial_u, trial_v = u - scale * step[:, 0], v - scale * step[:, 1]
            accepted = dist(trial_u, trial_v) <= current
            u = np.where(accepted, trial_u, u)
            v = np.where(accepted, trial_v, v)
            current = dist(u, v)
            active &= accepted & (scale * np.linalg.norm(step, axis=1) > tol)
        return u, v


SURFACES: Dict[str, type] = {
    "sphere_cap": SphereCap,
    "cylinder_patch": CylinderPatch,
    "monge_patch": MongePatch,
}


def builtin_surface(name: str, params: Optional[Mapping[str, object]] = None) -> AnalyticSurface:
    """
    Build a reference surface by name.

    Raises:
        BadParams: unknown name, unknown parameter or invalid value
    """
    if name not in SURFACES:
        raise BadParams(f"unknown surface '{name}' (expected one of {', '.join(sorted(SURFACES))})")
    params = dict(params or {})
    try:
        surface = SURFACES[name](**params)
    except TypeError as e:
        raise BadParams(f"{name}: {e}") from e
    logger.debug("built %r", surface)
    return surface

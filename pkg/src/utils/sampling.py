"""
Surface Sampling - triangulations of analytic surfaces and the diagnostics
that relate a mesh to the surface it approximates.

Key Features:
- sample_triangulation: structured meshes with target edge length h, with
  the outer vertex ring pushed slightly past the patch boundary
- admissibility_report: distance, angle, overhang area, Hausdorff and
  injectivity checks from dense barycentric sampling
- jacobian_diagnostic: determinant of the projection restricted to the mesh
- discretize_signal / lift_signal: moving signals between surface and mesh
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .errors import BadParams, BadStep, LiftMiss, OutsideReach
from .fem import Signal, SignalP0, SignalP1, require_same_mesh
from .mesh import TriangleMesh, grid_triangles, mesh_diameter
from .surface import AnalyticSurface, SignalFunction, SphereCap

logger = logging.getLogger(__name__)

DEFAULT_ALPHA_RATIO_MAX = 2.0
DEFAULT_OUT_AREA_RATIO_MAX = 1.0
LIFT_CANDIDATES = 16


# ===================================================================
# SECTION 1: TRIANGULATIONS
# ===================================================================

def default_boundary_offset(surface: AnalyticSurface, h: float) -> float:
    """h * min(1, h / reach) / 8: keeps the overhang area O(h^2)."""
    return h * min(1.0, h / surface.reach) / 8.0


def sample_triangulation(surface: AnalyticSurface, h: float,
                         boundary_offset: Optional[float] = None) -> TriangleMesh:
    """
    Structured triangulation with target edge length h.

    All vertices lie on the (extended) surface; boundary vertices sit
    `boundary_offset` (physical length) beyond the patch boundary, so part of
    the mesh projects outside the patch. boundary_offset=0 gives an inscribed
    mesh.

    Raises:
        BadStep: h <= 0 or h >= reach / 2
    """
    if not h > 0 or h >= surface.reach / 2.0:
        raise BadStep(f"step h={h} must be in (0, reach/2 = {surface.reach / 2.0:.4g})")
    delta = default_boundary_offset(surface, h) if boundary_offset is None else float(boundary_offset)
    if delta < 0:
        raise BadStep(f"boundary offset must be >= 0, got {delta}")
    if isinstance(surface, SphereCap):
        mesh = _polar_rings(surface, h, delta)
    else:
        mesh = _parameter_grid(surface, h, delta)
    logger.debug("sampled %s at h=%.4g: %d vertices, %d triangles",
                 surface.name, h, mesh.n_vertices, mesh.n_triangles)
    return mesh


def _polar_rings(surface: SphereCap, h: float, delta: float) -> TriangleMesh:
    R = surface.radius
    theta_end = min(np.pi, surface.theta_max + delta / R)
    n_rings = max(1, int(np.ceil(theta_end * R / h)))
    thetas = theta_end * np.arange(1, n_rings + 1) / n_rings

    points = [surface._point(np.array(0.0), np.array(0.0))]
    rings: List[np.ndarray] = []
    for theta in thetas:
        m = max(6, int(round(2.0 * np.pi * R * np.sin(theta) / h)))
        phi = 2.0 * np.pi * np.arange(m) / m
        start = len(points)
        points.extend(surface._point(np.full(m, theta), phi))
        rings.append(np.arange(start, start + m))

    tris = []
    first = rings[0]
    for j in range(len(first)):
        tris.append((0, first[j], first[(j + 1) % len(first)]))
    for inner, outer in zip(rings[:-1], rings[1:]):
        tris.extend(_merge_rings(inner, outer))
    return TriangleMesh(np.asarray(points) + surface.offset, tris)


def _merge_rings(a: np.ndarray, b: np.ndarray) -> List[Tuple[int, int, int]]:
    """Strip between two concentric rings, walking both in azimuth order."""
    ma, mb = len(a), len(b)
    ja = jb = 0
    tris = []
    while ja < ma or jb < mb:
        next_a = (ja + 1) / ma
        next_b = (jb + 1) / mb
        if ja < ma and (jb >= mb or next_a <= next_b):
            tris.append((a[ja % ma], b[jb % mb], a[(ja + 1) % ma]))
            ja += 1
        else:
            tris.append((a[ja % ma], b[jb % mb], b[(jb + 1) % mb]))
            jb += 1
    return tris


def _parameter_grid(surface: AnalyticSurface, h: float, delta: float) -> TriangleMesh:
    (u0, u1), (v0, v1) = surface.domain
    lu, lv = surface.side_lengths()
    nu = max(1, int(np.ceil(lu / h)))
    nv = max(1, int(np.ceil(lv / h)))
    # parameter offset matching `delta` in physical length, from the mean speed
    du = delta * (u1 - u0) / lu
    dv = delta * (v1 - v0) / lv
    us = np.linspace(u0, u1, nu + 1)
    vs = np.linspace(v0, v1, nv + 1)
    us[0], us[-1] = u0 - du, u1 + du
    vs[0], vs[-1] = v0 - dv, v1 + dv
    U, V = np.meshgrid(us, vs, indexing="ij")
    vertices = surface.point(U.ravel(), V.ravel())
    return TriangleMesh(vertices, grid_triangles(nu, nv))


@dataclass
class RefinementFamily:
    """Meshes of one surface at strictly decreasing steps."""
    surface: AnalyticSurface
    levels: List[Tuple[float, TriangleMesh]]

    def __post_init__(self) -> None:
        steps = [h for h, _ in self.levels]
        if any(b >= a for a, b in zip(steps, steps[1:])):
            raise BadStep(f"refinement steps must be strictly decreasing, got {steps}")

    @classmethod
    def build(cls, surface: AnalyticSurface, steps: Sequence[float],
              boundary_offset: Optional[float] = None) -> "RefinementFamily":
        return cls(surface, [(float(h), sample_triangulation(surface, h, boundary_offset)) for h in steps])

    @property
    def steps(self) -> List[float]:
        return [h for h, _ in self.levels]


# ===================================================================
# SECTION 2: ADMISSIBILITY
# ===================================================================

@dataclass
class AdmissibilityReport:
    h: float
    max_dist: float
    alpha_max: float
    hausdorff_estimate: float
    out_area: float
    diam: float
    injectivity_ok: bool
    reach_violation_fraction: float
    orientation_flips: int
    n_samples: int
    alpha_ratio: float = 0.0
    out_area_ratio: float = 0.0
    checks: Dict[str, bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def lattice_barycentric(n: int, interior_only: bool = False) -> np.ndarray:
    """Barycentric points (i, j, n - i - j) / n of the order-n triangle lattice."""
    rows = []
    for i in range(n + 1):
        for j in range(n + 1 - i):
            k = n - i - j
            if interior_only and (i == 0 or j == 0 or k == 0):
                continue
            rows.append((i, j, k))
    return np.asarray(rows, dtype=float).reshape(-1, 3) / n


def _patch_distance(surface: AnalyticSurface, points: np.ndarray, proj) -> np.ndarray:
    """Distance to the patch itself: |t| inside the domain, else to the clamped foot."""
    cu, cv = surface.clamp(proj.u, proj.v)
    clamped = surface.point(cu, cv)
    outside = np.linalg.norm(points - clamped, axis=-1)
    return np.where(proj.in_domain, np.abs(proj.t), outside)


def admissibility_report(mesh: TriangleMesh, surface: AnalyticSurface, h: float,
                         alpha_ratio_max: float = DEFAULT_ALPHA_RATIO_MAX,
                         out_area_ratio_max: float = DEFAULT_OUT_AREA_RATIO_MAX,
                         surface_samples: int = 10_000) -> AdmissibilityReport:
    """
    Sample every triangle on a barycentric lattice (n = clip(ceil(4 diam / h),
    4, 12) subdivisions, edges and vertices included) and compare with the
    surface. Failures are recorded in `checks`; only a bad step raises.
    """
    if not (np.isfinite(h) and h > 0):
        raise BadStep(f"step h={h} must be a positive number")
    if mesh.n_triangles == 0:
        return AdmissibilityReport(h, 0.0, 0.0, 0.0, 0.0, 0.0, True, 0.0, 0, 0,
                                   checks={"nonempty": False})
    diam = mesh_diameter(mesh)
    n = int(np.clip(np.ceil(4.0 * diam / h), 4, 12))
    bary = lattice_barycentric(n)
    corners = mesh.vertices[mesh.triangles]
    samples = np.einsum("qi,kij->kqj", bary, corners)  # (N_t, q, 3)
    q = bary.shape[0]
    flat = samples.reshape(-1, 3)
    proj = surface.project_points(flat)

    in_reach = np.abs(proj.t) < surface.reach
    inside = in_reach & proj.in_domain
    reach_fraction = float(1.0 - in_reach.mean())
    if reach_fraction > 0:
        logger.warning("%.1f%% of mesh samples are outside the reach of %s",
                       100.0 * reach_fraction, surface.name)

    dist = _patch_distance(surface, flat, proj)
    max_dist = float(dist.max())

    # angle between the triangle normal and the surface normal at the foot
    nx = surface.normal(proj.u, proj.v)
    nt = np.repeat(mesh.normals, q, axis=0)
    sin_a = np.linalg.norm(np.cross(nt, nx), axis=1)
    cos_a = np.abs(np.sum(nt * nx, axis=1))
    alpha = np.arctan2(sin_a, cos_a)
    alpha_max = float(alpha[in_reach].max()) if in_reach.any() else float(np.pi / 2)

    out_fraction = 1.0 - inside.reshape(-1, q).mean(axis=1)
    out_area = float(np.sum(out_fraction * mesh.areas))

    # Hausdorff estimate: mesh -> patch from the samples, patch -> mesh by nearest sample
    _, _, surf_points = surface.surface_samples(surface_samples)
    nearest, _ = cKDTree(flat).query(surf_points)
    hausdorff = float(max(max_dist, float(np.max(nearest))))

    injectivity_ok, flips = _injectivity(mesh, surface, n, h)

    report = AdmissibilityReport(
        h=float(h), max_dist=max_dist, alpha_max=alpha_max, hausdorff_estimate=hausdorff,
        out_area=out_area, diam=diam, injectivity_ok=injectivity_ok,
        reach_violation_fraction=reach_fraction, orientation_flips=flips,
        n_samples=int(flat.shape[0]),
        alpha_ratio=alpha_max / h, out_area_ratio=out_area / h,
    )
    report.checks = {
        "within_reach": reach_fraction == 0.0,
        "distance": max_dist <= h,
        "hausdorff": hausdorff <= h,
        "angle": report.alpha_ratio <= alpha_ratio_max,
        "out_area": report.out_area_ratio <= out_area_ratio_max,
        "injectivity": injectivity_ok,
    }
    logger.info("admissibility at h=%.4g: %s", h, "passed" if report.passed else
                "failed " + ", ".join(k for k, ok in report.checks.items() if not ok))
    return report


def _injectivity(mesh: TriangleMesh, surface: AnalyticSurface, n: int, h: float) -> Tuple[bool, int]:
    """
    Sampled injectivity of the projection on the in-domain part of the mesh:
    no projected triangle flips orientation and no two interior samples of
    different triangles share a foot.
    """
    corner_proj = surface.project_points(mesh.vertices)
    feet = corner_proj.foot[mesh.triangles]
    bary_proj = surface.project_points(mesh.barycenters)
    usable = (np.abs(bary_proj.t) < surface.reach) & bary_proj.in_domain
    nx = surface.normal(bary_proj.u, bary_proj.v)
    projected_normal = np.cross(feet[:, 1] - feet[:, 0], feet[:, 2] - feet[:, 0])
    own = np.sum(mesh.raw_normals * nx, axis=1)
    image = np.sum(projected_normal * nx, axis=1)
    flips = int(np.sum(usable & (np.sign(own) != np.sign(image))))

    interior = lattice_barycentric(n, interior_only=True)
    if interior.size == 0:
        return flips == 0, flips
    pts = np.einsum("qi,kij->kqj", interior, mesh.vertices[mesh.triangles])
    owner = np.repeat(np.arange(mesh.n_triangles), len(interior))
    proj = surface.project_points(pts.reshape(-1, 3))
    keep = (np.abs(proj.t) < surface.reach) & proj.in_domain
    tol = 1e-6 * h
    collisions = 0
    pairs = np.zeros((0, 2), dtype=int)
    if keep.sum() > 1:
        pairs = cKDTree(proj.foot[keep]).query_pairs(tol, output_type="ndarray")
    if len(pairs):
        owners = owner[keep]
        collisions = int(np.sum(owners[pairs[:, 0]] != owners[pairs[:, 1]]))
    if flips or collisions:
        logger.warning("projection is not injective: %d orientation flips, %d coincident feet", flips, collisions)
    return flips == 0 and collisions == 0, flips


# ===================================================================
# SECTION 3: PROJECTION JACOBIAN
# ===================================================================

def jacobian_diagnostic(surface: AnalyticSurface, mesh: TriangleMesh,
                        triangle_ids: Sequence[int], barycentric: np.ndarray) -> np.ndarray:
    """
    det of the projection restricted to the mesh at sample points:
    cos(alpha) / ((1 + t kappa_1)(1 + t kappa_2)), where x = foot + t n_X.
    The side sign eps = <(foot - x)/|foot - x|, n_X> enters as t = -eps d.

    Raises:
        OutsideReach: a sample is at distance >= reach
    """
    ids = np.asarray(triangle_ids, dtype=int)
    bary = np.asarray(barycentric, dtype=float).reshape(len(ids), 3)
    corners = mesh.vertices[mesh.triangles[ids]]
    x = np.einsum("ni,nij->nj", bary, corners)
    proj = surface.project_points(x)
    if np.any(np.abs(proj.t) >= surface.reach):
        raise OutsideReach("jacobian sample outside the reach of the surface")
    gap = proj.foot - x
    d = np.linalg.norm(gap, axis=1)
    nx = surface.normal(proj.u, proj.v)
    eps = np.where(d > 0, np.sign(np.sum(gap * nx, axis=1)), 0.0)
    t = -eps * d
    k1, k2 = surface.principal_curvatures(proj.u, proj.v)
    cos_a = np.abs(np.sum(mesh.normals[ids] * nx, axis=1))
    return cos_a / ((1.0 + t * k1) * (1.0 + t * k2))


# ===================================================================
# SECTION 4: SIGNAL TRANSFER
# ===================================================================

def evaluate_signal(surface: AnalyticSurface, f: SignalFunction, u, v) -> np.ndarray:
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    values = f(u, v, surface.point(u, v))
    return np.broadcast_to(np.asarray(values, dtype=float), u.shape).astype(float)


def discretize_signal(surface: AnalyticSurface, f: SignalFunction, mesh: TriangleMesh,
                      element: str) -> Signal:
    """
    P1: f at the projected foot of every vertex; P0: mean of the three
    projected-vertex values. Feet outside the domain use f at the nearest
    domain point.

    Raises:
        OutsideReach: a vertex is at distance >= reach
        BadParams: element is neither "p0" nor "p1"
    """
    proj = surface.project_points(mesh.vertices)
    if np.any(np.abs(proj.t) >= surface.reach):
        raise OutsideReach(f"{int(np.sum(np.abs(proj.t) >= surface.reach))} vertices are outside the reach")
    cu, cv = surface.clamp(proj.u, proj.v)
    values = evaluate_signal(surface, f, cu, cv)
    if element == "p1":
        return SignalP1(mesh, values)
    if element == "p0":
        return SignalP0(mesh, values[mesh.triangles].mean(axis=1))
    raise BadParams(f"unknown element kind '{element}'")


@dataclass
class LiftResult:
    """Lifted signal at surface nodes; `hit` marks nodes with a mesh point above them."""
    values: np.ndarray
    hit: np.ndarray
    missed_measure: float

    @property
    def n_missed(self) -> int:
        return int(np.sum(~self.hit))


def lift_signal(signal: Signal, mesh: TriangleMesh, surface: AnalyticSurface,
                u, v, weights: Optional[np.ndarray] = None, strict: bool = False) -> LiftResult:
    """
    Evaluate f^l(y) = f(x) where x is the mesh point with projection y.

    The line y + t n_X(y), |t| < reach, is intersected with the triangles
    whose barycenters are nearest to y; the hit with smallest |t| wins.
    Missed nodes get value 0 and hit=False; their summed `weights` are
    reported as missed_measure.

    Raises:
        LiftMiss: strict and at least one node has no mesh point above it
    """
    require_same_mesh(signal, mesh)
    u = np.asarray(u, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    origin = surface.point(u, v)
    direction = surface.normal(u, v)
    k = min(LIFT_CANDIDATES, mesh.n_triangles)
    _, cand = cKDTree(mesh.barycenters).query(origin, k=k)
    cand = np.asarray(cand).reshape(len(u), k)

    tri = mesh.triangles[cand]  # (n, k, 3)
    p0 = mesh.vertices[tri[..., 0]]
    e1 = mesh.vertices[tri[..., 1]] - p0
    e2 = mesh.vertices[tri[..., 2]] - p0
    d = direction[:, None, :]
    pvec = np.cross(d, e2)
    det = np.sum(e1 * pvec, axis=-1)
    ok = np.abs(det) > 1e-300
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = origin[:, None, :] - p0
    b1 = np.sum(s * pvec, axis=-1) * inv
    qvec = np.cross(s, e1)
    b2 = np.sum(d * qvec, axis=-1) * inv
    t = np.sum(e2 * qvec, axis=-1) * inv
    tol = 1e-12
    valid = ok & (b1 >= -tol) & (b2 >= -tol) & (b1 + b2 <= 1.0 + tol) & (np.abs(t) < surface.reach)
    score = np.where(valid, np.abs(t), np.inf)
    best = np.argmin(score, axis=1)
    rows = np.arange(len(u))
    hit = np.isfinite(score[rows, best])

    chosen = cand[rows, best]
    if isinstance(signal, SignalP1):
        lam = np.stack([1.0 - b1[rows, best] - b2[rows, best], b1[rows, best], b2[rows, best]], axis=1)
        values = np.sum(lam * signal.values[mesh.triangles[chosen]], axis=1)
    else:
        values = signal.values[chosen].astype(float)
    values = np.where(hit, values, 0.0)

    missed = 0.0
    if weights is not None:
        missed = float(np.sum(np.asarray(weights, dtype=float).reshape(-1)[~hit]))
    if not hit.all():
        if strict:
            raise LiftMiss(f"{int(np.sum(~hit))} surface nodes have no mesh point above them")
        logger.warning("lift: %d of %d surface nodes missed the mesh", int(np.sum(~hit)), len(u))
    return LiftResult(values, hit, missed)

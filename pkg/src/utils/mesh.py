"""
Triangle Mesh Module
====================
Immutable triangle-mesh container and the per-triangle geometric quantities
used by every other module.

Key Features:
- Validation at construction (index range, repeated vertices, edges shared by
  more than two triangles, degenerate triangles)
- Removal of unreferenced vertices
- Cached per-triangle geometry: area, unit normal, barycenter, edge vectors,
  longest edge
- Mesh-level measures: diameter, regularity constant, total area
- Small builders used by tests and experiments (grids, icospheres)

Conventions:
    Vertex indices are 0-based. For a triangle (v1, v2, v3) the edge vectors
    are e1 = v3 - v2, e2 = v1 - v3, e3 = v2 - v1 and the normal is
    (v2 - v1) x (v3 - v1); the stored index order defines its sign.
"""
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .errors import DegenerateTriangle, EmptyMesh, InvalidMesh

# area <= DEGENERACY_RATIO * (longest edge)^2 marks a triangle as degenerate
DEGENERACY_RATIO = 1e-14


@dataclass(frozen=True)
class TriangleGeometry:
    """Geometry of a single non-degenerate triangle."""
    area: float
    unit_normal: np.ndarray
    barycenter: np.ndarray
    edges: Tuple[np.ndarray, np.ndarray, np.ndarray]
    diameter: float


def _frozen(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


class TriangleMesh:
    """
    A finite set of triangles sharing vertices.

    The mesh is immutable after construction; all geometric caches are
    computed once here and exposed as read-only arrays, so a mesh can be read
    from many threads at once.

    Attributes:
        vertices (np.ndarray): (N_v, 3) vertex positions
        triangles (np.ndarray): (N_t, 3) vertex indices
        areas (np.ndarray): (N_t,) triangle areas |T_k|
        normals (np.ndarray): (N_t, 3) unit normals (zero rows for degenerate triangles)
        barycenters (np.ndarray): (N_t, 3) barycenters v_0^k
        edge_vectors (np.ndarray): (N_t, 3, 3) rows e_1^k, e_2^k, e_3^k
        diameters (np.ndarray): (N_t,) longest edge length of each triangle
        degenerate (np.ndarray): (N_t,) boolean degeneracy mask

    Example:
        mesh = TriangleMesh([(0, 0, 0), (1, 0, 0), (0, 1, 0)], [(0, 1, 2)])
        mesh.areas  # array([0.5])
    """

    def __init__(self,
                 vertices: Sequence[Sequence[float]],
                 triangles: Sequence[Sequence[int]],
                 allow_degenerate: bool = False,
                 cleanup: bool = True) -> None:
        """
        Build and validate a mesh.

        Args:
            vertices: sequence of 3D points
            triangles: sequence of index triples into `vertices`
            allow_degenerate: keep degenerate triangles (flagged in `degenerate`)
                instead of raising DegenerateTriangle
            cleanup: drop vertices that no triangle references

        Raises:
            InvalidMesh: malformed arrays, out-of-range or repeated indices,
                or an edge shared by more than two triangles
            DegenerateTriangle: a degenerate triangle and allow_degenerate is False
        """
        v = np.asarray(vertices, dtype=float)
        t = np.asarray(triangles, dtype=np.int64)
        if v.size == 0:
            v = v.reshape(0, 3)
        if t.size == 0:
            t = t.reshape(0, 3)
        if v.ndim != 2 or v.shape[1] != 3:
            raise InvalidMesh(f"vertices must have shape (N, 3), got {v.shape}")
        if t.ndim != 2 or t.shape[1] != 3:
            raise InvalidMesh(f"triangles must have shape (M, 3), got {t.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidMesh("vertex coordinates must be finite")

        if len(t):
            if t.min() < 0 or t.max() >= len(v):
                bad = int(np.nonzero((t < 0).any(axis=1) | (t >= len(v)).any(axis=1))[0][0])
                raise InvalidMesh(f"triangle {bad} has a vertex index out of range")
            repeated = (t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])
            if repeated.any():
                raise InvalidMesh(f"triangle {int(np.nonzero(repeated)[0][0])} repeats a vertex index")

        origin = np.arange(len(v))
        if cleanup and len(v):
            used = np.zeros(len(v), dtype=bool)
            used[t.ravel()] = True
            if not used.all():
                remap = -np.ones(len(v), dtype=np.int64)
                remap[used] = np.arange(int(used.sum()))
                origin = np.nonzero(used)[0]
                v = v[used]
                t = remap[t]

        # vertex_origin[i] = index of vertex i in the input list
        self.vertex_origin = _frozen(origin)
        self.vertices = _frozen(v.copy())
        self.triangles = _frozen(t.copy())

        self._build_edges()
        self._build_geometry()

        if not allow_degenerate and self.degenerate.any():
            k = int(np.nonzero(self.degenerate)[0][0])
            raise DegenerateTriangle(k, float(self.areas[k]))

    # ===================================================================
    # SECTION 1: CACHED GEOMETRY AND TOPOLOGY
    # ===================================================================

    def _build_edges(self) -> None:
        t = self.triangles
        # local edge i is opposite vertex i: (v2,v3), (v3,v1), (v1,v2)
        local = np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1).reshape(-1, 2)
        sorted_pairs = np.sort(local, axis=1)
        if len(sorted_pairs):
            edges, inverse, counts = np.unique(sorted_pairs, axis=0, return_inverse=True, return_counts=True)
            inverse = inverse.reshape(-1)
        else:
            edges = np.zeros((0, 2), dtype=np.int64)
            inverse = np.zeros(0, dtype=np.int64)
            counts = np.zeros(0, dtype=np.int64)
        if len(counts) and counts.max() > 2:
            e = edges[int(np.argmax(counts))]
            raise InvalidMesh(f"edge ({e[0]}, {e[1]}) is shared by more than two triangles")

        self.edges = _frozen(edges)
        self.edge_counts = _frozen(counts)
        # triangle_edges[k, i] = index into `edges` of the edge opposite local vertex i
        self.triangle_edges = _frozen(inverse.reshape(-1, 3))
        self.boundary_edges = _frozen(edges[counts == 1])

    def _build_geometry(self) -> None:
        v = self.vertices
        t = self.triangles
        p1, p2, p3 = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
        e1, e2, e3 = p3 - p2, p1 - p3, p2 - p1
        cross = np.cross(p2 - p1, p3 - p1)
        norm = np.linalg.norm(cross, axis=1)
        lengths = np.stack([np.linalg.norm(e1, axis=1),
                            np.linalg.norm(e2, axis=1),
                            np.linalg.norm(e3, axis=1)], axis=1)
        diameters = lengths.max(axis=1) if len(t) else np.zeros(0)
        areas = 0.5 * norm
        degenerate = areas <= DEGENERACY_RATIO * diameters ** 2

        normals = np.zeros_like(cross)
        ok = ~degenerate
        normals[ok] = cross[ok] / norm[ok, None]

        self.areas = _frozen(areas)
        self.normals = _frozen(normals)
        self.raw_normals = _frozen(cross)
        self.barycenters = _frozen((p1 + p2 + p3) / 3.0)
        self.edge_vectors = _frozen(np.stack([e1, e2, e3], axis=1))
        self.edge_lengths = _frozen(lengths)
        self.diameters = _frozen(diameters)
        self.degenerate = _frozen(degenerate)

    # ===================================================================
    # SECTION 2: ACCESSORS
    # ===================================================================

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def check_triangle(self, k: int) -> None:
        """Raise IndexError for an out-of-range triangle index."""
        if not 0 <= k < self.n_triangles:
            raise IndexError(f"triangle index {k} out of range [0, {self.n_triangles})")

    def require_nondegenerate(self) -> None:
        """Raise DegenerateTriangle for the first degenerate triangle, if any."""
        if self.degenerate.any():
            k = int(np.nonzero(self.degenerate)[0][0])
            raise DegenerateTriangle(k, float(self.areas[k]))

    # ===================================================================
    # SECTION 3: DERIVED MESHES
    # ===================================================================

    def transformed(self, rotation: Optional[np.ndarray] = None,
                    translation: Optional[Sequence[float]] = None) -> "TriangleMesh":
        """Return a copy with every vertex mapped to rotation @ x + translation."""
        v = np.asarray(self.vertices, dtype=float)
        if rotation is not None:
            v = v @ np.asarray(rotation, dtype=float).T
        if translation is not None:
            v = v + np.asarray(translation, dtype=float)
        return TriangleMesh(v, self.triangles, allow_degenerate=True, cleanup=False)

    def permuted(self, vertex_order: np.ndarray, triangle_order: np.ndarray) -> "TriangleMesh":
        """
        Relabel vertices and triangles.

        Args:
            vertex_order: new_vertices[i] = vertices[vertex_order[i]]
            triangle_order: new_triangles[k] = triangles[triangle_order[k]] (relabelled)
        """
        vertex_order = np.asarray(vertex_order)
        inverse = np.empty_like(vertex_order)
        inverse[vertex_order] = np.arange(len(vertex_order))
        tris = inverse[self.triangles[np.asarray(triangle_order)]]
        return TriangleMesh(self.vertices[vertex_order], tris, allow_degenerate=True, cleanup=False)

    def __repr__(self) -> str:
        return f"TriangleMesh(n_vertices={self.n_vertices}, n_triangles={self.n_triangles})"


# ===================================================================
# SECTION 4: PER-TRIANGLE AND MESH-LEVEL OPERATIONS
# ===================================================================

def triangle_geometry(mesh: TriangleMesh, k: int) -> TriangleGeometry:
    """
    Geometry of triangle k.

    Raises:
        IndexError: k out of range
        DegenerateTriangle: area below the degeneracy threshold
    """
    mesh.check_triangle(k)
    if mesh.degenerate[k]:
        raise DegenerateTriangle(k, float(mesh.areas[k]))
    e = mesh.edge_vectors[k]
    return TriangleGeometry(
        area=float(mesh.areas[k]),
        unit_normal=mesh.normals[k].copy(),
        barycenter=mesh.barycenters[k].copy(),
        edges=(e[0].copy(), e[1].copy(), e[2].copy()),
        diameter=float(mesh.diameters[k]),
    )


def edge_midpoints(mesh: TriangleMesh, k: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Midpoints v_12, v_13, v_23 of triangle k (defined for degenerate triangles too)."""
    mesh.check_triangle(k)
    p1, p2, p3 = mesh.vertices[mesh.triangles[k]]
    return (p1 + p2) / 2.0, (p1 + p3) / 2.0, (p2 + p3) / 2.0


def mesh_diameter(mesh: TriangleMesh) -> float:
    """Longest edge over all triangles."""
    if mesh.n_triangles == 0:
        raise EmptyMesh("mesh has no triangles")
    return float(mesh.diameters.max())


def regularity_constant(mesh: TriangleMesh) -> float:
    """
    max_k h_T / rho_T where h_T is the longest edge and rho_T = 4 |T| / perimeter
    is the diameter of the inscribed circle.
    """
    if mesh.n_triangles == 0:
        raise EmptyMesh("mesh has no triangles")
    mesh.require_nondegenerate()
    perimeter = mesh.edge_lengths.sum(axis=1)
    rho = 4.0 * mesh.areas / perimeter
    return float(np.max(mesh.diameters / rho))


def total_area(mesh: TriangleMesh) -> float:
    """Sum of the triangle areas (0 for an empty mesh)."""
    return float(np.sum(mesh.areas))


# ===================================================================
# SECTION 5: BUILDERS
# ===================================================================

def grid_mesh(nx: int, ny: int, size: Tuple[float, float] = (1.0, 1.0),
              origin: Tuple[float, float] = (0.0, 0.0)) -> TriangleMesh:
    """
    Planar nx-by-ny grid in the z = 0 plane, each cell split along its
    (lower-left, upper-right) diagonal.
    """
    if nx < 1 or ny < 1:
        raise InvalidMesh("grid needs at least one cell per direction")
    xs = origin[0] + np.linspace(0.0, size[0], nx + 1)
    ys = origin[1] + np.linspace(0.0, size[1], ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.stack([X.ravel(), Y.ravel(), np.zeros(X.size)], axis=1)
    tris = grid_triangles(nx, ny)
    return TriangleMesh(vertices, tris)


def grid_triangles(nu: int, nv: int) -> np.ndarray:
    """Triangles of an (nu+1)-by-(nv+1) vertex grid stored in row-major (u, v) order."""
    i, j = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
    i, j = i.ravel(), j.ravel()
    a = i * (nv + 1) + j
    b = (i + 1) * (nv + 1) + j
    c = (i + 1) * (nv + 1) + j + 1
    d = i * (nv + 1) + j + 1
    lower = np.stack([a, b, c], axis=1)
    upper = np.stack([a, c, d], axis=1)
    return np.stack([lower, upper], axis=1).reshape(-1, 3)


def unit_square_grid(n: int) -> TriangleMesh:
    """Unit square [0, 1]^2 split into n-by-n cells (2 n^2 triangles)."""
    return grid_mesh(n, n)


def icosphere(subdivisions: int = 0, radius: float = 1.0) -> TriangleMesh:
    """Icosahedron refined `subdivisions` times, vertices projected on the sphere."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = [(-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
             (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
             (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    points = [np.asarray(p, dtype=float) / np.linalg.norm(p) for p in verts]

    for _ in range(subdivisions):
        cache: Dict[Tuple[int, int], int] = {}

        def midpoint(i: int, j: int) -> int:
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = points[i] + points[j]
                points.append(m / np.linalg.norm(m))
                cache[key] = len(points) - 1
            return cache[key]

        refined = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            refined.extend([(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)])
        faces = refined

    return TriangleMesh(radius * np.asarray(points), faces)

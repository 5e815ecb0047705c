"""
Reference quadrature rules.

Triangle rules are returned in barycentric form with weights summing to 1,
so that the integral over a triangle T is |T| * sum(w * f(points)).
Gauss-Legendre rules come from numpy and are cached per order.
"""

from functools import lru_cache
from typing import Tuple

import numpy as np

from .mesh import TriangleMesh


@lru_cache(maxsize=None)
def gauss_legendre(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the `order`-point Gauss-Legendre rule on [0, 1]."""
    if order < 1:
        raise ValueError(f"Gauss-Legendre order must be >= 1, got {order}")
    x, w = np.polynomial.legendre.leggauss(order)
    nodes, weights = 0.5 * (x + 1.0), 0.5 * w
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights


def composite_gauss_legendre(a: float, b: float, panels: int, order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Composite rule on [a, b] with `panels` equal panels of `order` nodes each."""
    panels = max(1, int(panels))
    x, w = gauss_legendre(order)
    edges = np.linspace(a, b, panels + 1)
    width = np.diff(edges)
    nodes = (edges[:-1, None] + width[:, None] * x[None, :]).ravel()
    weights = (width[:, None] * w[None, :]).ravel()
    return nodes, weights


@lru_cache(maxsize=None)
def _dunavant5() -> Tuple[np.ndarray, np.ndarray]:
    s = np.sqrt(15.0)
    a1, b1 = (9.0 - 2.0 * s) / 21.0, (6.0 + s) / 21.0
    a2, b2 = (9.0 + 2.0 * s) / 21.0, (6.0 - s) / 21.0
    w1, w2 = (155.0 + s) / 1200.0, (155.0 - s) / 1200.0
    points = np.array([
        [1 / 3, 1 / 3, 1 / 3],
        [a1, b1, b1], [b1, a1, b1], [b1, b1, a1],
        [a2, b2, b2], [b2, a2, b2], [b2, b2, a2],
    ])
    weights = np.array([0.225, w1, w1, w1, w2, w2, w2])
    return points, weights


@lru_cache(maxsize=None)
def _collapsed_gauss(n: int) -> Tuple[np.ndarray, np.ndarray]:
    # square-to-triangle map (s, t) -> (1 - s, s (1 - t), s t), Jacobian s
    x, w = gauss_legendre(n)
    S, T = np.meshgrid(x, x, indexing="ij")
    WS, WT = np.meshgrid(w, w, indexing="ij")
    S, T, W = S.ravel(), T.ravel(), (WS * WT).ravel()
    points = np.stack([1.0 - S, S * (1.0 - T), S * T], axis=1)
    weights = 2.0 * W * S
    return points, weights


def triangle_rule(degree: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Barycentric points (q, 3) and weights (q,) exact for polynomials of the
    given total degree.

    Degree <= 5 uses the 7-point symmetric rule; higher degrees use a
    collapsed tensor Gauss-Legendre rule.
    """
    if degree < 0:
        raise ValueError(f"degree must be >= 0, got {degree}")
    if degree <= 5:
        return _dunavant5()
    return _collapsed_gauss((degree + 3) // 2)


def mesh_quadrature(mesh: TriangleMesh, degree: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Quadrature nodes on every triangle.

    Returns:
        tuple: (points (N_t, q, 3), barycentric (q, 3), weights (N_t, q))
        where weights already include the triangle areas.
    """
    bary, w = triangle_rule(degree)
    corners = mesh.vertices[mesh.triangles]  # (N_t, 3, 3)
    points = np.einsum("qi,kij->kqj", bary, corners)
    weights = mesh.areas[:, None] * w[None, :]
    return points, bary, weights

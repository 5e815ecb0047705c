"""
Mesh Topology - connectivity graphs built on top of a TriangleMesh.

The vertex graph (vertices joined by mesh edges) gives connected components
and boundary loops; the dual graph (triangles joined through shared edges)
gives orientation consistency and the jump total variation of P0 signals.
"""

from typing import Dict, List, Tuple

import networkx as nx
import numpy as np

from .mesh import TriangleMesh


def vertex_graph(mesh: TriangleMesh) -> nx.Graph:
    """Undirected graph on vertex indices with one edge per mesh edge."""
    G = nx.Graph()
    G.add_nodes_from(range(mesh.n_vertices))
    G.add_edges_from((int(a), int(b)) for a, b in mesh.edges)
    return G


def dual_graph(mesh: TriangleMesh) -> nx.Graph:
    """
    Graph on triangle indices; two triangles are adjacent when they share an
    edge. Each graph edge stores the shared mesh edge as `vertices` and its
    `length`.
    """
    G = nx.Graph()
    G.add_nodes_from(range(mesh.n_triangles))
    owners: Dict[int, List[int]] = {}
    for k, row in enumerate(mesh.triangle_edges):
        for e in row:
            owners.setdefault(int(e), []).append(k)
    for e, tris in owners.items():
        if len(tris) == 2:
            a, b = mesh.edges[e]
            length = float(np.linalg.norm(mesh.vertices[a] - mesh.vertices[b]))
            G.add_edge(tris[0], tris[1], vertices=(int(a), int(b)), length=length)
    return G


def connected_components(mesh: TriangleMesh) -> List[List[int]]:
    """Vertex sets of the connected components, sorted by smallest vertex index."""
    components = [sorted(c) for c in nx.connected_components(vertex_graph(mesh))]
    return sorted(components, key=lambda c: c[0])


def boundary_loops(mesh: TriangleMesh) -> List[List[int]]:
    """
    Closed vertex cycles formed by the boundary edges.

    Each component of the boundary-edge graph is walked as a cycle; a
    component that is not a simple cycle (pinched boundary) is returned as its
    sorted vertex list.
    """
    G = nx.Graph()
    G.add_edges_from((int(a), int(b)) for a, b in mesh.boundary_edges)
    loops = []
    for nodes in nx.connected_components(G):
        sub = G.subgraph(nodes)
        if all(d == 2 for _, d in sub.degree()):
            cycle = nx.cycle_basis(sub)[0]
            start = cycle.index(min(cycle))
            loops.append(cycle[start:] + cycle[:start])
        else:
            loops.append(sorted(nodes))
    return sorted(loops, key=lambda loop: loop[0])


def _directed_edge_sign(tri: np.ndarray, a: int, b: int) -> int:
    """+1 when the triangle traverses (a, b) in that order, -1 for (b, a)."""
    for i in range(3):
        p, q = int(tri[i]), int(tri[(i + 1) % 3])
        if (p, q) == (a, b):
            return 1
        if (p, q) == (b, a):
            return -1
    raise ValueError("edge not in triangle")


def orientation_consistent(mesh: TriangleMesh) -> Tuple[bool, int]:
    """
    Check that neighbouring triangles traverse their shared edge in opposite
    directions.

    Returns:
        tuple: (consistent, number of inconsistent shared edges)
    """
    bad = 0
    for s, t, data in dual_graph(mesh).edges(data=True):
        a, b = data["vertices"]
        if _directed_edge_sign(mesh.triangles[s], a, b) == _directed_edge_sign(mesh.triangles[t], a, b):
            bad += 1
    return bad == 0, bad


def euler_characteristic(mesh: TriangleMesh) -> int:
    """V - E + F."""
    return mesh.n_vertices - len(mesh.edges) + mesh.n_triangles


def jump_total_variation(mesh: TriangleMesh, values: np.ndarray, mask: np.ndarray = None) -> float:
    """
    Total variation of a piecewise-constant signal: sum over interior edges of
    |f_s - f_t| times the edge length.

    Args:
        values: one value per triangle
        mask: optional boolean per triangle; only edges whose two triangles
            are both selected contribute
    """
    values = np.asarray(values, dtype=float)
    total = 0.0
    # sorted edge order keeps the sum independent of graph insertion order
    for s, t, data in sorted(dual_graph(mesh).edges(data=True), key=lambda e: (min(e[0], e[1]), max(e[0], e[1]))):
        if mask is not None and not (mask[s] and mask[t]):
            continue
        total += abs(values[s] - values[t]) * data["length"]
    return float(total)

"""
Finite Element Signals
======================
P0 (one constant per triangle) and P1 (one value per vertex, affine on each
triangle) signal spaces on a TriangleMesh, their discrete norms and
derivative operators, and the analytic derivatives of those norms with
respect to the signal values.

Every operation is vectorised over triangles; sums are plain numpy
reductions over arrays in triangle order, so results do not depend on how
many threads the caller uses.
"""

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from .errors import BadExponent, LengthMismatch, MeshMismatch, NonpositiveEpsilon, ValidationError
from .mesh import TriangleMesh

# vertex values within SIGN_TOLERANCE * max|f| of zero count as zero when splitting
SIGN_TOLERANCE = 1e-14


# ===================================================================
# SECTION 1: SIGNAL TYPES
# ===================================================================

def _checked_values(values, expected: int, what: str) -> np.ndarray:
    array = np.array(values, dtype=float).reshape(-1)
    if len(array) != expected:
        raise LengthMismatch(f"{what} signal needs {expected} values, got {len(array)}")
    if not np.all(np.isfinite(array)):
        raise ValidationError(f"{what} signal contains non-finite values")
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class SignalP0:
    """Piecewise-constant signal: values[k] is the constant on triangle k."""
    mesh: TriangleMesh
    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _checked_values(self.values, self.mesh.n_triangles, "P0"))

    element = "p0"


@dataclass(frozen=True, eq=False)
class SignalP1:
    """Continuous piecewise-affine signal: values[i] is the value at vertex i."""
    mesh: TriangleMesh
    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _checked_values(self.values, self.mesh.n_vertices, "P1"))

    element = "p1"

    def triangle_values(self) -> np.ndarray:
        """(N_t, 3) values at the corners of every triangle."""
        return self.values[self.mesh.triangles]


Signal = Union[SignalP0, SignalP1]


@dataclass(frozen=True)
class DiscreteGradient:
    """Per-triangle gradient vectors, each lying in its triangle's plane."""
    vectors: np.ndarray


def require_same_mesh(signal: Signal, mesh: TriangleMesh) -> None:
    if signal.mesh is not mesh:
        raise MeshMismatch("signal is defined on a different mesh")


def make_signal(mesh: TriangleMesh, values, element: str) -> Signal:
    """Build a SignalP0 or SignalP1 from an element tag ('p0' or 'p1')."""
    if element == "p0":
        return SignalP0(mesh, values)
    if element == "p1":
        return p1_assemble(values, mesh)
    raise ValidationError(f"unknown element kind '{element}' (expected p0 or p1)")


# ===================================================================
# SECTION 2: PROJECTION AND ASSEMBLY
# ===================================================================

def p0_project(f: SignalP1) -> SignalP0:
    """Value at each barycenter: the mean of the three vertex values."""
    return SignalP0(f.mesh, f.triangle_values().mean(axis=1))


def p0_project_adjoint(mesh: TriangleMesh, per_triangle: np.ndarray) -> np.ndarray:
    """Transpose of p0_project: each vertex collects 1/3 of every incident triangle's entry."""
    out = np.zeros(mesh.n_vertices)
    share = np.repeat(np.asarray(per_triangle, dtype=float)[:, None] / 3.0, 3, axis=1)
    np.add.at(out, mesh.triangles, share)
    return out


def p1_assemble(values, mesh: TriangleMesh) -> SignalP1:
    """Coefficients in the hat-function basis are the vertex values themselves."""
    return SignalP1(mesh, values)


# ===================================================================
# SECTION 3: NORMS
# ===================================================================

def lp_norm_p0(f: SignalP0, p: float) -> float:
    """p-th power of the L^p norm of a P0 signal: sum_k |T_k| |f_k|^p."""
    if p < 1:
        raise BadExponent(f"p must be >= 1, got {p}")
    return float(np.sum(f.mesh.areas * np.abs(f.values) ** p))


def _midpoints(F: np.ndarray) -> np.ndarray:
    # columns: f_12, f_13, f_23
    return np.stack([(F[:, 0] + F[:, 1]) / 2.0,
                     (F[:, 0] + F[:, 2]) / 2.0,
                     (F[:, 1] + F[:, 2]) / 2.0], axis=1)


def newton_cotes_lp(f: SignalP1, p: int) -> float:
    """Edge-midpoint rule: (1/3) sum_k |T_k| (|f_12|^p + |f_13|^p + |f_23|^p), p in {1, 2}."""
    if p not in (1, 2):
        raise BadExponent(f"Newton-Cotes norm is defined for p in {{1, 2}}, got {p}")
    m = _midpoints(f.triangle_values())
    return float(np.sum(f.mesh.areas / 3.0 * np.sum(np.abs(m) ** p, axis=1)))


def newton_cotes_l2_gradient(f: SignalP1) -> np.ndarray:
    """Derivative of newton_cotes_lp(f, 2) with respect to the vertex values."""
    m = _midpoints(f.triangle_values())
    w = f.mesh.areas[:, None] / 3.0
    local = w * np.stack([m[:, 0] + m[:, 1], m[:, 0] + m[:, 2], m[:, 1] + m[:, 2]], axis=1)
    out = np.zeros(f.mesh.n_vertices)
    np.add.at(out, f.mesh.triangles, local)
    return out


def _abs(x: np.ndarray, eps: float) -> np.ndarray:
    return np.abs(x) if eps == 0.0 else np.sqrt(x * x + eps * eps)


def _abs_prime(x: np.ndarray, eps: float) -> np.ndarray:
    return np.sign(x) if eps == 0.0 else x / np.sqrt(x * x + eps * eps)


def _split_l1(f: SignalP1, eps: float, with_gradient: bool) -> Tuple[float, np.ndarray]:
    """
    Newton-Cotes integral of phi(f), phi(x) = sqrt(x^2 + eps^2) (|x| for eps = 0).

    A triangle whose vertex values change sign is cut along the zero line of
    the affine interpolant into a corner triangle (a, v4, v5) and the
    triangles (v4, b, c), (v4, c, v5), where a is the vertex alone in its
    sign group and v4, v5 lie on edges ab, ac.
    """
    mesh = f.mesh
    F = f.triangle_values().copy()
    scale = np.max(np.abs(F)) if F.size else 0.0
    F[np.abs(F) <= SIGN_TOLERANCE * scale] = 0.0
    A = mesh.areas
    pos, neg = F > 0, F < 0
    split = pos.any(axis=1) & neg.any(axis=1)

    contrib = np.zeros(len(F))
    local_grad = np.zeros_like(F)

    # one-signed triangles: plain rule
    whole = ~split
    if whole.any():
        m = _midpoints(F[whole])
        contrib[whole] = A[whole] / 3.0 * _abs(m, eps).sum(axis=1)
        if with_gradient:
            d = _abs_prime(m, eps) / 2.0
            w = A[whole, None] / 3.0
            local_grad[whole] = w * np.stack([d[:, 0] + d[:, 1], d[:, 0] + d[:, 2], d[:, 1] + d[:, 2]], axis=1)

    if split.any():
        Fs, As = F[split], A[split]
        lone = np.where(neg[split].sum(axis=1) == 1, np.argmax(neg[split], axis=1), np.argmax(pos[split], axis=1))
        order = np.stack([lone, (lone + 1) % 3, (lone + 2) % 3], axis=1)
        fa, fb, fc = np.take_along_axis(Fs, order, axis=1).T
        tb, tc = fa / (fa - fb), fa / (fa - fc)
        phi0 = _abs(np.zeros_like(fa), eps)
        P = 2.0 * _abs(fa / 2.0, eps) + phi0
        Q = _abs(fb / 2.0, eps) + _abs(fc / 2.0, eps) + _abs((fb + fc) / 2.0, eps)
        R = 2.0 * _abs(fc / 2.0, eps) + phi0
        w = As / 3.0
        contrib[split] = w * (tb * tc * P + (1.0 - tb) * Q + tb * (1.0 - tc) * R)

        if with_gradient:
            dS_dtb = w * (tc * P - Q + (1.0 - tc) * R)
            dS_dtc = w * (tb * P - tb * R)
            dtb_dfa, dtb_dfb = -fb / (fa - fb) ** 2, fa / (fa - fb) ** 2
            dtc_dfa, dtc_dfc = -fc / (fa - fc) ** 2, fa / (fa - fc) ** 2
            mid = _abs_prime((fb + fc) / 2.0, eps) / 2.0
            dQ_dfb = _abs_prime(fb / 2.0, eps) / 2.0 + mid
            dQ_dfc = _abs_prime(fc / 2.0, eps) / 2.0 + mid
            ga = w * tb * tc * _abs_prime(fa / 2.0, eps) + dS_dtb * dtb_dfa + dS_dtc * dtc_dfa
            gb = w * (1.0 - tb) * dQ_dfb + dS_dtb * dtb_dfb
            gc = w * ((1.0 - tb) * dQ_dfc + tb * (1.0 - tc) * _abs_prime(fc / 2.0, eps)) + dS_dtc * dtc_dfc
            g = np.zeros_like(Fs)
            np.put_along_axis(g, order, np.stack([ga, gb, gc], axis=1), axis=1)
            local_grad[split] = g

    total = float(np.sum(contrib))
    if not with_gradient:
        return total, np.zeros(0)
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, mesh.triangles, local_grad)
    return total, out


def l1_exact(f: SignalP1) -> float:
    """Exact L^1 norm of a P1 signal."""
    return _split_l1(f, 0.0, with_gradient=False)[0]


def l1_smoothed(f: Signal, eps: float) -> float:
    """
    L^1 norm with |x| replaced by sqrt(x^2 + eps^2); within eps * total_area
    of the exact value.
    """
    if eps <= 0:
        raise NonpositiveEpsilon(f"smoothing epsilon must be > 0, got {eps}")
    if isinstance(f, SignalP0):
        return float(np.sum(f.mesh.areas * _abs(f.values, eps)))
    return _split_l1(f, eps, with_gradient=False)[0]


def l1_smoothed_gradient(f: Signal, eps: float) -> np.ndarray:
    """Derivative of l1_smoothed with respect to the signal values."""
    if eps <= 0:
        raise NonpositiveEpsilon(f"smoothing epsilon must be > 0, got {eps}")
    if isinstance(f, SignalP0):
        return f.mesh.areas * _abs_prime(f.values, eps)
    return _split_l1(f, eps, with_gradient=True)[1]


# ===================================================================
# SECTION 4: GRADIENT-BASED QUANTITIES
# ===================================================================

def _gradient_basis(mesh: TriangleMesh) -> np.ndarray:
    """(N_t, 3, 3): b_i = N x e_i / |N|^2 so that grad f = sum_i f_i b_i."""
    mesh.require_nondegenerate()
    N = mesh.raw_normals
    n2 = np.einsum("kj,kj->k", N, N)
    return np.cross(N[:, None, :], mesh.edge_vectors) / n2[:, None, None]


def gradient(f: SignalP1) -> DiscreteGradient:
    """Gradient of the affine interpolant on every triangle."""
    b = _gradient_basis(f.mesh)
    return DiscreteGradient(np.einsum("ki,kij->kj", f.triangle_values(), b))


def h1_seminorm(f: SignalP1) -> float:
    """sum_k |T_k| |grad f|^2."""
    G = gradient(f).vectors
    return float(np.sum(f.mesh.areas * np.einsum("kj,kj->k", G, G)))


def h1_gradient(f: SignalP1) -> np.ndarray:
    """Derivative of h1_seminorm with respect to the vertex values."""
    b = _gradient_basis(f.mesh)
    G = np.einsum("ki,kij->kj", f.triangle_values(), b)
    local = 2.0 * f.mesh.areas[:, None] * np.einsum("kj,kij->ki", G, b)
    out = np.zeros(f.mesh.n_vertices)
    np.add.at(out, f.mesh.triangles, local)
    return out


def total_variation(f: SignalP1, eps: float = 0.0, mask: np.ndarray = None) -> float:
    """
    sum_k |T_k| sqrt(|grad f|^2 + eps^2); eps = 0 gives the plain discrete
    total variation. `mask` restricts the sum to selected triangles.
    """
    if eps < 0:
        raise NonpositiveEpsilon(f"smoothing epsilon must be >= 0, got {eps}")
    G = gradient(f).vectors
    terms = f.mesh.areas * np.sqrt(np.einsum("kj,kj->k", G, G) + eps * eps)
    if mask is not None:
        terms = terms[np.asarray(mask, dtype=bool)]
    return float(np.sum(terms))


def total_variation_gradient(f: SignalP1, eps: float) -> np.ndarray:
    """Derivative of total_variation(f, eps) with respect to the vertex values (eps > 0)."""
    if eps <= 0:
        raise NonpositiveEpsilon(f"smoothing epsilon must be > 0, got {eps}")
    b = _gradient_basis(f.mesh)
    G = np.einsum("ki,kij->kj", f.triangle_values(), b)
    norm = np.sqrt(np.einsum("kj,kj->k", G, G) + eps * eps)
    local = (f.mesh.areas / norm)[:, None] * np.einsum("kj,kij->ki", G, b)
    out = np.zeros(f.mesh.n_vertices)
    np.add.at(out, f.mesh.triangles, local)
    return out

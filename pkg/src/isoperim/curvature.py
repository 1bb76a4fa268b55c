"""Discrete normals, curvatures and the deviation field Z.

Mean curvature uses the arithmetic-mean convention, so a sphere of radius
R has H = 1/R.  Switch ``MEAN_CURVATURE_FACTOR`` to 1.0 for the sum
convention.  All L^p norms use the probability normalization
``((1/P) ∫ |f|^p)^(1/p)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _kernels as K
from .mesh import AnnulusSpec, BoundaryMesh, _require_valid

__all__ = [
    "MEAN_CURVATURE_FACTOR",
    "CurvatureField",
    "ZField",
    "CenterOnBoundaryError",
    "vertex_areas",
    "vertex_normals",
    "cotan_laplacian",
    "curvature_field",
    "curve_curvature",
    "z_field",
    "lp_norm",
    "outside_annulus_curvature_integral",
    "angle_defects",
    "euler_characteristic",
]

# H = factor * |mean-curvature normal|; 0.5 gives the mean of the principal curvatures
MEAN_CURVATURE_FACTOR = 0.5


class CenterOnBoundaryError(ValueError):
    """The fit center lies on the boundary, so Z is undefined there."""


# ----------------------------------------------------------------------------
# Basic per-vertex quantities
# ----------------------------------------------------------------------------


def _curve_neighbours(mesh: BoundaryMesh) -> tuple[np.ndarray, np.ndarray]:
    """For a 2D loop mesh, ``(prev, next)`` vertex of every vertex."""
    e = mesh.elements
    nxt = np.empty(mesh.n_vertices, dtype=np.int64)
    prv = np.empty(mesh.n_vertices, dtype=np.int64)
    nxt[e[:, 0]] = e[:, 1]
    prv[e[:, 1]] = e[:, 0]
    return prv, nxt


def vertex_areas(mesh: BoundaryMesh) -> np.ndarray:
    """Mixed-Voronoi vertex areas (3D) or half adjacent lengths (2D).

    They partition the boundary, so the sum is the perimeter.
    """
    if mesh.ambient_dim == 2:
        lens = mesh.element_measures
        out = np.zeros(mesh.n_vertices)
        np.add.at(out, mesh.elements[:, 0], lens / 2)
        np.add.at(out, mesh.elements[:, 1], lens / 2)
        return out
    reg = K.corner_regions(mesh.element_points)
    ra = K.polygon_area_3d(reg.reshape(-1, 4, 3))
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, mesh.elements.ravel(), ra)
    return out


def _corner_angles(mesh: BoundaryMesh) -> np.ndarray:
    ep = mesh.element_points
    ang = np.empty((len(ep), 3))
    for k in range(3):
        u = ep[:, (k + 1) % 3] - ep[:, k]
        v = ep[:, (k + 2) % 3] - ep[:, k]
        ang[:, k] = np.arctan2(np.linalg.norm(np.cross(u, v), axis=1),
                               np.einsum("ij,ij->i", u, v))
    return ang


def vertex_normals(mesh: BoundaryMesh) -> np.ndarray:
    """Angle-weighted average of element normals (3D) or adjacent edge normals (2D)."""
    if mesh.ambient_dim == 2:
        nrm = mesh.element_normals
        out = np.zeros((mesh.n_vertices, 2))
        np.add.at(out, mesh.elements[:, 0], nrm)
        np.add.at(out, mesh.elements[:, 1], nrm)
    else:
        ang = _corner_angles(mesh)
        nrm = mesh.element_normals
        out = np.zeros((mesh.n_vertices, 3))
        for k in range(3):
            np.add.at(out, mesh.elements[:, k], ang[:, k, None] * nrm)
    return out / np.linalg.norm(out, axis=1)[:, None]


def cotan_laplacian(mesh: BoundaryMesh) -> sp.csr_matrix:
    """Symmetric positive semidefinite stiffness matrix.

    3D: cotangent weights ``(cot α + cot β)/2``; 2D: ``1/ℓ`` per edge.
    Rows sum to zero exactly in exact arithmetic (constants are in the kernel).
    """
    n = mesh.n_vertices
    if mesh.ambient_dim == 2:
        e = mesh.elements
        w = 1.0 / mesh.element_measures
        i, j = e[:, 0], e[:, 1]
    else:
        ep = mesh.element_points
        f = mesh.elements
        ii, jj, ww = [], [], []
        for k in range(3):
            a, b = (k + 1) % 3, (k + 2) % 3
            u = ep[:, a] - ep[:, k]
            v = ep[:, b] - ep[:, k]
            cot = np.einsum("ij,ij->i", u, v) / np.linalg.norm(np.cross(u, v), axis=1)
            ii.append(f[:, a])
            jj.append(f[:, b])
            ww.append(0.5 * cot)
        i, j, w = np.concatenate(ii), np.concatenate(jj), np.concatenate(ww)
    W = sp.coo_matrix((np.r_[w, w], (np.r_[i, j], np.r_[j, i])), shape=(n, n)).tocsr()
    # diagonal = off-diagonal row sum keeps constants in the kernel
    return (sp.diags(np.asarray(W.sum(axis=1)).ravel()) - W).tocsr()


def lp_norm(values: np.ndarray, weights: np.ndarray, p: float) -> float:
    """Probability-normalized L^p norm with quadrature weights."""
    a = np.abs(np.asarray(values, dtype=float))
    if np.isinf(p):
        return float(a.max())
    return float((np.sum(weights * a ** p) / np.sum(weights)) ** (1.0 / p))


# ----------------------------------------------------------------------------
# Curvature field
# ----------------------------------------------------------------------------


@dataclass
class CurvatureField:
    """Per-vertex curvature data and its aggregate norms."""

    normal: np.ndarray
    H: np.ndarray
    kappa1: np.ndarray | None
    kappa2: np.ndarray | None
    vertex_area: np.ndarray
    perimeter: float
    dim: int
    norms: dict = field(default_factory=dict)  # p -> {"H": ..., "B": ...}
    low_confidence: np.ndarray | None = None

    @property
    def n(self) -> int:
        """Dimension of the boundary hypersurface."""
        return self.dim - 1

    def budget(self, p: float) -> float:
        """Scale-invariant curvature budget ``P * ||H||_p^n``."""
        return self.perimeter * lp_norm(self.H, self.vertex_area, p) ** self.n

    def consistency(self) -> np.ndarray | None:
        """Pointwise ``|H - (κ1 + κ2)/2|`` where the quadric fit is trusted."""
        if self.kappa1 is None:
            return None
        return np.abs(self.H - MEAN_CURVATURE_FACTOR * (self.kappa1 + self.kappa2))

    def to_dict(self) -> dict:
        agg = {}
        for p, v in self.norms.items():
            agg[f"p={float(p)}"] = {**v, "budget": self.budget(p)}
        out = {
            "normal": self.normal.tolist(),
            "H": self.H.tolist(),
            "vertex_area": self.vertex_area.tolist(),
            "aggregates": agg,
        }
        if self.kappa1 is not None:
            out["kappa1"] = self.kappa1.tolist()
            out["kappa2"] = self.kappa2.tolist()
        return out


def _two_ring(mesh: BoundaryMesh) -> sp.csr_matrix:
    e = mesh.edges
    n = mesh.n_vertices
    A = sp.coo_matrix((np.ones(2 * len(e)), (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])),
                      shape=(n, n)).tocsr()
    A2 = (A + A @ A).tocsr()
    A2.setdiag(0)
    A2.eliminate_zeros()
    return A2


def _principal_curvatures(mesh: BoundaryMesh, normal: np.ndarray):
    """Least-squares fit of the second fundamental form over the 2-ring.

    Each neighbour ``x_j`` gives a normal-curvature sample from the circle
    tangent to the tangent plane at ``x_i`` and passing through ``x_j``
    (exact for spheres and for principal directions of cylinders); the
    quadratic form ``II(t) = A t_u² + 2B t_u t_v + C t_v²`` is fitted to them.
    """
    ring = _two_ring(mesh)
    counts = np.diff(ring.indptr)
    m = int(counts.max())
    n = mesh.n_vertices
    idx = np.zeros((n, m), dtype=np.int64)
    mask = np.arange(m)[None, :] < counts[:, None]
    idx[mask] = ring.indices
    x = mesh.vertices
    rel = x[idx] - x[:, None, :]
    helper = np.where(np.abs(normal[:, [0]]) < 0.9, [[1.0, 0, 0]], [[0, 1.0, 0]])
    t1 = np.cross(normal, helper)
    t1 /= np.linalg.norm(t1, axis=1)[:, None]
    t2 = np.cross(normal, t1)
    u = np.einsum("vkj,vj->vk", rel, t1)
    v = np.einsum("vkj,vj->vk", rel, t2)
    w = np.einsum("vkj,vj->vk", rel, normal)
    tt = u * u + v * v
    safe = np.where(mask & (tt > 0), tt, 1.0)
    # curvature positive when the neighbour lies below the tangent plane
    kn = -2.0 * w / (tt + w * w + (~mask))
    cu, cv = u / np.sqrt(safe), v / np.sqrt(safe)
    A = np.stack([cu * cu, 2 * cu * cv, cv * cv], axis=2) * mask[:, :, None]
    AtA = np.einsum("vki,vkj->vij", A, A)
    Atk = np.einsum("vki,vk->vi", A, kn * mask)
    sv = np.linalg.svd(AtA, compute_uv=False)
    cond = sv[:, 0] / np.maximum(sv[:, -1], 1e-300)
    low = (counts < 3) | (cond > 1e12)
    AtA[low] += np.eye(3) * 1e-12
    a, b, c = np.linalg.solve(AtA, Atk[..., None])[..., 0].T
    mean = 0.5 * (a + c)
    disc = np.sqrt(0.25 * (a - c) ** 2 + b * b)
    return mean + disc, mean - disc, low


def curvature_field(mesh: BoundaryMesh, p_list=(1.0, 2.0, 4.0)) -> CurvatureField:
    """Normals, mean and principal curvatures of a closed triangle mesh."""
    _require_valid(mesh)
    if mesh.ambient_dim == 2:
        return curve_curvature(mesh, p_list)
    area = vertex_areas(mesh)
    nrm = vertex_normals(mesh)
    Kn = (cotan_laplacian(mesh) @ mesh.vertices) / area[:, None]
    sign = np.sign(np.einsum("ij,ij->i", Kn, nrm))
    H = MEAN_CURVATURE_FACTOR * sign * np.linalg.norm(Kn, axis=1)
    k1, k2, low = _principal_curvatures(mesh, nrm)
    B = np.sqrt(k1 * k1 + k2 * k2)
    P = float(area.sum())
    fld = CurvatureField(nrm, H, k1, k2, area, P, 3, low_confidence=low)
    fld.norms = {float(p): {"H": lp_norm(H, area, p), "B": lp_norm(B, area, p)} for p in p_list}
    return fld


def curve_curvature(mesh: BoundaryMesh, p_list=(1.0, 2.0, 4.0)) -> CurvatureField:
    """Turning-angle curvature of a closed polygonal curve.

    ``κ_v = turning angle / mean adjacent edge length``; positive at convex
    corners of a counterclockwise loop, so ``Σ κ_v ℓ_v = 2π`` per convex loop.
    """
    _require_valid(mesh)
    if mesh.ambient_dim != 2:
        raise ValueError("curve_curvature needs a 2D mesh")
    prv, nxt = _curve_neighbours(mesh)
    x = mesh.vertices
    t_in = x - x[prv]
    t_out = x[nxt] - x
    turn = np.arctan2(t_in[:, 0] * t_out[:, 1] - t_in[:, 1] * t_out[:, 0],
                      np.einsum("ij,ij->i", t_in, t_out))
    area = 0.5 * (np.linalg.norm(t_in, axis=1) + np.linalg.norm(t_out, axis=1))
    kappa = turn / area
    nrm = vertex_normals(mesh)
    P = float(area.sum())
    fld = CurvatureField(nrm, kappa, None, None, area, P, 2)
    fld.norms = {float(p): {"H": lp_norm(kappa, area, p), "B": lp_norm(kappa, area, p)}
                 for p in p_list}
    fld.turning = turn
    return fld


# ----------------------------------------------------------------------------
# Deviation field Z
# ----------------------------------------------------------------------------


@dataclass
class ZField:
    """``Z = (x - c)/|x - c| - ν`` per vertex with normalized norms."""

    Z: np.ndarray
    l2: float
    sup: float

    @property
    def magnitude(self) -> np.ndarray:
        return np.linalg.norm(self.Z, axis=1)

    def to_dict(self) -> dict:
        return {"Z": self.Z.tolist(), "l2": self.l2, "sup": self.sup}


def z_field(mesh: BoundaryMesh, fit, field_: CurvatureField | None = None) -> ZField:
    """Deviation of the vertex normals from the radial direction about the fit center."""
    _require_valid(mesh)
    c = np.asarray(fit.center, dtype=float)
    rel = mesh.vertices - c
    r = np.linalg.norm(rel, axis=1)
    if r.min() <= 1e-9 * fit.radius:
        raise CenterOnBoundaryError(
            f"fit center within {r.min():.3e} of vertex {int(np.argmin(r))}"
        )
    nrm = field_.normal if field_ is not None else vertex_normals(mesh)
    area = field_.vertex_area if field_ is not None else vertex_areas(mesh)
    Z = rel / r[:, None] - nrm
    mag = np.linalg.norm(Z, axis=1)
    return ZField(Z, lp_norm(mag, area, 2.0), float(mag.max()))


# ----------------------------------------------------------------------------
# Curvature outside an annulus
# ----------------------------------------------------------------------------


def outside_annulus_weights(mesh: BoundaryMesh, annulus: AnnulusSpec) -> np.ndarray:
    """Per-vertex measure of the vertex's dual region lying outside the annulus.

    Dual regions are the mixed-Voronoi corner regions (3D) or half edges
    (2D); their intersections with the annulus are exact.
    """
    c = np.asarray(annulus.center, dtype=float)
    r_in, r_out = annulus.inner, annulus.outer
    out = np.zeros(mesh.n_vertices)
    if mesh.ambient_dim == 2:
        ep = mesh.element_points
        mid = ep.mean(axis=1)
        for k in range(2):
            p, q = ep[:, k], mid
            total = np.linalg.norm(q - p, axis=1)
            inside = K.segment_ball_length(p, q, c, r_out)
            if r_in > 0:
                inside = inside - K.segment_ball_length(p, q, c, r_in)
            np.add.at(out, mesh.elements[:, k], total - inside)
        return out
    reg = K.corner_regions(mesh.element_points).reshape(-1, 4, 3)
    total = K.polygon_area_3d(reg)
    inside = K.planar_polygon_ball_area(reg, c, r_out)
    if r_in > 0:
        inside = inside - K.planar_polygon_ball_area(reg, c, r_in)
    np.add.at(out, mesh.elements.ravel(), np.maximum(total - inside, 0.0))
    return out


def outside_annulus_curvature_integral(mesh: BoundaryMesh, field_: CurvatureField,
                                       annulus: AnnulusSpec, q: float | None = None) -> float:
    """``∫_{∂Ω \\ A_η} |H|^q`` with H piecewise constant on dual regions.

    ``q`` defaults to ``n - 1``; ``q = 0`` returns the boundary measure
    outside the annulus.
    """
    if q is None:
        q = mesh.ambient_dim - 2
    w = outside_annulus_weights(mesh, annulus)
    vals = np.ones_like(field_.H) if q == 0 else np.abs(field_.H) ** q
    return float(np.sum(w * vals))


# ----------------------------------------------------------------------------
# Topology checks
# ----------------------------------------------------------------------------


def angle_defects(mesh: BoundaryMesh) -> np.ndarray:
    """``2π - Σ incident corner angles`` per vertex."""
    ang = _corner_angles(mesh)
    tot = np.zeros(mesh.n_vertices)
    np.add.at(tot, mesh.elements.ravel(), ang.ravel())
    return 2 * np.pi - tot


def euler_characteristic(mesh: BoundaryMesh) -> int:
    return int(mesh.n_vertices - len(mesh.edges) + mesh.n_elements)

"""Distances between boundaries, model spheres and boundary measures.

Hausdorff distances are computed on point sets with certified sampling
radii, or exactly against the piecewise-linear mesh where that is cheap.
The Lipschitz distance goes through the radial projection onto the fit
sphere, and the Preiss distance is a series of small linear programs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import cKDTree

from . import _kernels as K
from .mesh import BoundaryMesh, _require_valid

__all__ = [
    "SampledSet",
    "DiscreteMeasure",
    "HausdorffResult",
    "PreissResult",
    "NotStarShapedError",
    "AtomLimitError",
    "winding_numbers",
    "point_in_solid",
    "point_in_solid_batch",
    "point_to_mesh_distance",
    "mesh_sampled_set",
    "sphere_sampled_set",
    "hausdorff_distance",
    "hausdorff_to_model",
    "lipschitz_distance_to_sphere",
    "boundary_measure",
    "sphere_measure",
    "preiss_F",
    "preiss_distance",
]


class NotStarShapedError(ValueError):
    """Some element is not transversal to the ray from the fit center."""

    def __init__(self, element: int, direction: np.ndarray, value: float):
        self.element = element
        self.direction = np.asarray(direction)
        super().__init__(
            f"element {element} is not radially transversal "
            f"(<nu, r> = {value:.3e}) along ray {np.round(self.direction, 6).tolist()}"
        )


class AtomLimitError(ValueError):
    """Measure too large for the dense pairwise LP."""


# ----------------------------------------------------------------------------
# Sampled sets and measures
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class SampledSet:
    """Point sample of a set; every point of the set lies within
    ``sampling_radius`` of some sample."""

    points: np.ndarray
    sampling_radius: float

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.size == 0:
            raise ValueError("empty sampled set")
        if not self.sampling_radius >= 0:
            raise ValueError("sampling radius must be nonnegative")
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finite sum of weighted Dirac atoms."""

    points: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        m = np.asarray(self.masses, dtype=float).ravel()
        if len(pts) != len(m):
            raise ValueError("points and masses differ in length")
        if np.any(m < 0):
            raise ValueError("masses must be nonnegative")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "masses", m)

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def translated(self, offset) -> "DiscreteMeasure":
        return DiscreteMeasure(self.points + np.asarray(offset, dtype=float), self.masses)


@dataclass
class HausdorffResult:
    """Hausdorff distance with a certified error bound and the two one-sided parts."""

    value: float
    error_bound: float
    forward: float  # sup over the boundary of the distance to the model
    backward: float  # sup over the model of the distance to the boundary
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "error_bound": self.error_bound,
            "forward": self.forward,
            "backward": self.backward,
            "diagnostics": self.diagnostics,
        }


# ----------------------------------------------------------------------------
# Point classification
# ----------------------------------------------------------------------------


def winding_numbers(mesh: BoundaryMesh, points, chunk: int = 2_000_000) -> np.ndarray:
    """Generalized winding number of ``mesh`` around each query point."""
    q = np.atleast_2d(np.asarray(points, dtype=float))
    ep = mesh.element_points
    out = np.empty(len(q))
    per = max(1, chunk // max(1, len(ep)))
    for s in range(0, len(q), per):
        block = q[s:s + per]
        if mesh.ambient_dim == 2:
            a = ep[None, :, 0, :] - block[:, None, :]
            b = ep[None, :, 1, :] - block[:, None, :]
            ang = np.arctan2(a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0],
                             np.einsum("...i,...i->...", a, b))
            out[s:s + per] = ang.sum(axis=1) / (2 * np.pi)
        else:
            for j, x in enumerate(block):
                out[s + j] = K.solid_angles(x, ep).sum() / (4 * np.pi)
    return out


def point_in_solid_batch(mesh: BoundaryMesh, points) -> np.ndarray:
    """Boolean inside test by rounded winding number."""
    return winding_numbers(mesh, points) > 0.5


def point_in_solid(mesh: BoundaryMesh, q, tol: float | None = None) -> str:
    """Classify ``q`` as ``"inside"``, ``"outside"`` or ``"boundary"``.

    ``boundary`` is returned when ``q`` is within ``tol`` (default
    ``1e-9`` times the bounding-box diagonal) of the surface, or when the
    winding number is more than 1/4 away from an integer.
    """
    _require_valid(mesh)
    q = np.asarray(q, dtype=float)
    if tol is None:
        tol = 1e-9 * mesh.bbox_diagonal
    if point_to_mesh_distance(mesh, q[None, :])[0] <= tol:
        return "boundary"
    w = winding_numbers(mesh, q[None, :])[0]
    if abs(w - round(w)) > 0.25:
        return "boundary"
    return "inside" if round(w) >= 1 else "outside"


# ----------------------------------------------------------------------------
# Exact point-to-mesh distance
# ----------------------------------------------------------------------------


class _MeshLocator:
    """k-d tree acceleration for exact point-to-mesh distances."""

    def __init__(self, mesh: BoundaryMesh | None = None, element_points: np.ndarray | None = None):
        self.ep = mesh.element_points if element_points is None else element_points
        self.dim = self.ep.shape[2]
        cen = self.ep.mean(axis=1)
        self.reach = np.linalg.norm(self.ep - cen[:, None, :], axis=2).max(axis=1)
        self.rmax = float(self.reach.max())
        self.ctree = cKDTree(cen)

    def _brute(self, q: np.ndarray):
        out = np.empty(len(q))
        idx = np.empty(len(q), dtype=np.int64)
        per = max(1, 1_000_000 // len(self.ep))
        for s in range(0, len(q), per):
            out[s:s + per], idx[s:s + per] = K.point_segments_distance_2d(
                q[s:s + per], self.ep[:, 0], self.ep[:, 1], return_index=True)
        return out, idx

    def _exact(self, q, ti):
        if self.dim == 3:
            return K.point_triangle_distance(q, self.ep[ti])
        return K.point_segment_distance(q, self.ep[ti, 0], self.ep[ti, 1])

    def nearest(self, q: np.ndarray, k: int = 16):
        """Exact distance to the mesh and the index of a nearest element."""
        q = np.atleast_2d(np.asarray(q, dtype=float))
        if self.dim == 2 and len(self.ep) <= 4096:
            return self._brute(q)
        k = min(k, len(self.ep))
        # k nearest centroids; certified when the k-th centroid is too far to beat the best
        dc, ti = self.ctree.query(q, k=k)
        dc, ti = dc.reshape(len(q), k), ti.reshape(len(q), k)
        d = self._exact(np.repeat(q, k, axis=0), ti.ravel()).reshape(len(q), k)
        j = d.argmin(axis=1)
        rows = np.arange(len(q))
        out, idx = d[rows, j], ti[rows, j]
        bad = np.flatnonzero(dc[:, -1] - self.rmax < out) if k < len(self.ep) else np.empty(0, int)
        if len(bad):
            qb = q[bad]
            cand = self.ctree.query_ball_point(qb, out[bad] + self.rmax + 1e-12)
            for r, (i, cs) in enumerate(zip(bad, cand)):
                cs = np.asarray(cs, dtype=np.int64)
                dd = self._exact(np.repeat(qb[r:r + 1], len(cs), axis=0), cs)
                m = int(dd.argmin())
                if dd[m] < out[i]:
                    out[i], idx[i] = dd[m], cs[m]
        return out, idx

    def distance(self, q: np.ndarray) -> np.ndarray:
        return self.nearest(q)[0]


def point_to_mesh_distance(mesh: BoundaryMesh, points) -> np.ndarray:
    """Exact Euclidean distance from each point to the mesh surface."""
    return _MeshLocator(mesh).distance(points)


# ----------------------------------------------------------------------------
# Hausdorff distance
# ----------------------------------------------------------------------------


def mesh_sampled_set(mesh: BoundaryMesh, h: float) -> SampledSet:
    """Sample the mesh surface so every surface point is within ``h`` of a sample."""
    ep = mesh.element_points
    lengths = np.linalg.norm(ep - np.roll(ep, -1, axis=1), axis=2).max(axis=1)
    # uniform subdivision into s pieces per edge: nearest node within edge/s
    s = np.maximum(1, np.ceil(lengths / h).astype(int))
    pts = [mesh.vertices]
    for k in np.unique(s):
        if k == 1:
            continue
        sel = ep[s == k]
        if mesh.ambient_dim == 2:
            t = (np.arange(1, k) / k)[None, :, None]
            pts.append((sel[:, None, 0] * (1 - t) + sel[:, None, 1] * t).reshape(-1, 2))
        else:
            i, j = np.meshgrid(np.arange(k + 1), np.arange(k + 1), indexing="ij")
            keep = (i + j <= k)
            bi, bj = i[keep] / k, j[keep] / k
            w = np.stack([1 - bi - bj, bi, bj], axis=1)
            pts.append(np.einsum("pk,mkd->mpd", w, sel).reshape(-1, 3))
    return SampledSet(np.unique(np.concatenate(pts), axis=0), float(h))


def sphere_sampled_set(center, radius: float, h: float, dim: int = 3) -> SampledSet:
    """Sample of the sphere ``S_center(radius)`` with sampling radius ``<= h``."""
    center = np.asarray(center, dtype=float)
    if dim == 2:
        m = max(8, int(np.ceil(np.pi * radius / h)) + 1)
        ang = 2 * np.pi * np.arange(m) / m
        pts = center + radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
        return SampledSet(pts, radius * np.sin(np.pi / (2 * m)) * 2)
    from .generators import unit_icosphere

    level = 0
    while level < 9:
        v, f = unit_icosphere(level)
        edge = np.linalg.norm(v[f[:, 0]] - v[f[:, 1]], axis=1).max()
        # every sphere point is within one edge chord of a vertex
        if radius * edge <= h:
            break
        level += 1
    return SampledSet(center + radius * v, float(radius * edge))


def hausdorff_distance(a: SampledSet, b: SampledSet) -> tuple[float, float]:
    """Exact point-set Hausdorff distance and the continuous-set error bound."""
    if a.points.shape[1] != b.points.shape[1]:
        raise ValueError("dimension mismatch")
    da, _ = cKDTree(b.points).query(a.points)
    db, _ = cKDTree(a.points).query(b.points)
    return float(max(da.max(), db.max())), float(a.sampling_radius + b.sampling_radius)


def _subdivide(tri: np.ndarray) -> np.ndarray:
    """Split triangles (m,3,d) into four each."""
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
    return np.concatenate([
        np.stack([a, ab, ca], 1), np.stack([ab, b, bc], 1),
        np.stack([ca, bc, c], 1), np.stack([ab, bc, ca], 1),
    ])


def _max_edge(tri: np.ndarray) -> np.ndarray:
    return np.linalg.norm(tri - np.roll(tri, -1, axis=1), axis=2).max(axis=1)


def _forward_exact_sphere(ep: np.ndarray, c: np.ndarray, R: float) -> np.ndarray:
    """Per-element sup of ||x-c| - R| (exact: |x-c| is convex on the element)."""
    vmax = np.linalg.norm(ep - c, axis=2).max(axis=1)
    if ep.shape[2] == 3:
        dmin = K.point_triangle_distance(np.broadcast_to(c, (len(ep), 3)), ep)
    else:
        dmin = K.point_segment_distance(np.broadcast_to(c, (len(ep), 2)), ep[:, 0], ep[:, 1])
    return np.maximum(vmax - R, R - dmin)


def _sphere_seed_cells(c, R, dim):
    from .generators import unit_icosphere

    if dim == 2:
        m = 256
        ang = 2 * np.pi * np.arange(m + 1) / m
        pts = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        return np.stack([pts[:-1], pts[1:]], axis=1)
    v, f = unit_icosphere(3)
    return v[f]


def _bulge(cells: np.ndarray) -> np.ndarray:
    """Factor ``s >= 1`` such that the unit-sphere cell lies in the hull of its
    corners and ``s`` times its corners (inverse of the flat cell's distance
    to the origin)."""
    if cells.shape[1] == 2:
        h = K.point_segment_distance(np.zeros((len(cells), 2)), cells[:, 0], cells[:, 1])
    else:
        h = K.point_triangle_distance(np.zeros((len(cells), 3)), cells)
    return 1.0 / h


def _refine_cells(cells: np.ndarray) -> np.ndarray:
    """Subdivide unit-sphere cells and project back to the sphere."""
    if cells.shape[1] == 2:
        mid = cells.sum(axis=1)
        mid /= np.linalg.norm(mid, axis=1)[:, None]
        return np.concatenate([np.stack([cells[:, 0], mid], 1), np.stack([mid, cells[:, 1]], 1)])
    sub = _subdivide(cells)
    return sub / np.linalg.norm(sub, axis=2)[:, :, None]


def _annulus_elements(ep: np.ndarray, c: np.ndarray, R: float, eta: float, size: float):
    """Elements of ``ep`` meeting the annulus ``A_eta``; straddling ones are
    split until their diameter is below ``size``.

    A kept straddler contains a point of the annulus boundary, so the kept
    set is within ``size`` (Hausdorff) of the exact intersection.
    """
    lo, hi = R * (1 - eta), R * (1 + eta)
    keep = []
    cells = ep
    while len(cells):
        vmax = np.linalg.norm(cells - c, axis=2).max(axis=1)
        if cells.shape[2] == 3:
            dmin = K.point_triangle_distance(np.broadcast_to(c, (len(cells), 3)), cells)
        else:
            dmin = K.point_segment_distance(np.broadcast_to(c, (len(cells), 2)), cells[:, 0], cells[:, 1])
        inside = (dmin >= lo) & (vmax <= hi)
        outside = (vmax < lo) | (dmin > hi)
        strad = ~inside & ~outside
        small = _max_edge(cells) <= size
        keep.append(cells[inside | (strad & small)])
        cells = cells[strad & ~small]
        if len(cells):
            if cells.shape[2] == 3:
                cells = _subdivide(cells)
            else:
                mid = cells.mean(axis=1)
                cells = np.concatenate([np.stack([cells[:, 0], mid], 1), np.stack([mid, cells[:, 1]], 1)])
    return np.concatenate(keep)


def hausdorff_to_model(mesh: BoundaryMesh, fit, extra=None, extra_spacing: float = 0.0,
                       tol: float | None = None, max_rounds: int = 40,
                       annulus_eta: float | None = None) -> HausdorffResult:
    """Hausdorff distance between the mesh surface and the model set
    ``S_{x}(R) ∪ extra``.

    ``extra`` is either a point sample of shape ``(m, dim)`` whose points
    are ``extra_spacing`` apart along an underlying curve, or exact segments
    of shape ``(k, 2, dim)``.  All parts are handled by branch and bound with
    exact distances; the reported ``error_bound`` is the remaining bound gap
    plus half of ``extra_spacing``.

    With ``annulus_eta`` the mesh is replaced by its part inside the annulus
    ``A_eta`` about the fit sphere, resolved to ``tol`` (added to the bound).
    """
    _require_valid(mesh)
    c = np.asarray(fit.center, dtype=float)
    R = float(fit.radius)
    dim = mesh.ambient_dim
    if tol is None:
        tol = 1e-4 * R
    ep = mesh.element_points
    clip_err = 0.0
    if annulus_eta is not None:
        ep = _annulus_elements(ep, c, R, float(annulus_eta), tol)
        if not len(ep):
            raise ValueError(f"no boundary inside the annulus eta={annulus_eta}")
        clip_err = tol
    segs = None
    if extra is not None and len(extra):
        extra = np.asarray(extra, dtype=float)
        if extra.ndim == 2:  # points are zero-length segments
            extra = np.stack([extra, extra], axis=1)
        if extra.ndim != 3 or extra.shape[1:] != (2, dim):
            raise ValueError(f"extra must have shape (m, {dim}) or (k, 2, {dim})")
        segs = extra
        stree = cKDTree(segs.mean(axis=1))
        sreach = float(np.linalg.norm(segs[:, 0] - segs[:, 1], axis=1).max()) / 2

        def dseg(pts):
            flat = pts.reshape(-1, dim)
            k = min(len(segs), 8)
            _, ti = stree.query(flat, k=k)
            ti = ti.reshape(len(flat), k)
            d = K.point_segment_distance(flat[:, None, :], segs[ti, 0], segs[ti, 1]).min(axis=1)
            if k < len(segs):
                # certify; fall back to all segments where the k-th center could still win
                dk, _ = stree.query(flat, k=[k])
                bad = dk[:, 0] - sreach < d
                if bad.any():
                    d[bad] = K.point_segment_distance(flat[bad][:, None, :], segs[None, :, 0],
                                                      segs[None, :, 1]).min(axis=1)
            return d.reshape(pts.shape[:-1])

    # forward: sup over mesh of min(dS, dE)
    supS = _forward_exact_sphere(ep, c, R)
    rounds_f = 0
    fgap = 0.0
    if segs is None:
        forward = float(supS.max())
    else:
        cells = ep
        cs = supS
        lower = 0.0
        while True:
            de = dseg(cells)  # convex per segment: the vertex max bounds each segment's sup
            ds = np.abs(np.linalg.norm(cells - c, axis=-1) - R)
            lower = max(lower, float(np.minimum(ds, de).max()))
            upper = np.minimum(cs, de.max(axis=1))
            live = upper > lower + tol
            if not live.any() or rounds_f >= max_rounds:
                fgap = max(0.0, float(upper.max()) - lower)
                break
            cells = cells[live]
            if dim == 3:
                cells = _subdivide(cells)
            else:
                mid = cells.mean(axis=1)
                cells = np.concatenate([np.stack([cells[:, 0], mid], 1), np.stack([mid, cells[:, 1]], 1)])
            cs = _forward_exact_sphere(cells, c, R)
            rounds_f += 1
        forward = lower

    # backward over the sphere: sup over S of dist(y, mesh)
    loc = _MeshLocator(element_points=ep)
    cells = _sphere_seed_cells(c, R, dim)
    lower = 0.0
    rounds_b = 0
    bgap = 0.0
    while True:
        cen = cells.mean(axis=1)
        cen /= np.linalg.norm(cen, axis=1)[:, None]
        rad = R * np.linalg.norm(cells - cen[:, None, :], axis=2).max(axis=1)
        d, near = loc.nearest(c + R * cen)
        lower = max(lower, float(d.max()))
        # distance to the mesh is 1-Lipschitz; the cell lies within rad of its center
        upper = d + rad
        # second-order bound: the cell lies in the hull of its corners and the corners
        # pushed out past the sphere, and the distance to one element is convex there
        hull = np.concatenate([cells, cells * _bulge(cells)[:, None, None]], axis=1)
        hp = (c + R * hull).reshape(-1, dim)
        dn = loc._exact(hp, np.repeat(near, hull.shape[1])).reshape(len(cells), -1).max(axis=1)
        upper = np.minimum(upper, dn)
        live = upper > lower + tol
        if not live.any() or rounds_b >= max_rounds:
            bgap = max(0.0, float(upper.max()) - lower)
            break
        cells = _refine_cells(cells[live])
        rounds_b += 1
    backward = lower

    # backward over the extra segments, bisected with the same second-order bound
    rounds_e = 0
    if segs is not None:
        pieces = segs
        lower_e = 0.0
        while True:
            mid = pieces.mean(axis=1)
            d, near = loc.nearest(mid)
            lower_e = max(lower_e, float(d.max()))
            half = np.linalg.norm(pieces[:, 1] - pieces[:, 0], axis=1) / 2
            dn = loc._exact(pieces.reshape(-1, dim), np.repeat(near, 2)).reshape(-1, 2).max(axis=1)
            upper = np.minimum(d + half, dn)
            live = upper > lower_e + tol
            if not live.any() or rounds_e >= max_rounds:
                egap = max(0.0, float(upper.max()) - lower_e)
                break
            p = pieces[live]
            m = p.mean(axis=1)
            pieces = np.concatenate([np.stack([p[:, 0], m], 1), np.stack([m, p[:, 1]], 1)])
            rounds_e += 1
        if lower_e > backward:
            backward, bgap = lower_e, egap
        else:
            bgap = max(bgap, lower_e + egap - backward)
    value = max(forward, backward)
    err = max(forward + fgap, backward + bgap) - value + 0.5 * extra_spacing + clip_err
    return HausdorffResult(
        value=value, error_bound=float(err), forward=float(forward),
        backward=float(backward),
        diagnostics={"tol": tol, "forward_rounds": rounds_f, "backward_rounds": rounds_b,
                     "extra_rounds": rounds_e,
                     "extra_segments": 0 if segs is None else int(len(segs)),
                     "annulus_eta": annulus_eta},
    )


# ----------------------------------------------------------------------------
# Lipschitz distance through the radial projection
# ----------------------------------------------------------------------------


def lipschitz_distance_to_sphere(mesh: BoundaryMesh, fit, transversality: float = 1e-6) -> dict:
    """Log-dilation distance between the mesh and the fit sphere via
    ``F(x) = c + R (x - c)/|x - c|``.

    Per element, the tangent map of F at the barycenter is restricted to the
    element's plane and its singular values give the local stretch.  Returns
    ``{"value", "dil_F", "dil_F_inv", "error_tag"}``.
    """
    _require_valid(mesh)
    c = np.asarray(fit.center, dtype=float)
    R = float(fit.radius)
    ep = mesh.element_points
    b = ep.mean(axis=1) - c
    rb = np.linalg.norm(b, axis=1)
    rhat = b / rb[:, None]
    nrm = mesh.element_normals
    trans = np.einsum("ij,ij->i", nrm, rhat)
    bad = np.flatnonzero(trans <= transversality)
    if len(bad):
        k = int(bad[np.argmin(trans[bad])])
        raise NotStarShapedError(k, rhat[k], float(trans[k]))
    scale = R / rb
    if mesh.ambient_dim == 2:
        e = ep[:, 1] - ep[:, 0]
        tang = e - np.einsum("ij,ij->i", e, rhat)[:, None] * rhat
        sig = scale * np.linalg.norm(tang, axis=1) / np.linalg.norm(e, axis=1)
        smax = smin = sig
    else:
        E1 = ep[:, 1] - ep[:, 0]
        E2 = ep[:, 2] - ep[:, 0]

        def proj(e):
            return e - np.einsum("ij,ij->i", e, rhat)[:, None] * rhat

        M1, M2 = scale[:, None] * proj(E1), scale[:, None] * proj(E2)
        # generalized 2x2 eigenproblem (M^T M) x = s^2 (E^T E) x
        g11, g12, g22 = (np.einsum("ij,ij->i", E1, E1), np.einsum("ij,ij->i", E1, E2),
                         np.einsum("ij,ij->i", E2, E2))
        h11, h12, h22 = (np.einsum("ij,ij->i", M1, M1), np.einsum("ij,ij->i", M1, M2),
                         np.einsum("ij,ij->i", M2, M2))
        detg = g11 * g22 - g12 * g12
        # eigenvalues of G^{-1} H
        a11 = (g22 * h11 - g12 * h12) / detg
        a12 = (g22 * h12 - g12 * h22) / detg
        a21 = (g11 * h12 - g12 * h11) / detg
        a22 = (g11 * h22 - g12 * h12) / detg
        tr = a11 + a22
        det = a11 * a22 - a12 * a21
        disc = np.sqrt(np.maximum(tr * tr / 4 - det, 0.0))
        smax = np.sqrt(tr / 2 + disc)
        smin = np.sqrt(np.maximum(tr / 2 - disc, 0.0))
    dil = float(smax.max())
    dil_inv = float((1.0 / smin).max())
    h = float(_max_edge(ep).max())
    return {
        "value": abs(np.log(dil)) + abs(np.log(dil_inv)),
        "dil_F": dil,
        "dil_F_inv": dil_inv,
        "error_tag": f"O(h), h = {h:.3e}",
        "min_transversality": float(trans.min()),
    }


# ----------------------------------------------------------------------------
# Preiss distance
# ----------------------------------------------------------------------------


def boundary_measure(mesh: BoundaryMesh) -> DiscreteMeasure:
    """Normalized boundary measure: vertex areas over perimeter."""
    from .curvature import vertex_areas

    va = vertex_areas(mesh)
    return DiscreteMeasure(mesh.vertices.copy(), va / va.sum())


def sphere_measure(center, radius: float, n_atoms: int, dim: int = 3) -> DiscreteMeasure:
    """Equal-mass atoms spread evenly over a sphere (Fibonacci lattice in 3D)."""
    from .generators import fibonacci_sphere

    center = np.asarray(center, dtype=float)
    if dim == 2:
        ang = 2 * np.pi * (np.arange(n_atoms) + 0.5) / n_atoms
        pts = center + radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    else:
        pts = fibonacci_sphere(n_atoms, center, radius)
    return DiscreteMeasure(pts, np.full(n_atoms, 1.0 / n_atoms))


@dataclass
class PreissResult:
    value: float
    upper_bound: float
    F: list
    i_max: int
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"value": self.value, "error_bound": self.upper_bound - self.value,
                "upper_bound": self.upper_bound, "F": self.F, "i_max": self.i_max,
                "diagnostics": self.diagnostics}


def _pairwise_violations(x, f, per_row: int = 4, chunk: int = 512):
    """Up to ``per_row`` most violated Lipschitz partners of every atom."""
    rows, cols = [], []
    for s in range(0, len(x), chunk):
        d = np.sqrt(np.maximum(
            np.sum(x[s:s + chunk] ** 2, 1)[:, None] + np.sum(x ** 2, 1)[None, :]
            - 2.0 * x[s:s + chunk] @ x.T, 0.0))
        viol = (f[s:s + chunk, None] - f[None, :]) - d
        k = min(per_row, viol.shape[1])
        j = np.argpartition(-viol, k - 1, axis=1)[:, :k]
        v = np.take_along_axis(viol, j, axis=1)
        hit = v > 1e-9 * (1.0 + np.abs(f[s:s + chunk, None]))
        r = np.broadcast_to(np.arange(s, s + len(j))[:, None], j.shape)
        rows.append(r[hit])
        cols.append(j[hit])
    return np.concatenate(rows), np.concatenate(cols)


def preiss_F(x: np.ndarray, w: np.ndarray, cap: np.ndarray, knn: int = 12,
             max_rounds: int = 50, return_f: bool = False):
    """Solve ``sup Σ w_k f_k`` over ``0 <= f <= cap``, ``Lip f <= 1`` on atoms.

    Constraint generation: start from k-nearest-neighbour pairs and add the
    most violated pair per atom until the full pairwise set is satisfied;
    the final LP optimum is then exact for the full problem.
    """
    m = len(x)
    if m == 0 or np.all(cap <= 0):
        z = (0.0, {"rounds": 0, "pairs": 0})
        return z + (np.zeros(m),) if return_f else z
    kk = min(knn + 1, m)
    _, nb = cKDTree(x).query(x, k=kk)
    nb = np.atleast_2d(nb)
    i0 = np.repeat(np.arange(m), kk - 1)
    j0 = nb[:, 1:].ravel() if kk > 1 else np.empty(0, dtype=int)
    pairs = set()
    rows, cols = [], []

    def add(i, j):
        for a, b in zip(i.tolist(), j.tolist()):
            if a == b:
                continue
            for p in ((a, b), (b, a)):
                if p not in pairs:
                    pairs.add(p)
                    rows.append(p[0])
                    cols.append(p[1])

    add(i0, j0)
    bounds = np.stack([np.zeros(m), cap], axis=1)
    rounds = 0
    while True:
        r = np.asarray(rows, dtype=np.int64)
        cc = np.asarray(cols, dtype=np.int64)
        if len(r):
            from scipy.sparse import coo_matrix

            k = np.arange(len(r))
            A = coo_matrix((np.r_[np.ones(len(r)), -np.ones(len(r))],
                            (np.r_[k, k], np.r_[r, cc])), shape=(len(r), m)).tocsr()
            b = np.linalg.norm(x[r] - x[cc], axis=1)
            res = linprog(-w, A_ub=A, b_ub=b, bounds=bounds, method="highs")
        else:
            res = linprog(-w, bounds=bounds, method="highs")
        if res.status != 0:
            raise RuntimeError(f"Preiss LP failed: {res.message}")
        f = res.x
        vi, vj = _pairwise_violations(x, f)
        rounds += 1
        if len(vi) == 0 or rounds >= max_rounds:
            break
        add(vi, vj)
    if len(vi):
        raise RuntimeError(f"Preiss constraint generation did not converge in {max_rounds} rounds")
    out = (float(-res.fun), {"rounds": rounds, "pairs": len(rows)})
    return out + (f,) if return_f else out


def preiss_distance(mu: DiscreteMeasure, nu: DiscreteMeasure, i_max: int = 10,
                    origin=None, max_atoms: int = 2000) -> PreissResult:
    """Preiss distance ``Σ_{i<=i_max} 2^-i min(1, F_i)`` between two atomic
    measures, with the truncation tail ``Σ_{i>i_max} 2^-i`` reported in the
    upper bound.

    ``F_i`` is the sup of ``|∫ f d(mu - nu)|`` over nonnegative 1-Lipschitz
    ``f`` supported in the closed ball ``B_origin(i)``.  On atoms this is the
    cap ``f <= i - |x - origin|``, which is exact for the discrete problem.
    """
    if len(mu.points) > max_atoms or len(nu.points) > max_atoms:
        raise AtomLimitError(
            f"atom counts {len(mu.points)}, {len(nu.points)} exceed max_atoms={max_atoms}"
        )
    dim = mu.points.shape[1]
    origin = np.zeros(dim) if origin is None else np.asarray(origin, dtype=float)
    pts = np.concatenate([mu.points, nu.points])
    w = np.concatenate([mu.masses, -nu.masses])
    # merge coincident atoms so mu == nu gives w == 0 exactly
    uniq, inv = np.unique(pts, axis=0, return_inverse=True)
    wu = np.zeros(len(uniq))
    np.add.at(wu, inv.ravel(), w)
    r = np.linalg.norm(uniq - origin, axis=1)
    F = []
    diag = {"rounds": [], "reused_from": None}
    saturated = None
    for i in range(1, i_max + 1):
        if saturated is not None:
            F.append(saturated)
            continue
        inside = r < i
        cap = np.where(inside, i - r, 0.0)
        # zero-weight atoms and atoms outside the ball only constrain f
        # through the cap, which already encodes dist(x, S_0(i))
        idx = np.flatnonzero(inside & (wu != 0.0))
        if len(idx) == 0:
            Fi, info = 0.0, {"rounds": 0}
        else:
            # F_i takes |∫f dmu - ∫f dnu|: solve both signs
            Fp, ip, fp = preiss_F(uniq[idx], wu[idx], cap[idx], return_f=True)
            Fm, im, fm = preiss_F(uniq[idx], -wu[idx], cap[idx], return_f=True)
            Fi = max(Fp, Fm)
            info = {"rounds": ip["rounds"] + im["rounds"]}
            if abs(wu[idx].sum()) <= 1e-12 * np.abs(wu[idx]).sum():
                # balanced masses: shifting f by a constant keeps it optimal
                fp, fm = fp - fp.min(), fm - fm.min()
            slack = cap[idx] - np.maximum(fp, fm)
        diag["rounds"].append(info["rounds"])
        F.append(Fi)
        # with every atom inside and no cap active, looser caps leave the
        # optimum unchanged, so F_j = F_i for all j > i
        if inside.all() and (len(idx) == 0 or slack.min() > 1e-9 * max(1.0, cap[idx].max())):
            saturated = Fi
            diag["reused_from"] = i
    value = float(sum(2.0 ** -i * min(1.0, Fi) for i, Fi in enumerate(F, start=1)))
    tail = 2.0 ** -i_max
    return PreissResult(value=value, upper_bound=value + tail, F=F, i_max=i_max, diagnostics=diag)


# ----------------------------------------------------------------------------
# Planar best-circle Hausdorff distance
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class _Circle:
    center: np.ndarray
    radius: float


def best_circle_hausdorff(mesh: BoundaryMesh) -> dict:
    """Hausdorff distance from a closed polygonal curve to a near-optimal circle.

    The circle is the minimum-width annulus midline found by Nelder–Mead on
    ``w(c) = max |v - c| - min_{x∈Γ} |x - c|``.  For that circle the
    curve-to-circle part ``max(R_max - ρ, ρ - r_min) = w/2`` is exact; when
    the curve is star-shaped about ``c`` every ray meets it, so the
    circle-to-curve part is no larger and the distance is exactly ``w/2``.
    Otherwise the circle-to-curve part is bounded by branch and bound.
    Since the true optimum over circles is no larger, the value is an upper
    bound for ``inf_C d_H(C, Γ)``.
    """
    from scipy.optimize import minimize

    _require_valid(mesh)
    if mesh.ambient_dim != 2:
        raise ValueError("best_circle_hausdorff needs a planar curve")
    v = mesh.vertices
    ep = mesh.element_points

    def radii(c):
        c = np.asarray(c, dtype=float)
        rmax = float(np.max(np.linalg.norm(v - c, axis=1)))
        rmin = float(K.point_segments_distance_2d(c[None, :], ep[:, 0], ep[:, 1])[0])
        return rmax, rmin

    def width(c):
        a, b = radii(c)
        return a - b

    from .measures import volume_centroid

    starts = [volume_centroid(mesh)]
    scale = float(np.max(v.max(axis=0) - v.min(axis=0)))
    best = None
    for s in starts:
        res = minimize(width, s, method="Nelder-Mead",
                       options={"xatol": 1e-9 * scale, "fatol": 1e-12 * scale, "maxiter": 4000,
                                "initial_simplex": np.vstack([s, s + [0.05 * scale, 0], s + [0, 0.05 * scale]])})
        if best is None or res.fun < best.fun:
            best = res
    c = np.asarray(best.x, dtype=float)
    rmax, rmin = radii(c)
    rho = 0.5 * (rmax + rmin)
    forward = 0.5 * (rmax - rmin)
    a, b = ep[:, 0] - c, ep[:, 1] - c
    star = bool(np.all(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0] > 0)) and mesh.component_count == 1
    if star:
        value, err = forward, 0.0
    else:
        hr = hausdorff_to_model(mesh, _Circle(c, rho), tol=1e-7 * scale)
        value, err = hr.value, hr.error_bound
    return {"value": float(value), "error_bound": float(err), "center": c.tolist(),
            "radius": float(rho), "exact": star}


def diameter(mesh: BoundaryMesh) -> float:
    """Exact diameter of the vertex set (attained on the convex hull)."""
    from scipy.spatial import ConvexHull

    v = mesh.vertices
    try:
        hv = v[ConvexHull(v).vertices]
    except Exception:  # degenerate hull: fall back to all points
        hv = v
    d = np.linalg.norm(hv[:, None, :] - hv[None, :, :], axis=2)
    return float(d.max())

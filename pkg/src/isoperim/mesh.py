"""Discrete domains and their bulk measures.

A domain is represented by its boundary: a closed polyline in the plane or a
closed oriented triangle mesh in space.  Volume comes from the divergence
theorem applied to the position field, perimeter is the total measure of the
boundary elements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph


class InvalidMeshError(ValueError):
    """Raised when an operation receives a mesh that fails :func:`validate`."""

    def __init__(self, defects):
        self.defects = list(defects)
        head = "; ".join(str(d) for d in self.defects[:5])
        more = f" (+{len(self.defects) - 5} more)" if len(self.defects) > 5 else ""
        super().__init__(f"invalid mesh: {head}{more}")


class NonPositiveVolumeError(ValueError):
    pass


@dataclass(frozen=True)
class Defect:
    element: int
    invariant: str
    detail: str = ""

    def __str__(self) -> str:
        extra = f" ({self.detail})" if self.detail else ""
        return f"{self.invariant} at element {self.element}{extra}"


@dataclass(frozen=True, eq=False)
class BoundaryMesh:
    """Closed oriented piecewise-linear boundary of a bounded domain.

    ``vertices`` has shape ``(V, d)`` with ``d`` in {2, 3}.  ``elements`` has
    shape ``(E, 2)`` (directed segments, domain on the left) in the plane or
    ``(E, 3)`` (counter-clockwise seen from outside) in space.
    """

    vertices: np.ndarray
    elements: np.ndarray
    orientation_flag: str = "outward"
    tags: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        e = np.array(self.elements, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] not in (2, 3):
            raise ValueError(f"vertices must have shape (V, 2) or (V, 3), got {v.shape}")
        if e.ndim != 2 or e.shape[1] != v.shape[1]:
            raise ValueError(
                f"elements must have shape (E, {v.shape[1]}) for ambient_dim {v.shape[1]}"
            )
        v.setflags(write=False)
        e.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "elements", e)

    @property
    def ambient_dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @cached_property
    def element_points(self) -> np.ndarray:
        """Vertex coordinates per element, shape ``(E, k, d)``."""
        return self.vertices[self.elements]

    @cached_property
    def element_measures(self) -> np.ndarray:
        """Segment lengths (2D) or triangle areas (3D)."""
        p = self.element_points
        if self.ambient_dim == 2:
            return np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
        n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        return 0.5 * np.linalg.norm(n, axis=1)

    @cached_property
    def element_normals(self) -> np.ndarray:
        """Outward unit normal of each element."""
        p = self.element_points
        if self.ambient_dim == 2:
            t = p[:, 1] - p[:, 0]
            n = np.stack([t[:, 1], -t[:, 0]], axis=1)
        else:
            n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        norm = np.linalg.norm(n, axis=1)
        return n / np.where(norm > 0, norm, 1.0)[:, None]

    @cached_property
    def element_centroids(self) -> np.ndarray:
        return self.element_points.mean(axis=1)

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges ``(i, j)`` with ``i < j`` (3D meshes)."""
        f = self.elements
        if self.ambient_dim == 2:
            e = np.sort(f, axis=1)
        else:
            e = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
        return np.unique(e, axis=0)

    @cached_property
    def component_labels(self) -> np.ndarray:
        """Connected-component label of every vertex (via element adjacency)."""
        f = self.elements
        k = f.shape[1]
        rows = np.concatenate([f[:, i] for i in range(k)])
        cols = np.concatenate([f[:, (i + 1) % k] for i in range(k)])
        g = sparse.coo_matrix(
            (np.ones(len(rows)), (rows, cols)), shape=(self.n_vertices, self.n_vertices)
        )
        _, labels = csgraph.connected_components(g, directed=False)
        return labels

    @property
    def component_count(self) -> int:
        used = np.unique(self.elements)
        return len(np.unique(self.component_labels[used]))

    @cached_property
    def bbox_diagonal(self) -> float:
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))

    def with_vertices(self, vertices) -> "BoundaryMesh":
        return BoundaryMesh(np.asarray(vertices, dtype=float), self.elements, self.orientation_flag,
                            dict(self.tags))

    def translated(self, offset) -> "BoundaryMesh":
        return self.with_vertices(self.vertices + np.asarray(offset, dtype=float))

    def scaled(self, s: float, about=None) -> "BoundaryMesh":
        about = np.zeros(self.ambient_dim) if about is None else np.asarray(about, dtype=float)
        return self.with_vertices(about + s * (self.vertices - about))

    def transformed(self, rotation, offset=None) -> "BoundaryMesh":
        """Apply ``x -> rotation @ x + offset``.  Reflections flip orientation
        and are rejected."""
        rot = np.asarray(rotation, dtype=float)
        if np.linalg.det(rot) <= 0:
            raise ValueError("only proper rigid motions are supported")
        v = self.vertices @ rot.T
        if offset is not None:
            v = v + np.asarray(offset, dtype=float)
        return self.with_vertices(v)


@dataclass(frozen=True)
class IsoperimetricSummary:
    volume: float
    perimeter: float
    iso_ratio: float
    deficit: float
    radius: float
    component_count: int

    def to_dict(self) -> dict:
        return {
            "volume": self.volume,
            "perimeter": self.perimeter,
            "iso_ratio": self.iso_ratio,
            "deficit": self.deficit,
            "radius": self.radius,
            "component_count": self.component_count,
        }


@dataclass(frozen=True)
class AnnulusSpec:
    """The shell ``{x : ||x - center| - radius| <= radius * width_ratio}``."""

    center: tuple
    radius: float
    width_ratio: float

    def __post_init__(self):
        if self.width_ratio < 0:
            raise ValueError("width_ratio must be >= 0")
        if self.radius <= 0:
            raise ValueError("radius must be > 0")

    @property
    def inner(self) -> float:
        return max(0.0, self.radius * (1.0 - self.width_ratio))

    @property
    def outer(self) -> float:
        return self.radius * (1.0 + self.width_ratio)

    def contains(self, points) -> np.ndarray:
        d = np.linalg.norm(np.asarray(points, dtype=float) - np.asarray(self.center), axis=-1)
        return np.abs(d - self.radius) <= self.radius * self.width_ratio


def unit_ball_volume(dim: int) -> float:
    """Volume of the unit ball in ``R^dim``."""
    return math.pi ** (dim / 2) / math.gamma(dim / 2 + 1)


def unit_sphere_area(dim: int) -> float:
    """Measure of the unit sphere bounding the unit ball of ``R^dim``."""
    return dim * unit_ball_volume(dim)


def ball_iso_ratio(dim: int) -> float:
    n = dim - 1
    return unit_sphere_area(dim) / unit_ball_volume(dim) ** (n / dim)


def validate(mesh: BoundaryMesh) -> list[Defect]:
    """Return every violated mesh invariant; empty list means valid."""
    defects: list[Defect] = []
    f = mesh.elements
    nv = mesh.n_vertices
    if len(f) == 0:
        return [Defect(-1, "empty-mesh")]
    bad_idx = np.nonzero((f < 0).any(axis=1) | (f >= nv).any(axis=1))[0]
    for i in bad_idx:
        defects.append(Defect(int(i), "index-out-of-range"))
    if defects:
        return defects

    if mesh.ambient_dim == 2:
        outdeg = np.bincount(f[:, 0], minlength=nv)
        indeg = np.bincount(f[:, 1], minlength=nv)
        used = (outdeg + indeg) > 0
        for v in np.nonzero(used & ((outdeg != 1) | (indeg != 1)))[0]:
            kind = "open-curve" if outdeg[v] + indeg[v] < 2 else "non-manifold-vertex"
            defects.append(Defect(int(v), kind, f"in={indeg[v]} out={outdeg[v]}"))
        lengths = mesh.element_measures
        tol = 1e-14 * max(mesh.bbox_diagonal, 1e-300)
        for i in np.nonzero(lengths <= tol)[0]:
            defects.append(Defect(int(i), "zero-length-edge"))
    else:
        directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        owner = np.tile(np.arange(len(f)), 3)
        key = directed[:, 0] * nv + directed[:, 1]
        rkey = directed[:, 1] * nv + directed[:, 0]
        uniq, counts = np.unique(key, return_counts=True)
        repeated = np.isin(key, uniq[counts > 1])
        unmatched = ~np.isin(rkey, uniq)
        reported = set()
        for j in np.nonzero(repeated | unmatched)[0]:
            und = (min(key[j], rkey[j]), max(key[j], rkey[j]))
            if und in reported:
                continue
            reported.add(und)
            a, b = divmod(int(key[j]), nv)
            reason = "repeated direction" if repeated[j] else "unmatched edge"
            defects.append(Defect(int(owner[j]), "non-manifold-edge", f"edge ({a},{b}): {reason}"))
        areas = mesh.element_measures
        tol = 1e-14 * max(mesh.bbox_diagonal, 1e-300) ** 2
        for i in np.nonzero(areas <= tol)[0]:
            defects.append(Defect(int(i), "zero-area-triangle"))
        ed = mesh.edges
        el = np.linalg.norm(mesh.vertices[ed[:, 0]] - mesh.vertices[ed[:, 1]], axis=1)
        for i in np.nonzero(el <= 1e-14 * max(mesh.bbox_diagonal, 1e-300))[0]:
            defects.append(Defect(int(i), "zero-length-edge", f"edge {tuple(ed[i])}"))
    if not defects and _signed_volume(mesh) <= 0:
        defects.append(Defect(-1, "nonpositive-volume", "orientation must be outward"))
    return defects


def _require_valid(mesh: BoundaryMesh) -> None:
    if mesh.tags.get("_validated"):
        return
    defects = validate(mesh)
    if defects:
        raise InvalidMeshError(defects)
    mesh.tags["_validated"] = True


def _signed_volume(mesh: BoundaryMesh) -> float:
    # cone volumes from the vertex mean; keeps translation error at rounding level
    ref = mesh.vertices.mean(axis=0)
    p = mesh.element_points - ref
    if mesh.ambient_dim == 2:
        return 0.5 * float(np.sum(p[:, 0, 0] * p[:, 1, 1] - p[:, 0, 1] * p[:, 1, 0]))
    return float(np.einsum("ij,ij->i", p[:, 0], np.cross(p[:, 1], p[:, 2])).sum()) / 6.0


def enclosed_volume(mesh: BoundaryMesh) -> float:
    """Signed enclosed volume (area in the plane)."""
    _require_valid(mesh)
    return _signed_volume(mesh)


def perimeter(mesh: BoundaryMesh) -> float:
    """Total boundary measure: length in the plane, area in space."""
    _require_valid(mesh)
    return float(mesh.element_measures.sum())


def volume_radius(volume: float, dim: int) -> float:
    """Radius of the ball of the given volume in ``R^dim``."""
    return (volume / unit_ball_volume(dim)) ** (1.0 / dim)


def isoperimetric_summary(mesh: BoundaryMesh) -> IsoperimetricSummary:
    _require_valid(mesh)
    vol = enclosed_volume(mesh)
    if vol <= 0:
        raise NonPositiveVolumeError(f"enclosed volume {vol} is not positive")
    per = perimeter(mesh)
    dim = mesh.ambient_dim
    n = dim - 1
    iso = per / vol ** (n / dim)
    return IsoperimetricSummary(
        volume=vol,
        perimeter=per,
        iso_ratio=iso,
        deficit=iso / ball_iso_ratio(dim) - 1.0,
        radius=volume_radius(vol, dim),
        component_count=mesh.component_count,
    )


def loops_2d(mesh: BoundaryMesh) -> list[np.ndarray]:
    """Vertex loops of a valid planar mesh, each in traversal order."""
    nxt = np.full(mesh.n_vertices, -1, dtype=np.int64)
    nxt[mesh.elements[:, 0]] = mesh.elements[:, 1]
    seen = np.zeros(mesh.n_vertices, dtype=bool)
    loops = []
    for start in mesh.elements[:, 0]:
        if seen[start]:
            continue
        idx = []
        v = start
        while not seen[v]:
            seen[v] = True
            idx.append(v)
            v = nxt[v]
        loops.append(mesh.vertices[idx])
    return loops

"""Domain families: spheres, nearly spherical graphs, tube trees, unions.

Every 3D generator works in the same way: build a triangulation of the unit
sphere (an icosphere, optionally with refined polar patches around chosen
axes), then push each direction ``w`` out to a radius ``r(w)``.  Because the
sphere triangulation is closed and oriented, so is the result, and star-shaped
domains (balls with radial spikes, radial graphs) come out watertight without
any boolean surgery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mesh import BoundaryMesh, unit_ball_volume

MAX_LEVEL = 8


class GeneratorError(ValueError):
    pass


# --------------------------------------------------------------------------
# sphere triangulations


def _icosahedron():
    t = (1.0 + math.sqrt(5.0)) / 2.0
    v = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=float,
    )
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    return v / np.linalg.norm(v, axis=1)[:, None], f


def unit_icosphere(level: int) -> tuple[np.ndarray, np.ndarray]:
    """Vertices on the unit sphere and outward-oriented faces."""
    if level < 0:
        raise GeneratorError("level must be >= 0")
    if level > MAX_LEVEL:
        raise GeneratorError(f"level {level} exceeds the memory guard ({MAX_LEVEL})")
    v, f = _icosahedron()
    for _ in range(level):
        e = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
        ue, inv = np.unique(e, axis=0, return_inverse=True)
        inv = inv.ravel()
        mid = v[ue[:, 0]] + v[ue[:, 1]]
        mid /= np.linalg.norm(mid, axis=1)[:, None]
        m = len(v) + inv.reshape(3, -1).T
        v = np.vstack([v, mid])
        a, b, c = f.T
        ab, bc, ca = m.T
        f = np.concatenate(
            [
                np.stack([a, ab, ca], 1),
                np.stack([b, bc, ab], 1),
                np.stack([c, ca, bc], 1),
                np.stack([ab, bc, ca], 1),
            ]
        )
    return v, f


def icosahedral_directions() -> np.ndarray:
    """The 12 vertex directions of the regular icosahedron."""
    return _icosahedron()[0]


def _frame(axis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    axis = axis / np.linalg.norm(axis)
    helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(axis, helper)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(axis, e1)


def _zip_rings(inner: np.ndarray, phi_in: np.ndarray, outer: np.ndarray,
               phi_out: np.ndarray) -> list[tuple[int, int, int]]:
    """Triangulate the band between two closed rings of vertex ids sorted by
    increasing azimuth.  ``inner`` is the ring closer to the patch pole; the
    output is counter-clockwise seen from outside."""
    inner = list(inner) + [inner[0]]
    outer = list(outer) + [outer[0]]
    pin = list(phi_in) + [phi_in[0] + 2 * math.pi]
    pout = list(phi_out) + [phi_out[0] + 2 * math.pi]
    i = j = 0
    ni, no = len(inner) - 1, len(outer) - 1
    tris = []
    while i < ni or j < no:
        adv_outer = i >= ni or (j < no and pout[j + 1] <= pin[i + 1])
        if adv_outer:
            tris.append((inner[i], outer[j], outer[j + 1]))
            j += 1
        else:
            tris.append((inner[i], outer[j], inner[i + 1]))
            i += 1
    return tris


@dataclass
class PolarPatch:
    """Refined polar grid around ``axis`` replacing the icosphere cap.

    ``thetas`` are ring polar angles (strictly increasing, > 0) measured from
    the axis; ``n_az`` vertices per ring; consecutive rings are staggered by
    half a step.
    """

    axis: np.ndarray
    thetas: np.ndarray
    n_az: int


def patched_sphere(level: int, patches: list[PolarPatch] = ()) -> tuple[np.ndarray, np.ndarray]:
    """Unit-sphere triangulation: icosphere with polar patches stitched in."""
    v, f = unit_icosphere(level)
    if not patches:
        return v, f
    h = _edge_angle(level)
    keep_face = np.ones(len(f), dtype=bool)
    axes = []
    for p in patches:
        ax = np.asarray(p.axis, dtype=float)
        ax = ax / np.linalg.norm(ax)
        axes.append(ax)
        cut = p.thetas[-1] + 0.6 * h
        ang = np.arccos(np.clip(v @ ax, -1.0, 1.0))
        keep_face &= ~(ang[f] < cut).any(axis=1)
    for a in range(len(axes)):
        for b in range(a + 1, len(axes)):
            sep = math.acos(np.clip(axes[a] @ axes[b], -1, 1))
            if sep < patches[a].thetas[-1] + patches[b].thetas[-1] + 3.0 * h:
                raise GeneratorError("polar patches overlap; spread the axes or refine")
    f = f[keep_face]
    verts = [v]
    faces = [f]
    nv = len(v)
    for p, ax in zip(patches, axes):
        e1, e2 = _frame(ax)
        rings, phis = [], []
        for k, th in enumerate(p.thetas):
            phi = (np.arange(p.n_az) + 0.5 * (k % 2)) * (2 * math.pi / p.n_az)
            pts = (
                math.cos(th) * ax[None, :]
                + math.sin(th) * (np.cos(phi)[:, None] * e1 + np.sin(phi)[:, None] * e2)
            )
            rings.append(np.arange(nv, nv + p.n_az))
            phis.append(phi)
            verts.append(pts)
            nv += p.n_az
        pole = nv
        verts.append(ax[None, :])
        nv += 1
        tris = []
        r0 = rings[0]
        for m in range(p.n_az):
            tris.append((pole, r0[m], r0[(m + 1) % p.n_az]))
        for k in range(len(rings) - 1):
            tris += _zip_rings(rings[k], phis[k], rings[k + 1], phis[k + 1])
        # hole boundary from the remaining icosphere faces
        loop = _hole_loop(f, v, ax)
        lp = v[loop]
        phi_l = np.mod(np.arctan2(lp @ e2, lp @ e1), 2 * math.pi)
        order = np.argsort(phi_l)
        tris += _zip_rings(rings[-1], phis[-1], loop[order], phi_l[order])
        faces.append(np.asarray(tris, dtype=np.int64))
    v_all = np.vstack(verts)
    f_all = np.concatenate(faces)
    used = np.unique(f_all)
    remap = -np.ones(len(v_all), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return v_all[used], remap[f_all]


def _hole_loop(f: np.ndarray, v: np.ndarray, axis: np.ndarray) -> np.ndarray:
    """Boundary loop of the face set ``f`` closest to ``axis``."""
    directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    nv = len(v)
    key = directed[:, 0] * nv + directed[:, 1]
    rkey = directed[:, 1] * nv + directed[:, 0]
    boundary = directed[~np.isin(rkey, key)]
    nxt = dict(zip(boundary[:, 0].tolist(), boundary[:, 1].tolist()))
    if len(nxt) != len(boundary):
        raise GeneratorError("patch hole is not a simple loop")
    loops, seen = [], set()
    for start in nxt:
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        cur = nxt[start]
        while cur != start:
            if cur in seen:
                raise GeneratorError("patch hole is not a simple loop")
            loop.append(cur)
            seen.add(cur)
            cur = nxt[cur]
        loops.append(np.asarray(loop, dtype=np.int64))
    best = max(loops, key=lambda lp: float(v[lp].mean(axis=0) @ axis))
    return best


def _edge_angle(level: int) -> float:
    """Typical icosphere edge length (unit radius) at ``level``."""
    return 1.1 / 2**level


def azimuth_count(level: int) -> int:
    return max(16, 2**level)


def _graded_thetas(theta_start: float, level: int, n_az: int, include_start: bool = True) -> list[float]:
    """Rings from ``theta_start`` outwards, growing geometrically until the
    ring spacing matches the icosphere edge."""
    h = _edge_angle(level)
    out = [theta_start] if include_start else []
    th = theta_start
    growth = 1.0 + 2 * math.pi / n_az
    while True:
        step = max(th * (growth - 1.0), 1e-12)
        if step >= 0.7 * h:
            break
        th += step
        out.append(th)
    return out


def _sphere_mesh(directions: np.ndarray, faces: np.ndarray, radii: np.ndarray,
                 center=(0.0, 0.0, 0.0), tags=None) -> BoundaryMesh:
    pts = np.asarray(center, dtype=float) + radii[:, None] * directions
    return BoundaryMesh(pts, faces, tags=dict(tags or {}))


# --------------------------------------------------------------------------
# basic shapes


def icosphere(center=(0.0, 0.0, 0.0), radius: float = 1.0, level: int = 3) -> BoundaryMesh:
    """Subdivided icosahedron projected onto the sphere ``S_center(radius)``."""
    if radius <= 0:
        raise GeneratorError("radius must be > 0")
    v, f = unit_icosphere(level)
    return _sphere_mesh(v, f, np.full(len(v), float(radius)), center,
                        {"family": "icosphere", "level": level})


def circle(center=(0.0, 0.0), radius: float = 1.0, segments: int = 64) -> BoundaryMesh:
    """Regular polygon inscribed in the circle."""
    if segments < 3:
        raise GeneratorError("a circle needs at least 3 segments")
    if radius <= 0:
        raise GeneratorError("radius must be > 0")
    t = 2 * math.pi * np.arange(segments) / segments
    pts = np.asarray(center, dtype=float) + radius * np.stack([np.cos(t), np.sin(t)], axis=1)
    idx = np.arange(segments)
    return BoundaryMesh(pts, np.stack([idx, (idx + 1) % segments], axis=1),
                        tags={"family": "circle", "segments": segments})


def polygon(points) -> BoundaryMesh:
    """Closed polygon through ``points`` (counter-clockwise)."""
    pts = np.asarray(points, dtype=float)
    idx = np.arange(len(pts))
    return BoundaryMesh(pts, np.stack([idx, (idx + 1) % len(pts)], axis=1),
                        tags={"family": "polygon"})


def square(side: float = 1.0, center=(0.0, 0.0)) -> BoundaryMesh:
    c = np.asarray(center, dtype=float)
    s = side / 2
    return polygon(c + np.array([[-s, -s], [s, -s], [s, s], [-s, s]]))


def ellipse(axes=(1.0, 1.0), segments: int = 256, center=(0.0, 0.0)) -> BoundaryMesh:
    m = circle((0.0, 0.0), 1.0, segments)
    return BoundaryMesh(np.asarray(center) + m.vertices * np.asarray(axes, dtype=float), m.elements,
                        tags={"family": "ellipse", "axes": list(axes)})


def radial_curve(radii, angles=None, center=(0.0, 0.0)) -> BoundaryMesh:
    """Star-shaped polygon with vertices ``center + r_i (cos t_i, sin t_i)``."""
    radii = np.asarray(radii, dtype=float)
    if angles is None:
        angles = 2 * math.pi * np.arange(len(radii)) / len(radii)
    angles = np.asarray(angles, dtype=float)
    pts = np.asarray(center, dtype=float) + radii[:, None] * np.stack(
        [np.cos(angles), np.sin(angles)], axis=1)
    m = polygon(pts)
    m.tags["family"] = "radial_curve"
    return m


def random_star_polygon(rng: np.random.Generator, max_vertices: int = 512) -> BoundaryMesh:
    """Random polygon star-shaped about the origin.

    Angles are sorted uniforms; radii mix a smooth Fourier part with
    per-vertex noise so both gentle and jagged outlines appear.
    """
    m = int(rng.integers(3, max_vertices + 1))
    while True:
        t = np.sort(rng.uniform(0.0, 2 * math.pi, m))
        if np.all(np.diff(np.concatenate([t, [t[0] + 2 * math.pi]])) > 1e-9):
            break
    k = int(rng.integers(1, 8))
    coef = rng.normal(0.0, 0.15, size=(k, 2)) / np.arange(1, k + 1)[:, None]
    smooth = sum(coef[j, 0] * np.cos((j + 1) * t) + coef[j, 1] * np.sin((j + 1) * t) for j in range(k))
    noise = rng.uniform(0.0, float(rng.choice([0.0, 0.05, 0.3])), m)
    r = np.exp(smooth) * (1.0 - noise)
    return radial_curve(r, t)


def ellipsoid(axes=(1.0, 1.0, 1.0), level: int = 3, center=(0.0, 0.0, 0.0)) -> BoundaryMesh:
    """Icosphere stretched along the coordinate axes."""
    a = np.asarray(axes, dtype=float)
    if np.any(a <= 0):
        raise GeneratorError("ellipsoid axes must be positive")
    v, f = unit_icosphere(level)
    return BoundaryMesh(np.asarray(center, dtype=float) + v * a, f,
                        tags={"family": "ellipsoid", "axes": a.tolist(), "level": level})


def disjoint_union(meshes: list[BoundaryMesh], check: bool = True) -> BoundaryMesh:
    """Concatenate meshes of pairwise disjoint domains."""
    meshes = list(meshes)
    if not meshes:
        raise GeneratorError("nothing to unite")
    dim = meshes[0].ambient_dim
    if any(m.ambient_dim != dim for m in meshes):
        raise GeneratorError("mixed ambient dimensions")
    if check:
        boxes = [(m.vertices.min(axis=0), m.vertices.max(axis=0)) for m in meshes]
        for i in range(len(meshes)):
            for j in range(i + 1, len(meshes)):
                lo = np.maximum(boxes[i][0], boxes[j][0])
                hi = np.minimum(boxes[i][1], boxes[j][1])
                if np.all(lo < hi) and _meshes_overlap(meshes[i], meshes[j]):
                    raise GeneratorError(f"components {i} and {j} overlap")
    verts, faces, off = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.elements + off)
        off += m.n_vertices
    return BoundaryMesh(np.vstack(verts), np.concatenate(faces), tags={"family": "disjoint_union"})


def _meshes_overlap(a: BoundaryMesh, b: BoundaryMesh) -> bool:
    from .distances import point_in_solid_batch

    return bool(np.any(point_in_solid_batch(a, b.vertices) > 0.5)
                or np.any(point_in_solid_batch(b, a.vertices) > 0.5))


def far_balls(radii, level: int = 3, gap: float = 4.0) -> BoundaryMesh:
    """Disjoint balls laid out along the x axis (first ball at the origin)."""
    meshes, x = [], 0.0
    for k, r in enumerate(radii):
        if k > 0:
            x += radii[k - 1] + gap + r
        meshes.append(icosphere((x, 0.0, 0.0), r, level))
    out = disjoint_union(meshes, check=False)
    out.tags.update({"family": "far_balls", "radii": list(map(float, radii)), "gap": gap})
    return out


def ball_with_satellites(k: int, r: float, level: int = 3, gap: float = 1.0) -> BoundaryMesh:
    """Unit ball plus ``k`` small balls of radius ``r / k`` placed around it
    at distance ``1 + gap``: the family showing that many tiny components
    cost little deficit."""
    if k < 1:
        return icosphere((0, 0, 0), 1.0, level)
    rs = r / k
    dirs = _fibonacci_directions(k)
    meshes = [icosphere((0, 0, 0), 1.0, level)]
    for d in dirs:
        meshes.append(icosphere(tuple((1.0 + gap) * d), rs, max(level - 1, 1)))
    out = disjoint_union(meshes, check=False)
    out.tags.update({"family": "ball_with_satellites", "k": k, "r": r})
    return out


def _fibonacci_directions(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    phi = math.pi * (1.0 + math.sqrt(5.0)) * i
    s = np.sqrt(1.0 - z * z)
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)


def fibonacci_sphere(n: int, center=(0.0, 0.0, 0.0), radius: float = 1.0) -> np.ndarray:
    """Quasi-uniform sample of ``n`` points on a sphere."""
    return np.asarray(center, dtype=float) + radius * _fibonacci_directions(n)


# --------------------------------------------------------------------------
# nearly spherical graphs


def real_sph_harm(l: int, m: int, xyz: np.ndarray) -> np.ndarray:
    """Real orthonormal spherical harmonic ``Y_l^m`` at unit vectors, l <= 4."""
    x, y, z = xyz[:, 0], xyz[:, 1], xyz[:, 2]
    pi = math.pi
    table = {
        (0, 0): lambda: np.full_like(x, 0.5 * math.sqrt(1 / pi)),
        (1, -1): lambda: math.sqrt(3 / (4 * pi)) * y,
        (1, 0): lambda: math.sqrt(3 / (4 * pi)) * z,
        (1, 1): lambda: math.sqrt(3 / (4 * pi)) * x,
        (2, -2): lambda: 0.5 * math.sqrt(15 / pi) * x * y,
        (2, -1): lambda: 0.5 * math.sqrt(15 / pi) * y * z,
        (2, 0): lambda: 0.25 * math.sqrt(5 / pi) * (3 * z * z - 1),
        (2, 1): lambda: 0.5 * math.sqrt(15 / pi) * x * z,
        (2, 2): lambda: 0.25 * math.sqrt(15 / pi) * (x * x - y * y),
        (3, -3): lambda: 0.25 * math.sqrt(35 / (2 * pi)) * y * (3 * x * x - y * y),
        (3, -2): lambda: 0.5 * math.sqrt(105 / pi) * x * y * z,
        (3, -1): lambda: 0.25 * math.sqrt(21 / (2 * pi)) * y * (5 * z * z - 1),
        (3, 0): lambda: 0.25 * math.sqrt(7 / pi) * (5 * z**3 - 3 * z),
        (3, 1): lambda: 0.25 * math.sqrt(21 / (2 * pi)) * x * (5 * z * z - 1),
        (3, 2): lambda: 0.25 * math.sqrt(105 / pi) * (x * x - y * y) * z,
        (3, 3): lambda: 0.25 * math.sqrt(35 / (2 * pi)) * x * (x * x - 3 * y * y),
        (4, -4): lambda: 0.75 * math.sqrt(35 / pi) * x * y * (x * x - y * y),
        (4, -3): lambda: 0.75 * math.sqrt(35 / (2 * pi)) * y * (3 * x * x - y * y) * z,
        (4, -2): lambda: 0.75 * math.sqrt(5 / pi) * x * y * (7 * z * z - 1),
        (4, -1): lambda: 0.75 * math.sqrt(5 / (2 * pi)) * y * (7 * z**3 - 3 * z),
        (4, 0): lambda: (3 / 16) * math.sqrt(1 / pi) * (35 * z**4 - 30 * z * z + 3),
        (4, 1): lambda: 0.75 * math.sqrt(5 / (2 * pi)) * x * (7 * z**3 - 3 * z),
        (4, 2): lambda: (3 / 8) * math.sqrt(5 / pi) * (x * x - y * y) * (7 * z * z - 1),
        (4, 3): lambda: 0.75 * math.sqrt(35 / (2 * pi)) * x * (x * x - 3 * y * y) * z,
        (4, 4): lambda: (3 / 16) * math.sqrt(35 / pi) * (x * x * (x * x - 3 * y * y) - y * y * (3 * x * x - y * y)),
    }
    if (l, m) not in table:
        raise GeneratorError(f"spherical harmonic ({l},{m}) not available (l <= 4)")
    return table[(l, m)]()


def sharpness_radius(delta: float, n: int = 2, p: float = 4.0) -> float:
    """Support radius ``delta ** (p / (2p - 2n + pn))`` of the extremal bump."""
    return delta ** (p / (2 * p - 2 * n + p * n))


def sharpness_profile(t, delta: float, n: int = 2, p: float = 4.0) -> np.ndarray:
    """Radial bump that makes the Lipschitz/Hausdorff exponents sharp.

    ``t`` is the distance from the bump centre in ``R^n`` (on the sphere: the
    geodesic distance from the pole).
    """
    t = np.abs(np.asarray(t, dtype=float))
    r = sharpness_radius(delta, n, p)
    e = 2.0 - n / p
    out = np.zeros_like(t)
    outer = (t >= r / 2) & (t <= r)
    inner = t < r / 2
    out[outer] = (r - t[outer]) ** e / 3.0
    out[inner] = (2.0 * (r / 2) ** e - t[inner] ** e) / 3.0
    return out


@dataclass
class GraphFunction:
    """Radial graph ``u`` over the unit sphere: the surface is ``(1 + u(w)) w``.

    ``basis`` maps ``(l, m)`` to a real spherical-harmonic coefficient, or is
    the string ``"sharpness"``; ``amplitude`` multiplies the whole function.
    ``profile_params`` holds ``p``, ``delta`` and ``n`` for the sharpness bump
    (centred at the north pole).
    """

    basis: dict | str = field(default_factory=dict)
    amplitude: float = 1.0
    profile_params: dict = field(default_factory=dict)

    @property
    def is_profile(self) -> bool:
        return self.basis == "sharpness"

    def __call__(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if self.is_profile:
            theta = np.arccos(np.clip(w[:, 2], -1.0, 1.0))
            pp = self.profile_params
            return self.amplitude * sharpness_profile(
                theta, pp["delta"], pp.get("n", 2), pp.get("p", 4.0))
        out = np.zeros(len(w))
        for (l, m), c in self.basis.items():
            out += c * real_sph_harm(int(l), int(m), w)
        return self.amplitude * out

    def sup_bound(self) -> float:
        """Upper bound for ``||u||_inf``."""
        if self.is_profile:
            pp = self.profile_params
            r = sharpness_radius(pp["delta"], pp.get("n", 2), pp.get("p", 4.0))
            e = 2.0 - pp.get("n", 2) / pp.get("p", 4.0)
            return abs(self.amplitude) * 2.0 * (r / 2) ** e / 3.0
        # |Y_l^m| <= sqrt((2l+1)/(4 pi))
        return abs(self.amplitude) * sum(
            abs(c) * math.sqrt((2 * int(l) + 1) / (4 * math.pi)) for (l, m), c in self.basis.items())


def harmonic(l: int = 2, m: int = 0, amplitude: float = 0.05) -> GraphFunction:
    return GraphFunction({(l, m): 1.0}, amplitude)


def sharpness_graph(delta: float, p: float = 4.0, n: int = 2) -> GraphFunction:
    return GraphFunction("sharpness", 1.0, {"delta": delta, "p": p, "n": n})


def _profile_patch(g: GraphFunction, level: int) -> PolarPatch:
    pp = g.profile_params
    r = sharpness_radius(pp["delta"], pp.get("n", 2), pp.get("p", 4.0))
    n_az = azimuth_count(level)
    inner = list(np.linspace(0.0, r, 33)[1:])
    outer = _graded_thetas(r, level, n_az, include_start=False)
    return PolarPatch(np.array([0.0, 0.0, 1.0]), np.asarray(inner + outer), n_az)


def nearly_spherical(u: GraphFunction, level: int = 4) -> BoundaryMesh:
    """Boundary ``{(1 + u(w)) w}`` over a (patched) unit icosphere."""
    if u.sup_bound() >= 0.5:
        raise GeneratorError("amplitude too large: need ||u||_inf < 1/2")
    patches = [_profile_patch(u, level)] if u.is_profile else []
    w, f = patched_sphere(level, patches)
    return _sphere_mesh(w, f, 1.0 + u(w),
                        tags={"family": "nearly_spherical", "level": level,
                              "graph": _graph_tag(u)})


def _graph_tag(u: GraphFunction) -> dict:
    if u.is_profile:
        return {"basis": "sharpness", "amplitude": u.amplitude, "profile_params": dict(u.profile_params)}
    return {"basis": {f"{l},{m}": c for (l, m), c in u.basis.items()}, "amplitude": u.amplitude}


def graph_reference(mesh: BoundaryMesh) -> BoundaryMesh:
    """The same triangulation with ``u = 0``: the unit sphere discretized
    exactly as ``mesh`` is.  Used to remove the triangulation's own deficit."""
    w = mesh.vertices / np.linalg.norm(mesh.vertices, axis=1)[:, None]
    return BoundaryMesh(w, mesh.elements, tags={"family": "graph_reference"})


# --------------------------------------------------------------------------
# balls with thin tubes


@dataclass
class TreeSpec:
    """Segments of a tree whose ``tube_radius``-neighbourhood is added to a
    ball.  Attached segments must be radial (their line passes through the
    ball centre) and start on or inside the sphere."""

    segments: list
    tube_radius: float
    attach_to_ball: bool = True

    def __post_init__(self):
        if self.tube_radius <= 0:
            raise GeneratorError("tube radius must be > 0")
        self.segments = [(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
                         for a, b in self.segments]

    @property
    def total_length(self) -> float:
        return float(sum(np.linalg.norm(b - a) for a, b in self.segments))

    def polyline_samples(self, h: float) -> np.ndarray:
        pts = []
        for a, b in self.segments:
            k = max(2, int(math.ceil(np.linalg.norm(b - a) / h)) + 1)
            pts.append(a + np.linspace(0.0, 1.0, k)[:, None] * (b - a))
        return np.vstack(pts) if pts else np.zeros((0, 3))


def radial_tree(directions, length: float, eps: float, ball_radius: float = 1.0,
                center=(0.0, 0.0, 0.0)) -> TreeSpec:
    """Radial segments of the given length starting on the sphere."""
    c = np.asarray(center, dtype=float)
    segs = []
    for d in np.atleast_2d(np.asarray(directions, dtype=float)):
        d = d / np.linalg.norm(d)
        segs.append((c + ball_radius * d, c + (ball_radius + length) * d))
    return TreeSpec(segs, eps, True)


def _capsule_exit(theta: np.ndarray, top: float, eps: float) -> np.ndarray:
    """Distance from the origin along a ray at polar angle ``theta`` to the
    boundary of the eps-neighbourhood of the axis segment [0, top]."""
    s, c = np.sin(theta), np.cos(theta)
    lateral = eps / np.maximum(s, 1e-300)
    in_cap = lateral * c > top
    disc = np.maximum(eps * eps - (top * s) ** 2, 0.0)
    cap = top * c + np.sqrt(disc)
    out = np.where(in_cap, cap, lateral)
    # rays pointing away from the segment only cross the ball around its base
    return np.where(c > 0.0, out, eps)


def _tube_patch(axis, top: float, eps: float, ball_radius: float, level: int) -> PolarPatch:
    n_az = azimuth_count(level)
    dz = 2 * math.pi * eps / n_az
    rel_top, rel_eps = top / ball_radius, eps / ball_radius
    # cap: polar angle psi from the tip
    n_cap = max(4, n_az // 4)
    psi = np.linspace(0.0, math.pi / 2, n_cap + 1)[1:]
    cap = np.arctan2(rel_eps * np.sin(psi), rel_top + rel_eps * np.cos(psi))
    # lateral: uniform in height down to the junction
    z_j = math.sqrt(1.0 - rel_eps**2)
    n_lat = max(2, int(math.ceil((rel_top - z_j) / (dz / ball_radius))))
    z = np.linspace(rel_top, z_j, n_lat + 1)[1:]
    lat = np.arctan2(rel_eps, z)
    theta_j = math.asin(rel_eps)
    outer = _graded_thetas(theta_j, level, n_az, include_start=False)
    thetas = np.concatenate([cap, lat, outer])
    return PolarPatch(np.asarray(axis, dtype=float), thetas, n_az)


def tube_tree_domain(ball_radius: float = 1.0, tree: TreeSpec | None = None, level: int = 4,
                     center=(0.0, 0.0, 0.0)) -> BoundaryMesh:
    """Ball with thin tubes (capsules of radius ``tree.tube_radius``) added.

    Attached segments must be radial; each becomes a spike whose lateral
    surface, hemispherical cap and junction crease are resolved by a polar
    patch, so the union is meshed as one star-shaped radial graph.  Detached
    segments become separate capsule components.
    """
    c = np.asarray(center, dtype=float)
    if tree is None or not tree.segments:
        m = icosphere(tuple(c), ball_radius, level)
        m.tags.update({"family": "tube_tree"})
        return m
    eps = tree.tube_radius
    spikes, detached = [], []
    for a, b in tree.segments:
        if not tree.attach_to_ball:
            detached.append((a, b))
            continue
        ra, rb = np.linalg.norm(a - c), np.linalg.norm(b - c)
        if rb < ra:
            a, b, ra, rb = b, a, rb, ra
        d = (b - a) / np.linalg.norm(b - a)
        if np.linalg.norm(np.cross(b - c, d)) > 1e-9 * max(rb, 1.0):
            raise GeneratorError("attached tree segments must be radial")
        if ra > ball_radius * (1 + 1e-9):
            raise GeneratorError("attached segment does not touch the ball")
        if rb <= ball_radius:
            continue
        if eps >= 0.5 * (rb - ball_radius) or eps >= 0.25 * ball_radius:
            raise GeneratorError("tube radius must be small against the segment length")
        spikes.append((d, rb))
    merged = {}
    for d, top in spikes:
        key = tuple(np.round(d, 9))
        merged[key] = max(merged.get(key, 0.0), top)
    spikes = [(np.asarray(k), t) for k, t in merged.items()]
    patches = [_tube_patch(d, top, eps, ball_radius, level) for d, top in spikes]
    try:
        w, f = patched_sphere(level, patches)
    except GeneratorError as exc:
        raise GeneratorError(f"self-intersecting or too dense tube configuration: {exc}") from exc
    r = np.full(len(w), float(ball_radius))
    for d, top in spikes:
        theta = np.arccos(np.clip(w @ d, -1.0, 1.0))
        r = np.maximum(r, _capsule_exit(theta, top, eps))
    mesh = _sphere_mesh(w, f, r, c)
    if detached:
        parts = [mesh] + [capsule(a, b, eps, level) for a, b in detached]
        for a, b in detached:
            if _segment_ball_distance(a, b, c) <= ball_radius + eps:
                raise GeneratorError("detached segment touches the ball")
        mesh = disjoint_union(parts, check=False)
    mesh.tags.update({"family": "tube_tree", "level": level, "tube_radius": eps,
                      "tree_length": tree.total_length, "ball_radius": ball_radius})
    return mesh


def _segment_ball_distance(a, b, c) -> float:
    d = b - a
    t = np.clip(np.dot(c - a, d) / np.dot(d, d), 0.0, 1.0)
    return float(np.linalg.norm(a + t * d - c))


def capsule(a, b, eps: float, level: int = 4) -> BoundaryMesh:
    """Closed mesh of the eps-neighbourhood of segment ``ab``."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    axis = b - a
    length = float(np.linalg.norm(axis))
    axis /= length
    e1, e2 = _frame(axis)
    n_az = azimuth_count(level)
    n_cap = max(4, n_az // 4)
    dz = 2 * math.pi * eps / n_az
    n_lat = max(1, int(math.ceil(length / dz)))
    # profile from the tip at b, down to the tip at a: (height along axis from a, radius)
    psi = np.linspace(0.0, math.pi / 2, n_cap + 1)[1:]
    top = [(length + eps * math.cos(s), eps * math.sin(s)) for s in psi]
    lat = [(length - length * k / n_lat, eps) for k in range(1, n_lat)]
    beta = np.linspace(0.0, math.pi / 2, n_cap + 1)[:-1]
    bot = [(-eps * math.sin(s), eps * math.cos(s)) for s in beta]
    profile = top + lat + bot
    verts = [b + eps * axis]
    rings, phis = [], []
    for k, (z, rho) in enumerate(profile):
        phi = (np.arange(n_az) + 0.5 * (k % 2)) * (2 * math.pi / n_az)
        pts = a + z * axis + rho * (np.cos(phi)[:, None] * e1 + np.sin(phi)[:, None] * e2)
        rings.append(np.arange(1 + k * n_az, 1 + (k + 1) * n_az))
        phis.append(phi)
        verts.append(pts)
    bottom = 1 + len(profile) * n_az
    verts.append(a - eps * axis)
    tris = [(0, rings[0][m], rings[0][(m + 1) % n_az]) for m in range(n_az)]
    for k in range(len(rings) - 1):
        tris += _zip_rings(rings[k], phis[k], rings[k + 1], phis[k + 1])
    last = rings[-1]
    tris += [(bottom, last[(m + 1) % n_az], last[m]) for m in range(n_az)]
    return BoundaryMesh(np.vstack([np.atleast_2d(x) for x in verts]), np.asarray(tris),
                        tags={"family": "capsule"})


def spiky_ball(n_spikes: int = 6, height: float = 0.5, eps: float = 0.02, level: int = 4,
               radius: float = 1.0, directions=None) -> BoundaryMesh:
    """Ball with ``n_spikes`` radial tubes of the given height and radius."""
    if height <= 0 or n_spikes == 0:
        m = icosphere((0.0, 0.0, 0.0), radius, level)
        m.tags.update({"family": "spiky_ball"})
        return m
    dirs = _fibonacci_directions(n_spikes) if directions is None else np.asarray(directions, float)
    tree = radial_tree(dirs, height, eps, radius)
    m = tube_tree_domain(radius, tree, level)
    m.tags.update({"family": "spiky_ball", "n_spikes": n_spikes, "height": height})
    return m


def ball_volume(radius: float, dim: int = 3) -> float:
    return unit_ball_volume(dim) * radius**dim

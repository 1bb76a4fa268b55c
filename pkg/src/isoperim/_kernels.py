"""Vectorized geometric kernels shared by the measurement modules.

Everything here works on plain numpy arrays; no mesh objects.
"""

from __future__ import annotations

import numpy as np


def _cross2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def edge_disk_area(a: np.ndarray, b: np.ndarray, r) -> np.ndarray:
    """Signed area of the disk of radius ``r`` (centred at the origin)
    intersected with the triangle ``(0, a, b)``.

    Summing over the directed edges of a closed polygon gives the exact area
    of polygon ∩ disk, with the polygon's orientation sign.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    r = np.broadcast_to(np.asarray(r, dtype=float), a.shape[:-1])
    d = b - a
    qa = np.einsum("...i,...i->...", d, d)
    qb = np.einsum("...i,...i->...", a, d)
    qc = np.einsum("...i,...i->...", a, a) - r * r
    disc = qb * qb - qa * qc
    hit = (disc > 0.0) & (qa > 0.0)
    sq = np.sqrt(np.where(hit, disc, 0.0))
    safe_qa = np.where(qa > 0.0, qa, 1.0)
    t1 = np.clip((-qb - sq) / safe_qa, 0.0, 1.0)
    t2 = np.clip((-qb + sq) / safe_qa, 0.0, 1.0)
    t1 = np.where(hit, t1, 1.0)
    t2 = np.where(hit, t2, 1.0)
    # clipped parameters map to the exact endpoints: a rounded copy of an
    # endpoint at the disk center would give an arbitrary sector angle
    def point(t):
        p = a + t[..., None] * d
        p = np.where((t == 0.0)[..., None], a, p)
        return np.where((t == 1.0)[..., None], b, p)

    p1 = point(t1)
    p2 = point(t2)

    def sector(u, v):
        ang = np.arctan2(_cross2(u, v), np.einsum("...i,...i->...", u, v))
        return 0.5 * r * r * ang

    return sector(a, p1) + 0.5 * _cross2(p1, p2) + sector(p2, b)


def polygon_disk_area(loops: list[np.ndarray], center, r: float) -> float:
    """Exact area of (union of oriented polygon loops) ∩ disk."""
    center = np.asarray(center, dtype=float)
    total = 0.0
    for loop in loops:
        a = loop - center
        b = np.roll(a, -1, axis=0)
        total += float(edge_disk_area(a, b, r).sum())
    return total


def segment_ball_length(p: np.ndarray, q: np.ndarray, center, r) -> np.ndarray:
    """Length of each segment ``p[i]q[i]`` inside the closed ball."""
    center = np.asarray(center, dtype=float)
    a = p - center
    d = q - p
    qa = np.einsum("ij,ij->i", d, d)
    qb = np.einsum("ij,ij->i", a, d)
    qc = np.einsum("ij,ij->i", a, a) - np.asarray(r, dtype=float) ** 2
    disc = qb * qb - qa * qc
    hit = disc > 0.0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t1 = np.clip((-qb - sq) / qa, 0.0, 1.0)
    t2 = np.clip((-qb + sq) / qa, 0.0, 1.0)
    return np.where(hit, (t2 - t1) * np.sqrt(qa), 0.0)


def planar_polygon_ball_area(poly: np.ndarray, center, r) -> np.ndarray:
    """Exact area of each planar polygon (shape ``(m, k, 3)``, vertices in
    order, repeated vertices allowed) inside a closed ball.

    The ball cuts the polygon's plane in a disk, so this reduces to the
    planar polygon/disk intersection.  The plane frame is taken from the
    first three vertices, which must not be collinear.
    """
    center = np.asarray(center, dtype=float)
    r = np.broadcast_to(np.asarray(r, dtype=float), poly.shape[:1])
    o = poly[:, 0]
    e1 = poly[:, 1] - o
    e2 = poly[:, 2] - o
    n = np.cross(e1, e2)
    n = n / np.linalg.norm(n, axis=1)[:, None]
    u = e1 / np.linalg.norm(e1, axis=1)[:, None]
    v = np.cross(n, u)
    h = np.einsum("ij,ij->i", center - o, n)
    s2 = r * r - h * h
    live = s2 > 0.0
    s = np.sqrt(np.where(live, s2, 0.0))
    foot = center - h[:, None] * n
    rel = poly - foot[:, None, :]
    xy = np.stack(
        [np.einsum("ikj,ij->ik", rel, u), np.einsum("ikj,ij->ik", rel, v)], axis=-1
    )
    k = poly.shape[1]
    area = np.zeros(len(poly))
    for j in range(k):
        area += edge_disk_area(xy[:, j], xy[:, (j + 1) % k], s)
    return np.where(live, np.abs(area), 0.0)


def triangle_ball_area(tri: np.ndarray, center, r) -> np.ndarray:
    """Exact area of each triangle (shape ``(m, 3, 3)``) inside a closed ball."""
    return planar_polygon_ball_area(tri, center, r)


def corner_regions(tri: np.ndarray) -> np.ndarray:
    """Mixed-Voronoi corner regions of each triangle as planar 4-gons.

    Returns shape ``(m, 3, 4, 3)``: region ``k`` belongs to corner ``k``.
    Non-obtuse triangles use the circumcentre (Voronoi cells); in an obtuse
    triangle the obtuse corner gets half the area and the others a quarter,
    realised with edge midpoints.  Region areas equal the usual mixed areas.
    """
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    m_ab, m_bc, m_ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
    ab, ac = b - a, c - a
    n = np.cross(ab, ac)
    nn = np.einsum("ij,ij->i", n, n)
    cc = a + (
        np.einsum("ij,ij->i", ac, ac)[:, None] * np.cross(n, ab)
        + np.einsum("ij,ij->i", ab, ab)[:, None] * np.cross(ac, n)
    ) / (2 * nn[:, None])
    dots = np.stack(
        [
            np.einsum("ij,ij->i", b - a, c - a),
            np.einsum("ij,ij->i", c - b, a - b),
            np.einsum("ij,ij->i", a - c, b - c),
        ],
        axis=1,
    )
    out = np.empty(tri.shape[:1] + (3, 4, 3))
    # Voronoi: corner -> (corner, mid next edge, circumcentre, mid prev edge)
    out[:, 0] = np.stack([a, m_ab, cc, m_ca], axis=1)
    out[:, 1] = np.stack([b, m_bc, cc, m_ab], axis=1)
    out[:, 2] = np.stack([c, m_ca, cc, m_bc], axis=1)
    mids = [(m_ab, m_ca, m_bc), (m_bc, m_ab, m_ca), (m_ca, m_bc, m_ab)]
    corners = [a, b, c]
    for k in range(3):
        obt = dots[:, k] < 0
        if not obt.any():
            continue
        nxt, prv, opp = mids[k]
        # obtuse corner: quad with the opposite-edge midpoint
        out[obt, k] = np.stack([corners[k], nxt, opp, prv], axis=1)[obt]
        for j in (1, 2):
            kk = (k + j) % 3
            nx2, pv2, op2 = mids[kk]
            # acute neighbour corners: triangle (corner, midpoint on its edge
            # shared with the obtuse corner, opposite midpoint); padded to 4
            if j == 1:
                poly = np.stack([corners[kk], op2, pv2, pv2], axis=1)
            else:
                poly = np.stack([corners[kk], nx2, op2, op2], axis=1)
            out[obt, kk] = poly[obt]
    return out


def polygon_area_3d(poly: np.ndarray) -> np.ndarray:
    """Area of planar polygons of shape ``(m, k, 3)``."""
    o = poly[:, 0]
    total = np.zeros(poly.shape[:1] + (3,))
    for j in range(1, poly.shape[1] - 1):
        total += np.cross(poly[:, j] - o, poly[:, j + 1] - o)
    return 0.5 * np.linalg.norm(total, axis=1)


def point_segment_distance(x: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = b - a
    dd = np.einsum("...i,...i->...", d, d)
    t = np.einsum("...i,...i->...", x - a, d) / np.where(dd > 0, dd, 1.0)
    t = np.clip(t, 0.0, 1.0)
    return np.linalg.norm(x - (a + t[..., None] * d), axis=-1)


def point_segments_distance_2d(q: np.ndarray, a: np.ndarray, b: np.ndarray,
                               return_index: bool = False):
    """Distance from each planar point ``q[i]`` to the set of segments
    ``a[j]b[j]`` (minimum over ``j``), optionally with the minimizing ``j``."""
    dx, dy = b[:, 0] - a[:, 0], b[:, 1] - a[:, 1]
    dd = dx * dx + dy * dy
    dd = np.where(dd > 0, dd, 1.0)
    rx = q[:, 0, None] - a[None, :, 0]
    ry = q[:, 1, None] - a[None, :, 1]
    t = np.clip((rx * dx + ry * dy) / dd, 0.0, 1.0)
    ex = rx - t * dx
    ey = ry - t * dy
    d2 = ex * ex + ey * ey
    if return_index:
        j = d2.argmin(axis=1)
        return np.sqrt(d2[np.arange(len(q)), j]), j
    return np.sqrt(d2.min(axis=1))


def point_triangle_distance(x: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Euclidean distance from points ``x[i]`` to triangles ``tri[i]``.

    Inside-projection case handled by barycentric test, otherwise the
    minimum over the three edges.
    """
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    n = np.cross(b - a, c - a)
    nn = np.einsum("ij,ij->i", n, n)
    w = x - a
    h = np.einsum("ij,ij->i", w, n) / nn
    p = x - h[:, None] * n
    # barycentric of the projection
    v0, v1, v2 = b - a, c - a, p - a
    d00 = np.einsum("ij,ij->i", v0, v0)
    d01 = np.einsum("ij,ij->i", v0, v1)
    d11 = np.einsum("ij,ij->i", v1, v1)
    d20 = np.einsum("ij,ij->i", v2, v0)
    d21 = np.einsum("ij,ij->i", v2, v1)
    den = d00 * d11 - d01 * d01
    bv = (d11 * d20 - d01 * d21) / den
    bw = (d00 * d21 - d01 * d20) / den
    inside = (bv >= 0) & (bw >= 0) & (bv + bw <= 1)
    plane = np.abs(h) * np.sqrt(nn)
    edge = np.minimum(
        point_segment_distance(x, a, b),
        np.minimum(point_segment_distance(x, b, c), point_segment_distance(x, c, a)),
    )
    return np.where(inside, plane, edge)


def nearest_point_triangle_origin_distance(tri: np.ndarray) -> np.ndarray:
    """Distance from the origin to each triangle (shape ``(m, 3, 3)``)."""
    return point_triangle_distance(np.zeros((len(tri), 3)), tri)


def solid_angles(q: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Signed solid angle of each triangle seen from point ``q``
    (Van Oosterom–Strackee)."""
    a = tri[:, 0] - q
    b = tri[:, 1] - q
    c = tri[:, 2] - q
    la = np.linalg.norm(a, axis=1)
    lb = np.linalg.norm(b, axis=1)
    lc = np.linalg.norm(c, axis=1)
    num = np.einsum("ij,ij->i", a, np.cross(b, c))
    den = (
        la * lb * lc
        + np.einsum("ij,ij->i", a, b) * lc
        + np.einsum("ij,ij->i", b, c) * la
        + np.einsum("ij,ij->i", c, a) * lb
    )
    return 2.0 * np.arctan2(num, den)


def _expand_ranges(starts: np.ndarray, counts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Owner index and flat position for concatenated ranges."""
    owner = np.repeat(np.arange(len(counts)), counts)
    offs = np.cumsum(counts) - counts
    pos = np.arange(int(counts.sum())) - np.repeat(offs, counts) + np.repeat(starts, counts)
    return owner, pos


def vertical_crossings(tri: np.ndarray, xy: np.ndarray):
    """Crossings of vertical lines ``{(x, y)} × ℝ`` with triangles.

    Returns ``(query, z, sign)``: for every crossing, the query index, the
    height and ``sign(n_z)`` of the crossed triangle (outward orientation).
    The length of a line inside the solid is ``Σ sign * z`` and its overlap
    with ``[a, b]`` is ``Σ sign * clip(z, a, b)``.
    """
    xy = np.asarray(xy, dtype=float)
    p2 = tri[:, :, :2]
    lo, hi = p2.min(axis=1), p2.max(axis=1)
    x0 = np.minimum(lo.min(axis=0), xy.min(axis=0))
    x1 = np.maximum(hi.max(axis=0), xy.max(axis=0))
    span = np.maximum(x1 - x0, 1e-300)
    ext = np.median((hi - lo).max(axis=1))
    cell = max(float(ext), float(span.max()) / 2048.0, 1e-300)
    nx, ny = (np.floor(span / cell).astype(int) + 1)
    ix0 = np.clip(np.floor((lo[:, 0] - x0[0]) / cell).astype(int), 0, nx - 1)
    ix1 = np.clip(np.floor((hi[:, 0] - x0[0]) / cell).astype(int), 0, nx - 1)
    iy0 = np.clip(np.floor((lo[:, 1] - x0[1]) / cell).astype(int), 0, ny - 1)
    iy1 = np.clip(np.floor((hi[:, 1] - x0[1]) / cell).astype(int), 0, ny - 1)
    wx = ix1 - ix0 + 1
    cnt = wx * (iy1 - iy0 + 1)
    tid, k = _expand_ranges(np.zeros(len(tri), dtype=np.int64), cnt)
    cell_id = (iy0[tid] + k // wx[tid]) * nx + (ix0[tid] + k % wx[tid])
    order = np.argsort(cell_id, kind="stable")
    tid = tid[order]
    start = np.searchsorted(cell_id[order], np.arange(nx * ny + 1))
    qx = np.clip(np.floor((xy[:, 0] - x0[0]) / cell).astype(int), 0, nx - 1)
    qy = np.clip(np.floor((xy[:, 1] - x0[1]) / cell).astype(int), 0, ny - 1)
    qc = qy * nx + qx
    qn = start[qc + 1] - start[qc]
    qi, pos = _expand_ranges(start[qc], qn)
    ti = tid[pos]
    p = xy[qi]
    a, b, c = p2[ti, 0], p2[ti, 1], p2[ti, 2]
    d = _cross2(b - a, c - a)
    ok = np.abs(d) > 0
    dd = np.where(ok, d, 1.0)
    la = _cross2(b - p, c - p) / dd
    lb = _cross2(c - p, a - p) / dd
    lc = 1.0 - la - lb
    hit = ok & (la >= 0) & (lb >= 0) & (lc >= 0)
    qi, ti, la, lb, lc = qi[hit], ti[hit], la[hit], lb[hit], lc[hit]
    z = la * tri[ti, 0, 2] + lb * tri[ti, 1, 2] + lc * tri[ti, 2, 2]
    return qi, z, np.sign(d[hit])

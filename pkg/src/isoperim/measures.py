"""Stability measurements: sphere fit, symmetric difference, Fraenkel
asymmetry, annulus concentration, boundary moment and sphere-density
comparisons.

Planar quantities are exact (polygon/disk clipping).  In 3D the volume of
``Ω Δ B`` is estimated by stratified sampling of vertical lines: each line's
intersection with Ω is computed exactly from its mesh crossings and
compared with the ball's chord, so only the 2D position is random.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import _kernels as K
from .mesh import (
    AnnulusSpec,
    BoundaryMesh,
    _require_valid,
    enclosed_volume,
    isoperimetric_summary,
    loops_2d,
    perimeter,
    unit_sphere_area,
    volume_radius,
)

__all__ = [
    "SphereFit",
    "ConcentrationTable",
    "SamplerConfig",
    "SamplerError",
    "FitConvergenceError",
    "AsymmetryResult",
    "FIT_METHODS",
    "volume_centroid",
    "fit_sphere",
    "symmetric_difference_volume",
    "ColumnSampler",
    "fraenkel_asymmetry",
    "annulus_concentration",
    "boundary_moment",
    "density_discrepancy",
    "bump_discrepancy",
]

FIT_METHODS = ("volume-centroid", "boundary-least-squares", "asymmetry-refined")
_FIT_ALIASES = {"centroid": "volume-centroid", "boundary": "boundary-least-squares",
                "asymmetry": "asymmetry-refined"}


class SamplerError(RuntimeError):
    """Requested standard error not reached; carries the partial estimate."""

    def __init__(self, estimate: float, se: float, samples: int):
        self.estimate, self.se, self.samples = estimate, se, samples
        super().__init__(f"SE {se:.3e} above target after {samples} samples (estimate {estimate:.6g})")


class FitConvergenceError(RuntimeError):
    """Center iteration did not converge; carries the best iterate."""

    def __init__(self, best_center: np.ndarray, iterations: int):
        self.best_center = best_center
        super().__init__(f"sphere fit did not converge after {iterations} iterations")


@dataclass
class SphereFit:
    """Model sphere: fitted center and volume-pinned radius."""

    center: np.ndarray
    radius: float
    l1_boundary_gap: float
    method_tag: str
    diagnostics: dict = field(default_factory=dict)

    def annulus(self, eta: float) -> AnnulusSpec:
        return AnnulusSpec(self.center, self.radius, eta)

    def to_dict(self) -> dict:
        return {"center": [float(x) for x in self.center], "radius": self.radius,
                "l1_boundary_gap": self.l1_boundary_gap, "method_tag": self.method_tag,
                "diagnostics": self.diagnostics}


@dataclass
class ConcentrationTable:
    """Rows ``(alpha, eta, outside_fraction)`` with ``eta = δ^alpha``."""

    rows: list
    alpha_grid: list
    deficit: float

    def outside(self, alpha: float) -> float:
        for a, _, f in self.rows:
            if a == alpha:
                return f
        raise KeyError(alpha)

    def to_dict(self) -> dict:
        return {"rows": [{"alpha": a, "eta": e, "outside_fraction": f} for a, e, f in self.rows],
                "alpha_grid": self.alpha_grid, "deficit": self.deficit}


@dataclass(frozen=True)
class SamplerConfig:
    """Stratified sampler settings; ``samples`` is the initial budget."""

    samples: int = 32768
    seed: int = 20240601
    target_se_rel: float | None = None
    max_samples: int = 1 << 20

    @classmethod
    def from_dict(cls, d: dict | None) -> "SamplerConfig":
        if d is None:
            return cls()
        if isinstance(d, SamplerConfig):
            return d
        allowed = {"samples", "seed", "target_se_rel", "max_samples"}
        unknown = set(d) - allowed
        if unknown:
            raise ValueError(f"unknown sampler keys {sorted(unknown)}")
        return cls(**d)


# ----------------------------------------------------------------------------
# Centroid, boundary moment, sphere fit
# ----------------------------------------------------------------------------


def _cone_pieces(mesh: BoundaryMesh):
    """Signed volumes and centroids of cones over elements from the vertex mean."""
    o = mesh.vertices.mean(axis=0)
    ep = mesh.element_points - o
    if mesh.ambient_dim == 2:
        vol = 0.5 * (ep[:, 0, 0] * ep[:, 1, 1] - ep[:, 0, 1] * ep[:, 1, 0])
        cen = o + ep.sum(axis=1) / 3.0
    else:
        vol = np.einsum("ij,ij->i", ep[:, 0], np.cross(ep[:, 1], ep[:, 2])) / 6.0
        cen = o + ep.sum(axis=1) / 4.0
    return vol, cen


def volume_centroid(mesh: BoundaryMesh, element_mask: np.ndarray | None = None) -> np.ndarray:
    """Centroid of the enclosed solid (divergence theorem on cones)."""
    vol, cen = _cone_pieces(mesh)
    if element_mask is not None:
        vol, cen = vol[element_mask], cen[element_mask]
    return (vol[:, None] * cen).sum(axis=0) / vol.sum()


def boundary_moment(mesh: BoundaryMesh) -> np.ndarray:
    """Area-weighted mean of element centroids, ``(1/P) ∫ x dH^n``."""
    _require_valid(mesh)
    w = mesh.element_measures
    return (w[:, None] * mesh.element_centroids).sum(axis=0) / w.sum()


def _quadrature(mesh: BoundaryMesh):
    """Points and weights exact for quadratics on each element."""
    ep = mesh.element_points
    w = mesh.element_measures
    if mesh.ambient_dim == 2:
        # Simpson
        pts = np.concatenate([ep[:, 0], ep.mean(axis=1), ep[:, 1]])
        wts = np.concatenate([w / 6, 2 * w / 3, w / 6])
    else:
        mids = (ep + np.roll(ep, -1, axis=1)) / 2
        pts = mids.reshape(-1, 3)
        wts = np.repeat(w / 3, 3)
    return pts, wts


def _refined_quadrature(mesh: BoundaryMesh, levels: int = 2):
    """Edge-midpoint rule on each element split ``4^levels`` (``2^levels``
    for segments) times; the integrand's kink at the sphere needs the
    finer cells."""
    ep = mesh.element_points
    for _ in range(levels):
        if mesh.ambient_dim == 2:
            m = ep.mean(axis=1)
            ep = np.concatenate([np.stack([ep[:, 0], m], 1), np.stack([m, ep[:, 1]], 1)])
        else:
            a, b, c = ep[:, 0], ep[:, 1], ep[:, 2]
            ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
            ep = np.concatenate([np.stack(t, 1) for t in
                                 ((a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca))])
    if mesh.ambient_dim == 2:
        w = np.linalg.norm(ep[:, 1] - ep[:, 0], axis=1)
        pts = np.concatenate([ep[:, 0], ep.mean(axis=1), ep[:, 1]])
        return pts, np.concatenate([w / 6, 2 * w / 3, w / 6])
    w = 0.5 * np.linalg.norm(np.cross(ep[:, 1] - ep[:, 0], ep[:, 2] - ep[:, 0]), axis=1)
    mids = (ep + np.roll(ep, -1, axis=1)) / 2
    return mids.reshape(-1, 3), np.repeat(w / 3, 3)


def l1_boundary_gap(mesh: BoundaryMesh, center, radius: float) -> float:
    """``(1/P) ∫ ||x - c| - R| dH^n`` by a refined element quadrature."""
    pts, wts = _refined_quadrature(mesh)
    d = np.abs(np.linalg.norm(pts - np.asarray(center), axis=1) - radius)
    return float(np.sum(wts * d) / np.sum(wts))


def _boundary_ls_center(mesh: BoundaryMesh, R: float, start: np.ndarray,
                        tol: float = 1e-10, max_iter: int = 10_000) -> tuple[np.ndarray, int]:
    """Fixed point of ``c = Σ w (x - R u)/Σ w`` with ``u = (x - c)/|x - c|``:
    the stationarity condition of ``Σ w (|x - c| - R)²``."""
    from .curvature import vertex_areas

    x = mesh.vertices
    w = vertex_areas(mesh)
    W = w.sum()
    c = start.copy()
    best, best_obj = c.copy(), np.inf
    for it in range(1, max_iter + 1):
        rel = x - c
        r = np.linalg.norm(rel, axis=1)
        obj = float(np.sum(w * (r - R) ** 2))
        if obj < best_obj:
            best, best_obj = c.copy(), obj
        u = rel / np.where(r > 0, r, 1.0)[:, None]
        c_new = (w[:, None] * (x - R * u)).sum(axis=0) / W
        step = np.linalg.norm(c_new - c)
        c = c_new
        if step <= tol * R:
            return c, it
    raise FitConvergenceError(best, max_iter)


def fit_sphere(mesh: BoundaryMesh, method: str = "boundary-least-squares",
               sampler_config=None) -> SphereFit:
    """Model sphere ``S_c(R_Ω)`` with the volume radius and a fitted center."""
    _require_valid(mesh)
    method = _FIT_ALIASES.get(method, method)
    if method not in FIT_METHODS:
        raise ValueError(f"unknown fit method {method!r}; expected one of {FIT_METHODS}")
    V = enclosed_volume(mesh)
    R = volume_radius(V, mesh.ambient_dim)
    c = volume_centroid(mesh)
    diag: dict = {}
    if method in ("boundary-least-squares", "asymmetry-refined"):
        c, it = _boundary_ls_center(mesh, R, c)
        diag["iterations"] = it
    if method == "asymmetry-refined":
        res = fraenkel_asymmetry(mesh, sampler_config=sampler_config, starts=[c])
        c = res.center
        diag["asymmetry"] = res.value
        diag["asymmetry_se"] = res.se
    return SphereFit(np.asarray(c, dtype=float), R, l1_boundary_gap(mesh, c, R), method, diag)


# ----------------------------------------------------------------------------
# Symmetric difference
# ----------------------------------------------------------------------------


def _sym_diff_2d(mesh: BoundaryMesh, center, radius: float) -> float:
    V = enclosed_volume(mesh)
    inter = K.polygon_disk_area(loops_2d(mesh), center, radius)
    return V + np.pi * radius * radius - 2.0 * inter


class ColumnSampler:
    """Stratified vertical-line sample of a 3D solid over a fixed rectangle.

    Line positions are jittered inside a ``g × g`` grid of strata, two per
    stratum, from a counter-based (Philox) generator keyed by the seed, so
    the same configuration always yields the same lines.  The solid's
    crossings are computed once; any ball can then be compared cheaply.
    """

    def __init__(self, mesh: BoundaryMesh, rect: np.ndarray, samples: int, seed: int):
        self.rect = np.asarray(rect, dtype=float)  # [[x0, y0], [x1, y1]]
        g = max(2, int(np.ceil(np.sqrt(samples / 2.0))))
        self.g = g
        rng = np.random.Generator(np.random.Philox(key=int(seed) & ((1 << 64) - 1)))
        jitter = rng.random((g * g, 2, 2))
        iy, ix = np.divmod(np.arange(g * g), g)
        base = np.stack([ix, iy], axis=1)[:, None, :]
        size = (self.rect[1] - self.rect[0]) / g
        self.xy = (self.rect[0] + (base + jitter) * size).reshape(-1, 2)
        self.cell_area = float(size[0] * size[1])
        self._crossings(mesh.element_points)

    def _crossings(self, tri):
        qi, z, s = K.vertical_crossings(tri, self.xy)
        n = len(self.xy)
        bal = np.bincount(qi, s, minlength=n)
        bad = np.flatnonzero(np.abs(bal) > 0.5)
        if len(bad):
            # a line through a mesh edge or vertex: nudge it by a tiny amount
            span = float(np.max(self.rect[1] - self.rect[0]))
            self.xy[bad] += 1e-9 * span * np.array([0.7548776662, 0.5698402910])
            keep = ~np.isin(qi, bad)
            q2, z2, s2 = K.vertical_crossings(tri, self.xy[bad])
            qi = np.concatenate([qi[keep], bad[q2]])
            z = np.concatenate([z[keep], z2])
            s = np.concatenate([s[keep], s2])
        self.qi, self.z, self.s = qi, z, s
        self.omega_len = np.bincount(qi, s * z, minlength=n)

    def column_values(self, center, radius: float) -> np.ndarray:
        c = np.asarray(center, dtype=float)
        d2 = np.sum((self.xy - c[:2]) ** 2, axis=1)
        half = np.sqrt(np.maximum(radius * radius - d2, 0.0))
        a, b = c[2] - half, c[2] + half
        inter = np.bincount(self.qi, self.s * np.clip(self.z, a[self.qi], b[self.qi]),
                            minlength=len(self.xy))
        return self.omega_len + 2 * half - 2 * inter

    def estimate(self, center, radius: float) -> tuple[float, float]:
        f = self.column_values(center, radius).reshape(-1, 2)
        est = self.cell_area * float(f.sum()) / 2.0
        var = self.cell_area ** 2 * float(np.sum((f[:, 0] - f[:, 1]) ** 2 / 2.0)) / 2.0
        return est, float(np.sqrt(var))

    def covers(self, center, radius: float) -> float:
        """Distance by which the ball's shadow leaves the rectangle (0 if inside)."""
        c = np.asarray(center, dtype=float)[:2]
        lo = self.rect[0] - (c - radius)
        hi = (c + radius) - self.rect[1]
        return float(max(0.0, lo.max(), hi.max()))


def _rect_for(mesh: BoundaryMesh, balls) -> np.ndarray:
    lo = mesh.vertices[:, :2].min(axis=0)
    hi = mesh.vertices[:, :2].max(axis=0)
    for c, r in balls:
        c = np.asarray(c, dtype=float)
        lo = np.minimum(lo, c[:2] - r)
        hi = np.maximum(hi, c[:2] + r)
    pad = 1e-6 * float(np.max(hi - lo))
    return np.array([lo - pad, hi + pad])


def symmetric_difference_volume(mesh: BoundaryMesh, ball, sampler_config=None) -> tuple[float, float]:
    """``|Ω Δ B_c(r)|`` and its standard error (0 for the exact planar path)."""
    _require_valid(mesh)
    c, r = np.asarray(ball[0], dtype=float), float(ball[1])
    if mesh.ambient_dim == 2:
        return float(_sym_diff_2d(mesh, c, r)), 0.0
    cfg = SamplerConfig.from_dict(sampler_config)
    rect = _rect_for(mesh, [(c, r)])
    V = enclosed_volume(mesh)
    n = cfg.samples
    while True:
        est, se = ColumnSampler(mesh, rect, n, cfg.seed).estimate(c, r)
        if cfg.target_se_rel is None or se <= cfg.target_se_rel * V:
            return est, se
        if 2 * n > cfg.max_samples:
            raise SamplerError(est, se, n)
        n *= 2


# ----------------------------------------------------------------------------
# Fraenkel asymmetry
# ----------------------------------------------------------------------------


@dataclass
class AsymmetryResult:
    value: float
    center: np.ndarray
    se: float
    diagnostics: dict = field(default_factory=dict)

    def __iter__(self):
        yield self.value
        yield self.center

    def to_dict(self) -> dict:
        return {"value": self.value, "se": self.se,
                "center": [float(x) for x in self.center], "diagnostics": self.diagnostics}


def _component_centroids(mesh: BoundaryMesh) -> list[np.ndarray]:
    if mesh.component_count <= 1:
        return []
    lab = mesh.component_labels[mesh.elements[:, 0]]
    return [volume_centroid(mesh, lab == k) for k in range(mesh.component_count)]


def fraenkel_asymmetry(mesh: BoundaryMesh, sampler_config=None, starts=None) -> AsymmetryResult:
    """``A(Ω) = inf_x |Ω Δ B_x(R_Ω)| / |Ω|`` by multi-start Nelder–Mead.

    Starts: volume centroid, boundary least-squares center and every
    component's centroid (or the given ``starts``).  In 3D all evaluations
    share one line sample (common random numbers), so the objective is a
    deterministic piecewise-smooth function of the center.
    """
    _require_valid(mesh)
    V = enclosed_volume(mesh)
    dim = mesh.ambient_dim
    R = volume_radius(V, dim)
    if starts is None:
        c0 = volume_centroid(mesh)
        starts = [c0]
        try:
            starts.append(_boundary_ls_center(mesh, R, c0)[0])
        except FitConvergenceError as exc:
            starts.append(exc.best_center)
        starts += _component_centroids(mesh)
    starts = [np.asarray(s, dtype=float) for s in starts]
    if dim == 2:
        def objective(c):
            return _sym_diff_2d(mesh, c, R) / V

        sampler = None
    else:
        cfg = SamplerConfig.from_dict(sampler_config)
        rect = _rect_for(mesh, [(s, 1.25 * R) for s in starts])
        sampler = ColumnSampler(mesh, rect, cfg.samples, cfg.seed)

        def objective(c):
            est, _ = sampler.estimate(c, R)
            # keep the ball's shadow inside the sampled rectangle
            return est / V + 10.0 * sampler.covers(c, R) / R

    best = None
    evals = 0
    for s in starts:
        simplex = np.vstack([s] + [s + 0.1 * R * e for e in np.eye(dim)])
        res = minimize(objective, s, method="Nelder-Mead",
                       options={"initial_simplex": simplex, "xatol": 1e-6 * R,
                                "fatol": 1e-10, "maxiter": 2000})
        evals += res.nfev
        cand = (float(res.fun), tuple(np.asarray(res.x).tolist()))
        if best is None or cand[0] < best[0] - 1e-12 or (abs(cand[0] - best[0]) <= 1e-12 and cand[1] < best[1]):
            best = cand
    c = np.array(best[1])
    se = 0.0
    if sampler is not None:
        se = sampler.estimate(c, R)[1] / V
    return AsymmetryResult(best[0], c, se, {"evaluations": evals, "starts": len(starts)})


# ----------------------------------------------------------------------------
# Annulus concentration
# ----------------------------------------------------------------------------


def _inside_annulus_measure(mesh: BoundaryMesh, annulus: AnnulusSpec) -> float:
    c = np.asarray(annulus.center, dtype=float)
    ep = mesh.element_points
    if mesh.ambient_dim == 2:
        f = lambda r: K.segment_ball_length(ep[:, 0], ep[:, 1], c, r).sum()  # noqa: E731
    else:
        f = lambda r: K.triangle_ball_area(ep, c, r).sum()  # noqa: E731
    inner = f(annulus.inner) if annulus.inner > 0 else 0.0
    return float(f(annulus.outer) - inner)


def annulus_outside_fraction(mesh: BoundaryMesh, annulus: AnnulusSpec) -> float:
    """``H^n(∂Ω \\ A_η) / P`` computed exactly per element."""
    P = perimeter(mesh)
    return float(min(1.0, max(0.0, 1.0 - _inside_annulus_measure(mesh, annulus) / P)))


def annulus_concentration(mesh: BoundaryMesh, fit: SphereFit, alphas=(0.25,),
                          deficit: float | None = None) -> ConcentrationTable:
    """Fraction of the boundary outside ``A_{δ^α}`` for each ``α``.

    The measure of each element inside the closed annulus is exact: a ball
    cuts each triangle's plane in a disk, and polygon/disk areas are closed
    form.  Rows are sorted by increasing ``η``.
    """
    _require_valid(mesh)
    if deficit is None:
        deficit = isoperimetric_summary(mesh).deficit
    rows = []
    for a in alphas:
        eta = float(max(deficit, 0.0) ** a) if a > 0 else 1.0
        rows.append((float(a), eta, annulus_outside_fraction(mesh, fit.annulus(eta))))
    rows.sort(key=lambda r: r[1])
    return ConcentrationTable(rows, [float(a) for a in alphas], float(deficit))


# ----------------------------------------------------------------------------
# Comparisons with the uniform sphere measure
# ----------------------------------------------------------------------------


def _sphere_cap_fraction(rho: np.ndarray, R: float, dim: int) -> np.ndarray:
    """Normalized measure of ``S(R) ∩ B_x(ρ)`` for ``x`` on the sphere."""
    rho = np.minimum(np.asarray(rho, dtype=float), 2 * R)
    if dim == 2:
        return 2 * np.arcsin(rho / (2 * R)) / np.pi
    return rho * rho / (4 * R * R)


def density_discrepancy(mesh: BoundaryMesh, fit: SphereFit, directions=None,
                        radius_fractions=(0.1, 0.3, 0.6)) -> np.ndarray:
    """``|σ_S(B_x(ρ)) - σ_∂Ω(B_x(ρ))|`` for ``x = c + R ω`` and ``ρ = t R``.

    Both measures are probability-normalized.  Returns shape
    ``(len(directions), len(radius_fractions))``.
    """
    from .generators import icosahedral_directions

    dim = mesh.ambient_dim
    if directions is None:
        if dim == 3:
            directions = icosahedral_directions()
        else:
            ang = 2 * np.pi * np.arange(12) / 12
            directions = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    directions = np.asarray(directions, dtype=float)
    directions = directions / np.linalg.norm(directions, axis=1)[:, None]
    c, R = np.asarray(fit.center), fit.radius
    P = perimeter(mesh)
    ep = mesh.element_points
    out = np.empty((len(directions), len(radius_fractions)))
    for i, w in enumerate(directions):
        x = c + R * w
        for j, t in enumerate(radius_fractions):
            rho = t * R
            if dim == 2:
                m = K.segment_ball_length(ep[:, 0], ep[:, 1], x, rho).sum()
            else:
                m = K.triangle_ball_area(ep, x, rho).sum()
            out[i, j] = abs(_sphere_cap_fraction(rho, R, dim) - m / P)
    return out


def _bump(pts: np.ndarray, y: np.ndarray, s: float) -> np.ndarray:
    q = np.sum((pts - y) ** 2, axis=-1) / (s * s)
    return np.where(q < 1.0, (1.0 - q) ** 2, 0.0)


def bump_discrepancy(mesh: BoundaryMesh, fit: SphereFit, directions=None,
                     width_fraction: float = 0.5, n_gauss: int = 64) -> np.ndarray:
    """``|(1/P)∫_∂Ω f - (1/|S|)∫_S f|`` for bumps ``f = (1 - |x-y|²/s²)_+²``
    centred at ``y = c + R ω`` with ``s = width_fraction · R``.

    The bump is C¹ with ``Lip f = 4/(3√3 s)``; the boundary integral uses a
    degree-2 element rule and the sphere integral Gauss–Legendre quadrature
    in the polar angle about ``y``.
    """
    from .generators import icosahedral_directions

    dim = mesh.ambient_dim
    if directions is None:
        if dim == 3:
            directions = icosahedral_directions()
        else:
            ang = 2 * np.pi * np.arange(12) / 12
            directions = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    directions = np.asarray(directions, dtype=float)
    directions = directions / np.linalg.norm(directions, axis=1)[:, None]
    c, R = np.asarray(fit.center), fit.radius
    s = width_fraction * R
    pts, wts = _quadrature(mesh)
    P = wts.sum()
    # sphere side depends only on the chord: |x - y|² = 2R²(1 - cos θ)
    if dim == 3:
        t, gw = np.polynomial.legendre.leggauss(n_gauss)
        # restrict cos θ to the bump's support for accuracy
        cmin = 1.0 - s * s / (2 * R * R)
        cos_t = 0.5 * (1 - cmin) * t + 0.5 * (1 + cmin)
        q = 2 * R * R * (1 - cos_t) / (s * s)
        sphere_mean = 0.5 * (1 - cmin) * np.sum(gw * np.where(q < 1, (1 - q) ** 2, 0.0)) / 2.0
    else:
        t, gw = np.polynomial.legendre.leggauss(n_gauss)
        tmax = 2 * np.arcsin(min(1.0, s / (2 * R)))
        th = 0.5 * tmax * (t + 1)
        q = 2 * R * R * (1 - np.cos(th)) / (s * s)
        sphere_mean = 2 * 0.5 * tmax * np.sum(gw * np.where(q < 1, (1 - q) ** 2, 0.0)) / (2 * np.pi)
    out = np.empty(len(directions))
    for i, w in enumerate(directions):
        y = c + R * w
        out[i] = abs(np.sum(wts * _bump(pts, y, s)) / P - sphere_mean)
    return out


def sphere_area(radius: float, dim: int) -> float:
    return unit_sphere_area(dim) * radius ** (dim - 1)

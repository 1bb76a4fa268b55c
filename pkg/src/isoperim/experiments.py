"""Family sweeps, log–log exponent fits and verdicts for the registered
stability checks.

A sweep generates one mesh per grid value, runs the named measurements on
it and stores a flat record of scalars per sample.  Checks read only these
records, so every verdict can be recomputed from a saved CSV.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import curvature as curv
from . import distances as dist
from . import generators as gen
from . import measures as meas
from . import spectral as spec
from .mesh import AnnulusSpec, BoundaryMesh, isoperimetric_summary

__all__ = [
    "beta",
    "hausdorff_exp",
    "lipschitz_exp",
    "curvature_exp",
    "cardinal_exp",
    "CURVE_CONSTANTS",
    "ExponentTable",
    "FitResult",
    "fit_exponent",
    "Check",
    "Verdict",
    "registered_checks",
    "evaluate_check",
    "FAMILIES",
    "MEASUREMENTS",
    "SampleContext",
    "SweepResult",
    "SweepError",
    "run_sweep",
]

# ----------------------------------------------------------------------------
# Exponents and constants from the theorem statements
# ----------------------------------------------------------------------------


def beta(n: int) -> float:
    return min(1.0 / (4 * n), 1.0 / 8)


def hausdorff_exp(n: int, p: float) -> float:
    return (2 * p - n) / (2 * p - 2 * n + n * p)


def lipschitz_exp(n: int, p: float) -> float:
    return 2 * (p - n) / (p * (n + 2) - 2 * n)


def curvature_exp(n: int, p: float) -> float:
    return (p - n + 1) / (4 * p)


def cardinal_exp(n: int, p: float) -> float:
    return (p - n) / (4 * p)


CURVE_CONSTANTS = {
    "isodiametric": math.sqrt(3 * math.pi) / 4,
    "bonnesen_hausdorff": 16 * math.pi,
    "bonnesen_area": 4 * math.pi,
}


@dataclass(frozen=True)
class ExponentTable:
    """All predicted exponents for a given ``(n, p)``."""

    n: int
    p: float

    def to_dict(self) -> dict:
        return {
            "n": self.n, "p": self.p, "beta": beta(self.n),
            "hausdorff_exp": hausdorff_exp(self.n, self.p),
            "lipschitz_exp": lipschitz_exp(self.n, self.p),
            "curvature_exp": curvature_exp(self.n, self.p),
            "cardinal_exp": cardinal_exp(self.n, self.p),
            **CURVE_CONSTANTS,
        }


# ----------------------------------------------------------------------------
# Exponent fitting
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    stderr: float
    n_points: int = 0
    log_correction: str = "none"

    def __iter__(self):
        yield self.slope
        yield self.intercept
        yield self.stderr

    def ci(self, z: float = 1.96) -> tuple[float, float]:
        return self.slope - z * self.stderr, self.slope + z * self.stderr

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "stderr": self.stderr,
                "n_points": self.n_points, "log_correction": self.log_correction}


def fit_exponent(xs, ys, log_correction: str = "none") -> FitResult:
    """Least squares of ``ln y`` on ``ln x``.

    With ``log_correction="sqrt_neg_log"`` the model is
    ``y = C x^s sqrt(-ln x)`` and requires ``0 < x < 1``.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("xs and ys must be 1-D arrays of equal length")
    if len(x) < 4:
        raise ValueError(f"need at least 4 points, got {len(x)}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("all values must be positive")
    lx, ly = np.log(x), np.log(y)
    if log_correction == "sqrt_neg_log":
        if np.any(x >= 1):
            raise ValueError("sqrt_neg_log needs 0 < x < 1")
        ly = ly - 0.5 * np.log(-lx)
    elif log_correction != "none":
        raise ValueError(f"unknown log correction {log_correction!r}")
    xm = lx.mean()
    sxx = float(np.sum((lx - xm) ** 2))
    if sxx == 0:
        raise ValueError("xs must not all be equal")
    slope = float(np.sum((lx - xm) * (ly - ly.mean())) / sxx)
    intercept = float(ly.mean() - slope * xm)
    res = ly - (intercept + slope * lx)
    stderr = float(np.sqrt(np.sum(res ** 2) / (len(x) - 2) / sxx))
    return FitResult(slope, intercept, stderr, len(x), log_correction)


# ----------------------------------------------------------------------------
# Families
# ----------------------------------------------------------------------------


def _fam_icosphere(param, level=None, radius=1.0):
    return gen.icosphere(radius=radius, level=int(param if level is None else level)), {}


def _fam_harmonic(param, l=2, m=0, level=4):
    u = gen.harmonic(l, m, float(param))
    return gen.nearly_spherical(u, level), {"graph": u}


def _fam_sharpness(param, p=4.0, n=2, level=4):
    u = gen.sharpness_graph(float(param), p, n)
    return gen.nearly_spherical(u, level), {"graph": u}


def _fam_ellipsoid(param, level=4):
    return gen.ellipsoid((1.0, 1.0, float(param)), level), {}


def _fam_tube_tree(param, length=0.5, level=4, directions=((0.0, 0.0, 1.0),)):
    tree = gen.radial_tree(directions, length, float(param))
    return gen.tube_tree_domain(1.0, tree, level), {"tree": tree}


def _fam_spiky(param, n_spikes=6, height=0.5, level=4):
    dirs = gen._fibonacci_directions(n_spikes)
    tree = gen.radial_tree(dirs, height, float(param))
    return gen.tube_tree_domain(1.0, tree, level), {"tree": tree}


def _fam_far_balls(param, level=3, gap=4.0):
    return gen.far_balls([1.0, float(param)], level, gap), {}


def _fam_satellites(param, k=4, level=3, gap=1.0):
    return gen.ball_with_satellites(int(k), float(param), level, gap), {}


def _fam_random_polygon(param, max_vertices=512):
    return gen.random_star_polygon(np.random.default_rng(int(param)), max_vertices), {}


def _fam_ellipse(param, segments=512):
    return gen.ellipse((1.0, float(param)), segments), {}


def _fam_circle(param):
    return gen.circle(segments=int(param)), {}


def _fam_square(param=1.0):
    return gen.square(float(param)), {}


FAMILIES: dict[str, Callable] = {
    "icosphere": _fam_icosphere,
    "harmonic": _fam_harmonic,
    "sharpness": _fam_sharpness,
    "ellipsoid": _fam_ellipsoid,
    "tube_tree": _fam_tube_tree,
    "spiky_ball": _fam_spiky,
    "far_balls": _fam_far_balls,
    "satellites": _fam_satellites,
    "random_polygon": _fam_random_polygon,
    "ellipse": _fam_ellipse,
    "circle": _fam_circle,
    "square": _fam_square,
}


# ----------------------------------------------------------------------------
# Measurements
# ----------------------------------------------------------------------------


@dataclass
class SampleContext:
    """One generated mesh plus lazily computed shared quantities."""

    mesh: BoundaryMesh
    meta: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)

    @cached_property
    def summary(self):
        return isoperimetric_summary(self.mesh)

    @cached_property
    def fit(self):
        return meas.fit_sphere(self.mesh, self.options.get("fit_method", "boundary-least-squares"),
                               sampler_config=self.options.get("sampler"))

    @cached_property
    def curvature(self):
        return curv.curvature_field(self.mesh, self.options.get("p_list", (1.0, 2.0, 4.0)))

    @cached_property
    def spectrum(self):
        return spec.chavel_deficit(self.mesh)


def _m_deficit(ctx):
    s = ctx.summary
    return {"volume": s.volume, "perimeter": s.perimeter, "iso_ratio": s.iso_ratio,
            "deficit": s.deficit, "radius": s.radius, "components": s.component_count}


def _m_deficit_excess(ctx):
    """Deficit in excess of the radially projected triangulation's own deficit."""
    ref = gen.graph_reference(ctx.mesh)
    d_ref = isoperimetric_summary(ref).deficit
    return {"deficit_reference": d_ref, "deficit_excess": ctx.summary.deficit - d_ref}


def _m_fit(ctx):
    f = ctx.fit
    out = {f"fit_center_{k}": float(v) for k, v in zip("xyz", f.center)}
    out["l1_boundary_gap"] = f.l1_boundary_gap
    return out


def _m_asymmetry(ctx):
    r = meas.fraenkel_asymmetry(ctx.mesh, sampler_config=ctx.options.get("sampler"))
    return {"asymmetry": r.value, "asymmetry_se": r.se}


def _m_hausdorff(ctx):
    r = dist.hausdorff_to_model(ctx.mesh, ctx.fit)
    return {"d_H": r.value, "d_H_err": r.error_bound, "d_H_rel": r.value / ctx.fit.radius}


def _m_hausdorff_tree(ctx):
    tree = ctx.meta.get("tree")
    if tree is None:
        raise ValueError("hausdorff_with_tree needs a tree family")
    segs = np.array([[a, b] for a, b in tree.segments])
    r = dist.hausdorff_to_model(ctx.mesh, ctx.fit, extra=segs)
    return {"d_H_tree": r.value, "d_H_tree_err": r.error_bound, "tree_length": tree.total_length,
            "tube_radius": tree.tube_radius}


def _m_lipschitz(ctx):
    return {"d_L": dist.lipschitz_distance_to_sphere(ctx.mesh, ctx.fit)["value"]}


def _m_curvature(ctx):
    f = ctx.curvature
    out = {"H_median": float(np.median(f.H))}
    for p, v in f.norms.items():
        out[f"H_l{p:g}"] = v["H"]
        out[f"B_l{p:g}"] = v["B"]
        out[f"budget_p{p:g}"] = f.budget(p)
    return out


def _m_z(ctx):
    z = curv.z_field(ctx.mesh, ctx.fit, ctx.curvature)
    return {"z_l2": z.l2, "z_sup": z.sup}


def _m_curvature_outside(ctx):
    eta = max(ctx.summary.deficit, 0.0) ** 0.25
    ann = AnnulusSpec(ctx.fit.center, ctx.fit.radius, eta)
    val = curv.outside_annulus_curvature_integral(ctx.mesh, ctx.curvature, ann)
    out = {"curv_outside": val, "curv_outside_eta": eta}
    tree = ctx.meta.get("tree")
    if tree is not None:
        out["curv_outside_ratio"] = val / (math.pi * tree.total_length)
    return out


def _m_chavel(ctx):
    r = ctx.spectrum
    return {"lambda1": r.lambda1, "gamma": r.gamma, "rho_omega": r.rho_omega,
            "multiplicity": r.eigen_multiplicity_estimate}


def _m_concentration(ctx):
    alphas = ctx.options.get("alphas", (0.25,))
    t = meas.annulus_concentration(ctx.mesh, ctx.fit, alphas, ctx.summary.deficit)
    out = {}
    for a, eta, frac in t.rows:
        out[f"outside_a{a:g}"] = frac
        out[f"eta_a{a:g}"] = eta
    return out


def _m_equidense(ctx):
    d = meas.density_discrepancy(ctx.mesh, ctx.fit)
    return {"equidense_max": float(d.max())}


def _m_bumps(ctx):
    width = 0.5
    d = meas.bump_discrepancy(ctx.mesh, ctx.fit, width_fraction=width)
    lip = 4.0 / (3.0 * math.sqrt(3.0) * width * ctx.fit.radius)
    return {"bump_max": float(d.max()), "bump_norm": float(d.max()) / (1.0 + lip)}


def _m_du(ctx):
    u = ctx.meta.get("graph")
    if u is None:
        raise ValueError("du needs a radial-graph family")
    ref = gen.graph_reference(ctx.mesh)
    uv = np.linalg.norm(ctx.mesh.vertices, axis=1) - 1.0
    L = curv.cotan_laplacian(ref)
    area = curv.vertex_areas(ref)
    out = {"du_l2_sq": float(uv @ (L @ uv) / area.sum()), "u_sup": float(np.abs(uv).max()),
           "amplitude": float(u.amplitude)}
    if not u.is_profile:
        out["du_l2_sq_analytic"] = float(u.amplitude ** 2 * sum(
            c * c * l * (l + 1) for (l, m), c in u.basis.items()) / (4 * math.pi))
    return out


def _m_preiss(ctx):
    atoms = int(ctx.options.get("preiss_atoms", 2000))
    mu = dist.boundary_measure(ctx.mesh)
    nu = dist.sphere_measure(ctx.fit.center, ctx.fit.radius, atoms, ctx.mesh.ambient_dim)
    r = dist.preiss_distance(nu, mu, i_max=int(ctx.options.get("preiss_i_max", 10)),
                             origin=ctx.fit.center,
                             max_atoms=int(ctx.options.get("preiss_max_atoms", 12000)))
    return {"preiss": r.value, "preiss_upper": r.upper_bound}


def _m_bonnesen(ctx):
    r = dist.best_circle_hausdorff(ctx.mesh)
    s = ctx.summary
    d = r["value"] + r["error_bound"]
    diam = dist.diameter(ctx.mesh)
    return {"d_H_circle": r["value"], "d_H_circle_err": r["error_bound"], "diam": diam,
            "bonnesen_lhs": 16 * math.pi * d * d,
            "bonnesen_rhs": s.perimeter ** 2 - 4 * math.pi * s.volume,
            "isodiametric_lhs": d / diam}


MEASUREMENTS: dict[str, Callable] = {
    "deficit": _m_deficit,
    "deficit_excess": _m_deficit_excess,
    "fit": _m_fit,
    "asymmetry": _m_asymmetry,
    "hausdorff_to_model": _m_hausdorff,
    "hausdorff_with_tree": _m_hausdorff_tree,
    "lipschitz": _m_lipschitz,
    "curvature": _m_curvature,
    "z": _m_z,
    "curvature_outside": _m_curvature_outside,
    "chavel": _m_chavel,
    "concentration": _m_concentration,
    "equidense": _m_equidense,
    "bumps": _m_bumps,
    "du": _m_du,
    "preiss": _m_preiss,
    "bonnesen": _m_bonnesen,
}

# provenance of every scalar key; anything unlisted is exact
_SAMPLED_3D = {"asymmetry"}
_FITTED: set = set()


def provenance(key: str, dim: int) -> str:
    if key.endswith("_se") or key.endswith("_err"):
        return "error"
    if key in _SAMPLED_3D and dim == 3:
        return "sampled"
    if key in _FITTED:
        return "fitted"
    return "exact"


# ----------------------------------------------------------------------------
# Checks
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class Check:
    """A registered inequality or scaling check.

    ``kind`` is ``"inequality"`` (``lhs <= rhs`` per sample), ``"fitted"``
    (``y <= C_fit x^q`` with one sweep-wide constant) or ``"band"``
    (``lo <= y <= hi`` per sample).
    """

    id: str
    title: str
    theorem: str
    kind: str
    y: str
    x: str = "deficit"
    q: float = 0.5
    rhs: str | None = None
    rhs_factor: float = 1.0
    rhs_power: float = 1.0
    band: tuple = (0.5, 2.0)
    y_power: float = 1.0
    requires: tuple = ()


@dataclass
class Verdict:
    check: str
    status: str  # holds | violated | inconclusive
    detail: str
    C_fit: float | None = None
    spread: float | None = None
    growth: float | None = None
    witness: dict | None = None
    n_samples: int = 0

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("check", "status", "detail", "C_fit", "spread", "growth", "witness", "n_samples")}


_CATALOG = (
    Check("C1", "planar Bonnesen-Fuglede 16π d_H² ≤ P² - 4π|Ω|", "Bonnesen-Fuglede curve inequality",
          "inequality", y="bonnesen_lhs", rhs="bonnesen_rhs", requires=("bonnesen",)),
    Check("C2", "d_H/diam ≤ √(3π)/4 δ^{1/2} for δ ≤ 1", "isodiametric corollary",
          "inequality", y="isodiametric_lhs", rhs="deficit",
          rhs_factor=CURVE_CONSTANTS["isodiametric"], rhs_power=0.5, requires=("bonnesen",)),
    Check("C3", "annulus concentration ≤ C δ^{1/2-α} (α = 1/4)", "concentration lemma",
          "fitted", y="outside_a0.25", q=0.25, requires=("concentration",)),
    Check("C4", "sphere density discrepancy ≤ C δ^{1/4}", "equidensity theorem",
          "fitted", y="equidense_max", q=0.25, requires=("equidense",)),
    Check("C5", "test-function discrepancy ≤ C (|f|∞ + |df|∞) δ^{1/2}", "test-function proposition",
          "fitted", y="bump_norm", q=0.5, requires=("bumps",)),
    Check("C6", "‖Z‖₂² ≤ C δ^{1/2}", "normal oscillation lemma",
          "fitted", y="z_l2", y_power=2.0, q=0.5, requires=("z",)),
    Check("C7", "δ ≤ C γ^{1/2}", "Chavel stability theorem",
          "fitted", y="deficit", x="gamma", q=0.5, requires=("chavel",)),
    Check("C8", "d_P ≤ C δ^{1/2}", "Preiss-distance theorem",
          "fitted", y="preiss", q=0.5, requires=("preiss",)),
    Check("C9", "∫ outside annulus |H|^{n-1} within factor 2 of π·H¹(T)", "tube-tree sharpness",
          "band", y="curv_outside_ratio", band=(0.5, 2.0), requires=("curvature_outside",)),
    Check("C10", "A(Ω) ≤ C δ^{1/2}", "Fraenkel asymmetry remark",
          "fitted", y="asymmetry", q=0.5, requires=("asymmetry",)),
    Check("C11", "‖du‖₂² ≤ 10 δ", "Fuglede nearly-spherical inequality",
          "inequality", y="du_l2_sq", rhs="deficit", rhs_factor=10.0, requires=("du",)),
)


def registered_checks() -> tuple:
    """The immutable check catalog."""
    return _CATALOG


def _check_by_id(cid: str) -> Check:
    for c in _CATALOG:
        if c.id == cid:
            return c
    raise KeyError(f"unknown check {cid!r}")


def evaluate_check(check: Check | str, records: list, max_deficit: float = 0.5,
                   x: str | None = None, rhs: str | None = None) -> Verdict:
    """Verdict of ``check`` from per-sample records alone.

    Fitted checks: ``C_fit = max y/x^q``.  Samples are grouped by dyadic
    ranges of ``x``; ``growth`` is the largest ratio between the sub-range
    maxima of ``y/x^q`` at smaller ``x`` and at larger ``x``.  The check
    holds when ``growth < 10``: a constant fitted on the coarse samples still
    bounds the fine ones within a factor 10.  ``spread`` (max/min of the
    sub-range maxima) is reported as well.
    """
    if isinstance(check, str):
        check = _check_by_id(check)
    xk = x or check.x
    rk = rhs or check.rhs
    ok = [r for r in records if r.get("status") == "ok" and check.y in r]
    ok = [r for r in ok if r.get("deficit", 0.0) <= max_deficit]
    if not ok:
        return Verdict(check.id, "inconclusive", f"no usable samples with key {check.y!r}")

    def yv(r):
        return float(r[check.y]) ** check.y_power

    if check.kind == "inequality":
        for r in ok:
            base = float(r[rk])
            if check.id == "C2" and base > 1.0:
                continue
            bound = check.rhs_factor * (base ** check.rhs_power if base > 0 else 0.0)
            if yv(r) > bound * (1 + 1e-12) + 1e-15:
                return Verdict(check.id, "violated", f"{check.y}={yv(r):.6g} > {bound:.6g}",
                               witness={"param": r["param"], "lhs": yv(r), "rhs": bound},
                               n_samples=len(ok))
        return Verdict(check.id, "holds", "all samples satisfy the inequality", n_samples=len(ok))

    if check.kind == "band":
        lo, hi = check.band
        for r in ok:
            if not lo <= yv(r) <= hi:
                return Verdict(check.id, "violated", f"{check.y}={yv(r):.6g} outside [{lo}, {hi}]",
                               witness={"param": r["param"], "value": yv(r)}, n_samples=len(ok))
        return Verdict(check.id, "holds", f"all samples within [{lo}, {hi}]", n_samples=len(ok))

    xs = np.array([float(r[xk]) for r in ok])
    ys = np.array([yv(r) for r in ok])
    keep = xs > 0
    if keep.sum() < 2:
        return Verdict(check.id, "inconclusive", f"need ≥ 2 samples with {xk} > 0")
    xs, ys = xs[keep], ys[keep]
    params = [r["param"] for r, k in zip(ok, keep) if k]
    ratio = ys / xs ** check.q
    C = float(ratio.max())
    wit = int(np.argmax(ratio))
    bins = np.floor(np.log2(xs)).astype(int)
    ub = np.unique(bins)
    if len(ub) < 2:
        return Verdict(check.id, "inconclusive", "samples span fewer than two dyadic ranges",
                       C_fit=C, n_samples=len(xs))
    bmax = np.array([ratio[bins == b].max() for b in ub])  # ascending x
    pos = bmax[bmax > 0]
    spread = float(pos.max() / pos.min()) if len(pos) else 1.0
    # sub-ranges where y vanishes say nothing about the constant
    growth = 1.0
    for i in range(len(ub)):
        for j in range(i + 1, len(ub)):
            if bmax[i] > 0 and bmax[j] > 0:
                growth = max(growth, float(bmax[i] / bmax[j]))
    status = "holds" if growth < 10 and np.isfinite(C) else "violated"
    return Verdict(check.id, status, f"C_fit={C:.4g}, growth={growth:.3g}, spread={spread:.3g}",
                   C_fit=C, spread=spread, growth=growth,
                   witness={"param": params[wit], "ratio": C}, n_samples=len(xs))


# ----------------------------------------------------------------------------
# Sweeps
# ----------------------------------------------------------------------------


class SweepError(RuntimeError):
    def __init__(self, msg: str, records: list):
        self.records = records
        super().__init__(msg)


@dataclass
class SweepResult:
    family: str
    grid: list
    records: list
    fits: list
    verdicts: dict
    config: dict = field(default_factory=dict)

    def columns(self) -> list:
        """Declared ``config["columns"]`` first, then every other key in
        measurement order."""
        cols = ["param", "status"]
        for k in self.config.get("columns", []):
            if k not in cols:
                cols.append(k)
        for r in self.records:
            for k in r:
                if k not in cols and k != "error":
                    cols.append(k)
        return cols + ["error"]

    def series(self, key: str) -> np.ndarray:
        return np.array([r.get(key, np.nan) if r.get("status") == "ok" else np.nan
                         for r in self.records], dtype=float)

    def to_dict(self) -> dict:
        return {"family": self.family, "grid": self.grid,
                "fits": self.fits, "verdicts": {k: v.to_dict() for k, v in self.verdicts.items()},
                "config": self.config}


def _run_sample(family: str, param, fixed: dict, measurements: list, options: dict) -> dict:
    rec = {"param": param, "status": "ok"}
    try:
        mesh, meta = FAMILIES[family](param, **fixed)
        ctx = SampleContext(mesh, meta, options)
        for name in measurements:
            rec.update(MEASUREMENTS[name](ctx))
    except Exception as exc:  # per-sample failures are recorded, not raised
        rec["status"] = "failed"
        rec["error"] = f"{type(exc).__name__}: {exc}"
    return rec


def run_sweep(config: dict, threads: int = 1) -> SweepResult:
    """Run a family sweep described by ``config``.

    Keys: ``family``, ``grid``, optional ``params`` (fixed generator
    arguments), ``measurements``, ``checks`` (ids or ``{"id", "x"}``
    overrides), ``fits`` (``{"x", "y", "log_correction"}``), ``options``
    (``fit_method``, ``alphas``, ``p_list``, ``sampler``, ``preiss_atoms``,
    ``max_deficit``) and ``seed``.
    """
    family = config["family"]
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; known: {sorted(FAMILIES)}")
    measurements = list(config.get("measurements", []))
    bad = [m for m in measurements if m not in MEASUREMENTS]
    if bad:
        raise ValueError(f"unknown measurements {bad}; known: {sorted(MEASUREMENTS)}")
    grid = list(config["grid"])
    fixed = dict(config.get("params", {}))
    options = dict(config.get("options", {}))
    if "seed" in config:
        sampler = dict(options.get("sampler") or {})
        sampler.setdefault("seed", int(config["seed"]))
        options["sampler"] = sampler
    if measurements and "deficit" not in measurements:
        measurements.insert(0, "deficit")

    def one(p):
        return _run_sample(family, p, fixed, measurements, options)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            records = list(ex.map(one, grid))
    else:
        records = [one(p) for p in grid]
    failed = sum(r["status"] != "ok" for r in records)
    if failed * 2 > len(records):
        raise SweepError(f"{failed} of {len(records)} samples failed", records)

    max_def = float(options.get("max_deficit", 0.5))
    verdicts = {}
    for c in config.get("checks", []):
        spec_ = {"id": c} if isinstance(c, str) else dict(c)
        v = evaluate_check(spec_["id"], records, max_def, x=spec_.get("x"), rhs=spec_.get("rhs"))
        verdicts[spec_["id"]] = v
    fits = []
    for f in config.get("fits", []):
        ok = [r for r in records if r["status"] == "ok" and f["x"] in r and f["y"] in r
              and r.get("deficit", 0.0) <= max_def]
        try:
            fr = fit_exponent([r[f["x"]] for r in ok], [r[f["y"]] for r in ok],
                              f.get("log_correction", "none"))
            fits.append({"x": f["x"], "y": f["y"], **fr.to_dict()})
        except ValueError as exc:
            fits.append({"x": f["x"], "y": f["y"], "error": str(exc)})
    return SweepResult(family, grid, records, fits, verdicts, dict(config))

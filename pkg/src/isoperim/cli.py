"""Command-line entry point ``isoperim``.

Exit codes: 0 success, 1 input error (bad flags, files or configs),
2 numerical failure (diagnostics on stderr).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import curvature as curv
from . import distances as dist
from . import experiments as exp
from . import generators as gen
from . import io as fio
from . import measures as meas
from . import spectral as spec
from .mesh import isoperimetric_summary

NUMERICAL_ERRORS = (
    spec.SpectralConvergenceError,
    meas.FitConvergenceError,
    meas.SamplerError,
    exp.SweepError,
    np.linalg.LinAlgError,
    FloatingPointError,
)
INPUT_ERRORS = (ValueError, KeyError, TypeError, OSError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


# ----------------------------------------------------------------------------
# gen
# ----------------------------------------------------------------------------


def _gen_tube_tree(ball_radius=1.0, tube_radius=0.02, level=4, segments=None,
                   directions=None, length=0.5):
    if segments is not None:
        tree = gen.TreeSpec([(a, b) for a, b in segments], tube_radius)
    else:
        tree = gen.radial_tree(directions or [[0, 0, 1]], length, tube_radius, ball_radius)
    return gen.tube_tree_domain(ball_radius, tree, level)


GENERATORS = {
    "icosphere": gen.icosphere,
    "ellipsoid": gen.ellipsoid,
    "circle": gen.circle,
    "ellipse": gen.ellipse,
    "square": gen.square,
    "polygon": gen.polygon,
    "far_balls": gen.far_balls,
    "ball_with_satellites": gen.ball_with_satellites,
    "spiky_ball": gen.spiky_ball,
    "capsule": gen.capsule,
    "random_star_polygon": lambda seed=0, max_vertices=512: gen.random_star_polygon(
        np.random.default_rng(int(seed)), max_vertices),
    "harmonic": lambda l=2, m=0, amplitude=0.05, level=4: gen.nearly_spherical(
        gen.harmonic(l, m, amplitude), level),
    "sharpness": lambda delta=1e-3, p=4.0, n=2, level=4: gen.nearly_spherical(
        gen.sharpness_graph(delta, p, n), level),
    "tube_tree": _gen_tube_tree,
}


def generate_from_config(cfg: dict):
    cfg = dict(cfg)
    fam = cfg.pop("family", None)
    cfg.pop("seed", None)
    cfg.update(cfg.pop("params", {}))
    if fam is None:
        raise ValueError("config needs a \"family\" key")
    if "param" in cfg and fam in exp.FAMILIES:
        return exp.FAMILIES[fam](cfg.pop("param"), **cfg)[0]
    if fam not in GENERATORS:
        raise ValueError(f"unknown family {fam!r}; known: {sorted(GENERATORS)}")
    return GENERATORS[fam](**cfg)


def cmd_gen(args) -> int:
    cfg = fio.read_config(args.config, args.seed)
    mesh = generate_from_config(cfg)
    out = args.output or ("mesh.json" if mesh.ambient_dim == 2 else "mesh.off")
    man = fio.RunManifest("gen", fio.config_hash(cfg), cfg.get("seed"), inputs=[str(args.config)])
    fio.write_mesh(mesh, out, man)
    print(out)
    return 0


# ----------------------------------------------------------------------------
# per-mesh subcommands
# ----------------------------------------------------------------------------


def _emit(obj, output) -> None:
    text = fio.report_json(obj)
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def _sampler(args) -> dict:
    d = {"samples": args.samples}
    seed = args.seed
    if seed is None:
        import os

        if os.environ.get(fio.SEED_ENV):
            seed = int(os.environ[fio.SEED_ENV])
    if seed is not None:
        d["seed"] = seed
    return d


def _prov(dim):
    return lambda k: exp.provenance(k, dim)


def cmd_measure(args) -> int:
    mesh = fio.read_mesh(args.mesh)
    opts = {"fit_method": args.fit, "sampler": _sampler(args), "alphas": args.alphas}
    ctx = exp.SampleContext(mesh, {}, opts)
    vals = {}
    for name in ("deficit", "fit", "asymmetry", "concentration"):
        vals.update(exp.MEASUREMENTS[name](ctx))
    vals["fit_radius"] = ctx.fit.radius
    out = {"mesh": str(args.mesh), "fit_method": ctx.fit.method_tag,
           "values": fio.with_provenance(vals, _prov(mesh.ambient_dim))}
    _emit(out, args.output)
    return 0


def cmd_curvature(args) -> int:
    mesh = fio.read_mesh(args.mesh)
    fld = curv.curvature_field(mesh, args.p)
    d = fld.to_dict()
    d["provenance"] = "exact"
    if not args.per_vertex:
        for k in ("normal", "H", "vertex_area", "kappa1", "kappa2"):
            d.pop(k, None)
        d["H_median"] = float(np.median(fld.H))
    _emit(d, args.output)
    return 0


def cmd_spectrum(args) -> int:
    mesh = fio.read_mesh(args.mesh)
    rep = spec.chavel_deficit(mesh, k_eigs=args.k, tol=args.tol)
    d = rep.to_dict()
    d["provenance"] = "exact"
    _emit(d, args.output)
    return 0


def cmd_distance(args) -> int:
    mesh = fio.read_mesh(args.mesh)
    kind = args.kind
    if kind == "hausdorff":
        fit = meas.fit_sphere(mesh)
        if args.other:
            other = fio.read_mesh(args.other)
            h = args.h or 0.01 * fit.radius
            v, err = dist.hausdorff_distance(dist.mesh_sampled_set(mesh, h),
                                             dist.mesh_sampled_set(other, h))
            out = {"value": v, "error_bound": err, "provenance": "exact"}
        else:
            out = {**dist.hausdorff_to_model(mesh, fit).to_dict(), "provenance": "exact"}
    elif kind == "lipschitz":
        out = {**dist.lipschitz_distance_to_sphere(mesh, meas.fit_sphere(mesh)), "provenance": "exact"}
    elif kind == "preiss":
        mu = dist.boundary_measure(mesh)
        if args.other:
            nu = dist.boundary_measure(fio.read_mesh(args.other))
        else:
            fit = meas.fit_sphere(mesh)
            nu = dist.sphere_measure(fit.center, fit.radius, args.atoms, mesh.ambient_dim)
        r = dist.preiss_distance(mu, nu, i_max=args.i_max, max_atoms=args.max_atoms)
        out = {**r.to_dict(), "provenance": "exact"}
    elif kind == "bonnesen":
        s = isoperimetric_summary(mesh)
        r = dist.best_circle_hausdorff(mesh)
        d = r["value"] + r["error_bound"]
        out = {**r, "bonnesen_lhs": 16 * np.pi * d * d,
               "bonnesen_rhs": s.perimeter ** 2 - 4 * np.pi * s.volume, "provenance": "exact"}
    else:  # guarded by argparse choices
        raise ValueError(kind)
    _emit(out, args.output)
    return 0


# ----------------------------------------------------------------------------
# sweep / report
# ----------------------------------------------------------------------------


def cmd_sweep(args) -> int:
    cfg = fio.read_config(args.config, args.seed)
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    man = fio.RunManifest("sweep", fio.config_hash(cfg), cfg.get("seed"), inputs=[str(args.config)])
    res = exp.run_sweep(cfg, threads=args.threads)
    cols = res.columns()
    fio.write_csv(res.records, cols, outdir / "sweep.csv", man)
    dim = 2 if res.family in ("random_polygon", "ellipse", "circle", "square") else 3
    verdicts = {**res.to_dict(), "manifest": man.stable_dict(),
                "provenance": {c: exp.provenance(c, dim) for c in cols if c not in ("param", "status", "error")}}
    fio.write_report(verdicts, outdir / "verdicts.json")
    man.outputs = [str(outdir / "sweep.csv"), str(outdir / "verdicts.json")]
    man.finished = time.time()
    fio.write_report(man.to_dict(), outdir / "manifest.json")
    for k, v in res.verdicts.items():
        print(f"{k}: {v.status} ({v.detail})")
    return 0


def cmd_report(args) -> int:
    d = Path(args.directory)
    if args.format == "csv":
        sys.stdout.write((d / "sweep.csv").read_text())
        return 0
    doc = json.loads((d / "verdicts.json").read_text())
    _emit({k: doc[k] for k in ("family", "grid", "fits", "verdicts", "manifest") if k in doc}, None)
    return 0


# ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="isoperim", description="Quantitative isoperimetric stability measurements.")
    p.add_argument("--threads", type=int, default=1, help="worker cap for sweeps (1 = reproducible)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a mesh from a JSON config")
    g.add_argument("config")
    g.add_argument("-o", "--output")
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_gen)

    m = sub.add_parser("measure", help="deficit, sphere fit, asymmetry and concentration")
    m.add_argument("mesh")
    m.add_argument("--fit", default="boundary", choices=["boundary", "centroid", "asymmetry"])
    m.add_argument("--alphas", type=_floats, default=[0.25])
    m.add_argument("--samples", type=int, default=32768)
    m.add_argument("--seed", type=int)
    m.add_argument("-o", "--output")
    m.set_defaults(func=cmd_measure)

    c = sub.add_parser("curvature", help="curvature field and L^p aggregates")
    c.add_argument("mesh")
    c.add_argument("--p", type=_floats, default=[1.0, 2.0, 4.0])
    c.add_argument("--per-vertex", action="store_true")
    c.add_argument("-o", "--output")
    c.set_defaults(func=cmd_curvature)

    s = sub.add_parser("spectrum", help="Laplace-Beltrami eigenvalues and Chavel deficit")
    s.add_argument("mesh")
    s.add_argument("--k", type=int, default=8)
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_spectrum)

    d = sub.add_parser("distance", help="distances to the model sphere or another mesh")
    d.add_argument("kind", choices=["hausdorff", "lipschitz", "preiss", "bonnesen"])
    d.add_argument("mesh")
    d.add_argument("other", nargs="?")
    d.add_argument("--h", type=float, help="sampling radius for mesh-to-mesh Hausdorff")
    d.add_argument("--atoms", type=int, default=2000)
    d.add_argument("--i-max", type=int, default=10)
    d.add_argument("--max-atoms", type=int, default=12000)
    d.add_argument("-o", "--output")
    d.set_defaults(func=cmd_distance)

    w = sub.add_parser("sweep", help="run a family sweep")
    w.add_argument("config")
    w.add_argument("-o", "--output", default="out")
    w.add_argument("--seed", type=int)
    w.set_defaults(func=cmd_sweep)

    r = sub.add_parser("report", help="print a sweep's results")
    r.add_argument("directory")
    r.add_argument("--format", choices=["csv", "json"], default="json")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except fio.MeshParseError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    except INPUT_ERRORS as exc:
        print(f"input error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""Mesh and report file formats, configuration reading and run manifests.

Meshes: OFF for surfaces in R³; planar curves as a JSON array of closed
``[x, y]`` vertex loops (wrapped in ``{"loops", "manifest"}`` when a run
manifest is attached).
Floats are written with 17 significant digits so every write→read round
trip is lossless.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from .mesh import BoundaryMesh, loops_2d

__all__ = [
    "MeshParseError",
    "ConfigError",
    "RunManifest",
    "read_mesh",
    "write_mesh",
    "read_config",
    "write_report",
    "write_csv",
    "config_hash",
    "tool_version",
    "with_provenance",
    "SEED_ENV",
]

SEED_ENV = "ISOPERIM_SEED"


class MeshParseError(ValueError):
    """Malformed mesh file; ``line`` is 1-based (``None`` when not applicable)."""

    def __init__(self, msg: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = f"{path or '<mesh>'}" + (f":{line}" if line is not None else "")
        super().__init__(f"{where}: {msg}")


class ConfigError(ValueError):
    pass


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:  # pragma: no cover - source checkout
        return "0+unknown"


def config_hash(config) -> str:
    """SHA-256 of the canonical JSON form of ``config``."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=_json_default)
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class RunManifest:
    """Provenance of one CLI run.

    Timestamps are kept out of :meth:`stable_dict`, which is what output
    files embed, so reruns stay byte-identical.
    """

    command: str
    config_hash: str
    seed: int | None
    tool_version: str = field(default_factory=tool_version)
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    started: float = field(default_factory=time.time)
    finished: float | None = None

    def stable_dict(self) -> dict:
        return {"command": self.command, "config_hash": self.config_hash, "seed": self.seed,
                "tool_version": self.tool_version, "inputs": list(self.inputs)}

    def to_dict(self) -> dict:
        d = self.stable_dict()
        d.update({"outputs": list(self.outputs), "started": self.started, "finished": self.finished})
        return d


# ----------------------------------------------------------------------------
# Meshes
# ----------------------------------------------------------------------------


def _off_lines(text: str):
    """Non-empty, non-comment lines with their 1-based numbers."""
    for i, raw in enumerate(text.splitlines(), start=1):
        s = raw.split("#", 1)[0].strip()
        if s:
            yield i, s


def _parse_off(text: str, path: str | None) -> BoundaryMesh:
    lines = list(_off_lines(text))
    if not lines:
        raise MeshParseError("empty file", 1, path)
    ln, head = lines[0]
    tokens = head.split()
    if tokens[0] != "OFF":
        raise MeshParseError(f"expected 'OFF' header, found {tokens[0]!r}", ln, path)
    rest = tokens[1:]
    pos = 1
    if not rest:
        if len(lines) < 2:
            raise MeshParseError("missing counts line", ln, path)
        ln, cl = lines[1]
        rest = cl.split()
        pos = 2
    try:
        nv, nf = int(rest[0]), int(rest[1])
    except (ValueError, IndexError):
        raise MeshParseError(f"bad counts line {' '.join(rest)!r}", ln, path) from None
    if nv < 0 or nf < 0:
        raise MeshParseError("negative counts", ln, path)
    if len(lines) < pos + nv + nf:
        raise MeshParseError(f"expected {nv} vertices and {nf} faces, file ends early",
                             lines[-1][0], path)
    verts = np.empty((nv, 3))
    for k in range(nv):
        ln, s = lines[pos + k]
        t = s.split()
        try:
            if len(t) < 3:
                raise ValueError
            verts[k] = [float(x) for x in t[:3]]
        except ValueError:
            raise MeshParseError(f"bad vertex {k}: {s!r}", ln, path) from None
    faces = np.empty((nf, 3), dtype=np.int64)
    for k in range(nf):
        ln, s = lines[pos + nv + k]
        t = s.split()
        try:
            cnt = int(t[0])
            idx = [int(x) for x in t[1:1 + cnt]]
        except (ValueError, IndexError):
            raise MeshParseError(f"bad face {k}: {s!r}", ln, path) from None
        if cnt != 3 or len(idx) != 3:
            raise MeshParseError(f"face {k} is not a triangle", ln, path)
        bad = [i for i in idx if not 0 <= i < nv]
        if bad:
            raise MeshParseError(f"face {k} index {bad[0]} out of range [0, {nv})", ln, path)
        faces[k] = idx
    return BoundaryMesh(verts, faces)


def _parse_json_curve(text: str, path: str | None) -> BoundaryMesh:
    """A JSON array of closed ``[x, y]`` vertex loops, or an object whose
    ``"loops"`` key holds that array."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MeshParseError(f"invalid JSON: {exc.msg} (byte {exc.pos})", exc.lineno, path) from None
    if isinstance(doc, dict):
        if "loops" not in doc:
            raise MeshParseError('curve object needs a "loops" key', None, path)
        doc = doc["loops"]
    if not isinstance(doc, list) or not doc:
        raise MeshParseError("expected a non-empty array of vertex loops", None, path)
    verts, segs, base = [], [], 0
    for k, loop in enumerate(doc):
        try:
            v = np.array(loop, dtype=float)
        except (ValueError, TypeError):
            raise MeshParseError(f"loop {k} is not an array of [x, y] pairs", None, path) from None
        if v.ndim != 2 or v.shape[1] != 2:
            raise MeshParseError(f"loop {k} is not an array of [x, y] pairs", None, path)
        if len(v) < 3:
            raise MeshParseError(f"loop {k} has {len(v)} vertices, need at least 3", None, path)
        i = np.arange(len(v))
        verts.append(v)
        segs.append(np.stack([base + i, base + (i + 1) % len(v)], axis=1))
        base += len(v)
    return BoundaryMesh(np.vstack(verts), np.vstack(segs))


def read_mesh(path) -> BoundaryMesh:
    """Read ``.off`` (surface) or ``.json`` (planar curve)."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise MeshParseError(f"cannot read: {exc.strerror}", None, str(p)) from None
    if p.suffix.lower() == ".json":
        return _parse_json_curve(text, str(p))
    return _parse_off(text, str(p))


def mesh_text(mesh: BoundaryMesh, fmt: str, manifest: RunManifest | None = None) -> str:
    if fmt == "off":
        if mesh.ambient_dim != 3:
            raise ValueError("OFF holds surfaces in R^3; use .json for planar curves")
        out = ["OFF"]
        if manifest is not None:
            out.append("# manifest " + json.dumps(manifest.stable_dict(), sort_keys=True))
        out.append(f"{mesh.n_vertices} {len(mesh.elements)} 0")
        out += [" ".join(_fmt(x) for x in v) for v in mesh.vertices]
        out += ["3 " + " ".join(str(int(i)) for i in f) for f in mesh.elements]
        return "\n".join(out) + "\n"
    if fmt == "json":
        if mesh.ambient_dim != 2:
            raise ValueError("the JSON mesh format holds planar curves; use .off for surfaces")
        loops = []
        for lp in loops_2d(mesh):
            rows = ",\n    ".join(f"[{_fmt(x)}, {_fmt(y)}]" for x, y in lp)
            loops.append(f"[\n    {rows}\n  ]")
        body = "[\n  " + ",\n  ".join(loops) + "\n]"
        if manifest is None:
            return body + "\n"
        man = json.dumps(manifest.stable_dict(), sort_keys=True)
        return f'{{"loops": {body},\n"manifest": {man}}}\n'
    raise ValueError(f"unknown mesh format {fmt!r}")


def write_mesh(mesh: BoundaryMesh, path, manifest: RunManifest | None = None) -> None:
    p = Path(path)
    fmt = "json" if p.suffix.lower() == ".json" else "off"
    p.write_text(mesh_text(mesh, fmt, manifest))


# ----------------------------------------------------------------------------
# Configs and reports
# ----------------------------------------------------------------------------


def read_config(path, seed: int | None = None) -> dict:
    """Load a JSON config; the seed comes from ``seed`` if given, else from
    the ``ISOPERIM_SEED`` environment variable, else from the file."""
    p = Path(path)
    try:
        cfg = json.loads(p.read_text())
    except OSError as exc:
        raise ConfigError(f"{p}: cannot read: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}:{exc.lineno}: invalid JSON: {exc.msg} (byte {exc.pos})") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{p}: config must be a JSON object")
    if seed is not None:
        cfg["seed"] = int(seed)
    elif os.environ.get(SEED_ENV):
        try:
            cfg["seed"] = int(os.environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer") from None
    return cfg


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _clean(o):
    """Replace non-finite floats by None so reports are strict JSON."""
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, np.ndarray):
        return _clean(o.tolist())
    if isinstance(o, (float, np.floating)):
        return float(o) if math.isfinite(o) else None
    if isinstance(o, np.integer):
        return int(o)
    return o


def report_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, default=_json_default) + "\n"


def write_report(obj, path) -> None:
    Path(path).write_text(report_json(obj))


def csv_text(records: list, columns: list, manifest: RunManifest | None = None) -> str:
    import io as _io

    buf = _io.StringIO()
    if manifest is not None:
        buf.write("# manifest " + json.dumps(manifest.stable_dict(), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in records:
        row = []
        for c in columns:
            v = r.get(c, "")
            if isinstance(v, (float, np.floating)):
                v = _fmt(v) if math.isfinite(v) else "nan"
            row.append(v)
        w.writerow(row)
    return buf.getvalue()


def write_csv(records: list, columns: list, path, manifest: RunManifest | None = None) -> None:
    Path(path).write_text(csv_text(records, columns, manifest))


def with_provenance(values: dict, provenance_of) -> dict:
    """Wrap scalars as ``{"value", "provenance"[, "se"]}``.

    ``provenance_of(key)`` returns ``exact``, ``sampled`` or ``fitted``;
    keys ending in ``_se``, ``_stderr`` or ``_err`` (a deterministic error
    bound) are folded into their base entry when it exists.
    """
    folds = (("_se", "se"), ("_stderr", "stderr"), ("_err", "error_bound"))
    out = {}
    for k, v in values.items():
        if any(k.endswith(suf) and k[: -len(suf)] in values for suf, _ in folds):
            continue
        tag = provenance_of(k)
        entry = {"value": v, "provenance": tag}
        for suf, name in folds:
            if k + suf in values:
                entry[name] = values[k + suf]
        out[k] = entry
    return out

"""Reading and writing clouds, poses, manifests and reports."""

from __future__ import annotations

import json
import os
import platform
import re
import sys
import warnings
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml

from .core import PointCloud, RigidTransform, orthonormalize
from .errors import DataError, InvalidInputError, ManifestError, PlyParseError
from .report import BenchReport, report_csv, rpc_csv, rpc_filename, text_summary
from .synthetic import ShapeKind, SyntheticShapeSpec, generate_synthetic_pair

__all__ = [
    "DatasetManifest", "PairEntry", "GROUP_VOCAB", "bucket_label", "generate_synthetic_pair",
    "load_manifest", "load_pair", "read_ply", "read_pose", "write_manifest", "write_ply",
    "write_pose", "write_report",
]

# ---------------------------------------------------------------------------
# PLY

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


@dataclass
class _Element:
    name: str
    count: int
    props: list = field(default_factory=list)   # (name, dtype) or (name, (count_dtype, item_dtype))

    @property
    def has_lists(self) -> bool:
        return any(isinstance(t, tuple) for _, t in self.props)


def _parse_header(data: bytes):
    if not data.startswith(b"ply"):
        raise PlyParseError("missing 'ply' magic", 0)
    pos = 0
    fmt = None
    elements: list[_Element] = []
    while True:
        end = data.find(b"\n", pos)
        if end < 0:
            raise PlyParseError("header is not terminated by end_header", pos)
        line = data[pos:end].decode("ascii", errors="replace").strip()
        offset, pos = pos, end + 1
        if not line or line == "ply" or line.startswith(("comment", "obj_info")):
            continue
        words = line.split()
        if words[0] == "end_header":
            break
        if words[0] == "format":
            if len(words) != 3:
                raise PlyParseError(f"malformed format line {line!r}", offset)
            fmt = words[1]
            if fmt not in ("ascii", "binary_little_endian"):
                raise PlyParseError(f"unsupported encoding {fmt!r}", offset)
        elif words[0] == "element":
            if len(words) != 3 or not words[2].isdigit():
                raise PlyParseError(f"malformed element line {line!r}", offset)
            elements.append(_Element(words[1], int(words[2])))
        elif words[0] == "property":
            if not elements:
                raise PlyParseError("property before any element", offset)
            if len(words) == 5 and words[1] == "list":
                if words[2] not in _PLY_TYPES or words[3] not in _PLY_TYPES:
                    raise PlyParseError(f"unknown list type in {line!r}", offset)
                elements[-1].props.append((words[4], (_PLY_TYPES[words[2]], _PLY_TYPES[words[3]])))
            elif len(words) == 3 and words[1] in _PLY_TYPES:
                elements[-1].props.append((words[2], _PLY_TYPES[words[1]]))
            else:
                raise PlyParseError(f"malformed property line {line!r}", offset)
        else:
            raise PlyParseError(f"unexpected header line {line!r}", offset)
    if fmt is None:
        raise PlyParseError("header has no format line", 0)
    return fmt, elements, pos


def _skip_binary_lists(data, pos, el: _Element):
    for _ in range(el.count):
        for _, t in el.props:
            if isinstance(t, tuple):
                cdt, idt = np.dtype("<" + t[0]), np.dtype("<" + t[1])
                if pos + cdt.itemsize > len(data):
                    raise PlyParseError(f"truncated {el.name} data", pos)
                n = int(np.frombuffer(data, cdt, 1, pos)[0])
                pos += cdt.itemsize + n * idt.itemsize
            else:
                pos += np.dtype(t).itemsize
            if pos > len(data):
                raise PlyParseError(f"truncated {el.name} data", len(data))
    return pos


def read_ply(path) -> PointCloud:
    """Vertices (x, y, z and optional nx, ny, nz) from an ascii or binary little-endian PLY."""
    data = Path(path).read_bytes()
    fmt, elements, pos = _parse_header(data)
    vertex = next((e for e in elements if e.name == "vertex"), None)
    if vertex is None:
        raise PlyParseError("no vertex element", 0)
    names = [n for n, _ in vertex.props]
    for axis in "xyz":
        if axis not in names:
            raise PlyParseError(f"vertex element lacks property {axis!r}", 0)
    if vertex.has_lists:
        raise PlyParseError("list properties on vertices are not supported", 0)
    others = [e.name for e in elements if e is not vertex and e.count]
    if others:
        warnings.warn(f"ignoring PLY elements {others}; only vertices are read", stacklevel=2)

    if fmt == "ascii":
        table = _read_ascii_vertices(data, pos, elements, vertex)
    else:
        for el in elements:
            if el is vertex:
                break
            pos = _skip_binary_lists(data, pos, el)
        dtype = np.dtype([(n, "<" + t) for n, t in vertex.props])
        need = dtype.itemsize * vertex.count
        if pos + need > len(data):
            have = (len(data) - pos) // dtype.itemsize
            raise PlyParseError(f"truncated vertex data: header declares {vertex.count} "
                                f"vertices, found {have}", len(data))
        rec = np.frombuffer(data, dtype, vertex.count, pos)
        table = {n: rec[n].astype(np.float64) for n in names}

    pts = np.column_stack([table["x"], table["y"], table["z"]])
    normals = None
    if all(n in table for n in ("nx", "ny", "nz")):
        normals = np.column_stack([table["nx"], table["ny"], table["nz"]])
        length = np.linalg.norm(normals, axis=1)
        if np.any(length == 0) or not np.all(np.isfinite(length)):
            warnings.warn("PLY normals contain zero vectors; dropping normals", stacklevel=2)
            normals = None
        else:
            normals = normals / length[:, None]
    try:
        return PointCloud(pts, normals)
    except InvalidInputError as e:
        raise PlyParseError(str(e), pos) from None


_LINE = re.compile(rb"[^\n]*\n?")


def _read_ascii_vertices(data, pos, elements, vertex):
    for el in elements:
        rows = []
        for i in range(el.count):
            if pos >= len(data):
                raise PlyParseError(f"truncated {el.name} data: header declares {el.count} "
                                    f"records, found {i}", pos)
            end = data.find(b"\n", pos)
            end = len(data) if end < 0 else end
            line, start, pos = data[pos:end], pos, end + 1
            if el is vertex:
                words = line.split()
                if len(words) != len(el.props):
                    raise PlyParseError(f"vertex record {i} has {len(words)} values, "
                                        f"expected {len(el.props)}", start)
                try:
                    rows.append([float(w) for w in words])
                except ValueError:
                    raise PlyParseError(f"non-numeric value in vertex record {i}", start) from None
        if el is vertex:
            arr = np.array(rows, dtype=np.float64).reshape(el.count, len(el.props))
            return {n: arr[:, j] for j, (n, _) in enumerate(el.props)}
    raise PlyParseError("no vertex element", 0)


def write_ply(cloud: PointCloud, path, encoding: str = "binary_little_endian",
              precision: str = "float") -> None:
    """Write vertices (and normals when present) as 32-bit floats by default."""
    if encoding not in ("ascii", "binary_little_endian"):
        raise InvalidInputError(f"unsupported encoding {encoding!r}")
    if precision not in ("float", "double"):
        raise InvalidInputError("precision must be 'float' or 'double'")
    cols = ["x", "y", "z"]
    arrays = [cloud.points]
    if cloud.normals is not None:
        cols += ["nx", "ny", "nz"]
        arrays.append(cloud.normals)
    values = np.hstack(arrays)
    header = ["ply", f"format {encoding} 1.0", f"element vertex {len(cloud)}"]
    header += [f"property {precision} {c}" for c in cols]
    header.append("end_header")
    head = ("\n".join(header) + "\n").encode("ascii")
    np_type = "<f4" if precision == "float" else "<f8"
    with open(path, "wb") as f:
        f.write(head)
        if encoding == "ascii":
            vals = values.astype(np_type)
            lines = (" ".join(repr(float(v)) for v in row) for row in vals)
            f.write(("\n".join(lines) + "\n").encode("ascii") if len(vals) else b"")
        else:
            f.write(np.ascontiguousarray(values, dtype=np_type).tobytes())


# ---------------------------------------------------------------------------
# poses


def read_pose(path) -> RigidTransform:
    """4x4 row-major rigid transform from 16 whitespace-separated numbers."""
    text = Path(path).read_text()
    try:
        nums = [float(t) for t in text.split()]
    except ValueError:
        raise DataError(f"{os.fspath(path)}: pose contains a non-numeric token") from None
    if len(nums) != 16:
        raise DataError(f"{os.fspath(path)}: expected 16 numbers, found {len(nums)}")
    m = np.array(nums).reshape(4, 4)
    if np.max(np.abs(m[3] - (0, 0, 0, 1))) > 1e-9:
        raise DataError(f"{os.fspath(path)}: last row must be 0 0 0 1")
    rot = m[:3, :3]
    drift = float(np.max(np.abs(rot.T @ rot - np.eye(3))))
    if drift > 1e-4 or np.linalg.det(rot) <= 0:
        raise DataError(f"{os.fspath(path)}: rotation block is not rigid (drift {drift:.2e})")
    if drift > 1e-6:
        warnings.warn(f"{os.fspath(path)}: re-orthonormalizing rotation (drift {drift:.2e})",
                      stacklevel=2)
    return RigidTransform(orthonormalize(rot), m[:3, 3])


def write_pose(transform: RigidTransform, path) -> None:
    m = transform.as_matrix()
    Path(path).write_text("\n".join(" ".join(repr(float(v)) for v in row) for row in m) + "\n")


# ---------------------------------------------------------------------------
# manifests

MANIFEST_SCHEMA_VERSION = 1

GROUP_VOCAB = {
    "overlap": ("<0.3", "[0.3,0.4)", "[0.4,0.5)", "[0.5,0.6)", "[0.6,0.7)", "[0.7,0.8)", "[0.8,0.9)"),
    "clutter": ("<65%", "[65%,70%)", "[70%,75%)", "[75%,80%)", "[80%,85%)", "[85%,90%)", "[90%,95%)"),
    "occlusion": ("<60%", "[60%,65%)", "[65%,70%)", "[70%,75%)", "[75%,80%)", "[80%,85%)", "[85%,90%)"),
}
_GROUP_EDGES = {
    "overlap": (0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9),
    "clutter": (0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95),
    "occlusion": (0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90),
}


def bucket_label(group: str, value: float) -> str | None:
    """Bucket label for an overlap / clutter / occlusion value, None above the last bucket."""
    edges = _GROUP_EDGES[group]
    for label, hi in zip(GROUP_VOCAB[group], edges):
        if value < hi:
            return label
    return None


@dataclass
class PairEntry:
    source: Path | None = None
    target: Path | None = None
    pose: Path | None = None
    synthetic: SyntheticShapeSpec | None = None
    groups: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        if self.synthetic is not None:
            s = self.synthetic
            return f"synthetic:{s.kind.value}:{s.n_points}:{s.seed}:{s.pose_seed}"
        return f"{self.source.name}->{self.target.name}"


@dataclass
class DatasetManifest:
    name: str
    pairs: list[PairEntry]
    radius_pr: float = 15.0
    path: Path | None = None


def _synthetic_from(d, where, problems):
    if not isinstance(d, dict):
        problems.append(f"{where}: synthetic must be a mapping")
        return None
    allowed = {"kind", "n_points", "seed", "pose_seed", "resolution", "max_translation"}
    extra = set(d) - allowed
    if extra:
        problems.append(f"{where}: unknown synthetic keys {sorted(extra)}")
        return None
    try:
        return SyntheticShapeSpec(**{"kind": ShapeKind(d.get("kind", "bumpy_sphere")),
                                     **{k: v for k, v in d.items() if k != "kind"}})
    except (ValueError, TypeError) as e:
        problems.append(f"{where}: {e}")
        return None


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as e:
        raise ManifestError(f"{path}: {e}") from None
    if not isinstance(doc, dict):
        raise ManifestError(f"{path}: top level must be a mapping")
    problems = []
    version = doc.get("schema_version")
    if version != MANIFEST_SCHEMA_VERSION:
        problems.append(f"schema_version must be {MANIFEST_SCHEMA_VERSION}, got {version!r}")
    raw_pairs = doc.get("pairs") or []
    if not isinstance(raw_pairs, list) or not raw_pairs:
        problems.append("pairs: at least one pair is required")
        raw_pairs = []
    radius_pr = doc.get("radius_pr", 15.0)
    if not isinstance(radius_pr, (int, float)) or radius_pr <= 0:
        problems.append(f"radius_pr must be a positive number, got {radius_pr!r}")
        radius_pr = 15.0
    base = path.parent
    pairs = []
    for i, raw in enumerate(raw_pairs):
        where = f"pairs[{i}]"
        if not isinstance(raw, dict):
            problems.append(f"{where}: must be a mapping")
            continue
        entry = PairEntry()
        groups = raw.get("groups") or {}
        if not isinstance(groups, dict):
            problems.append(f"{where}.groups: must be a mapping")
            groups = {}
        for g, label in groups.items():
            if g not in GROUP_VOCAB:
                problems.append(f"{where}.groups: unknown group {g!r}")
            elif label not in GROUP_VOCAB[g]:
                problems.append(f"{where}.groups.{g}: unknown label {label!r}")
        entry.groups = dict(groups)
        if "synthetic" in raw:
            entry.synthetic = _synthetic_from(raw["synthetic"], f"{where}.synthetic", problems)
        else:
            for key in ("source", "target", "pose"):
                value = raw.get(key)
                if not value:
                    problems.append(f"{where}: missing {key!r}")
                    continue
                p = Path(value)
                p = p if p.is_absolute() else base / p
                if not p.is_file():
                    problems.append(f"{where}.{key}: cannot resolve {value!r}")
                setattr(entry, key, p)
        pairs.append(entry)
    if problems:
        raise ManifestError(problems)
    return DatasetManifest(str(doc.get("name", path.stem)), pairs, float(radius_pr), path)


def write_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    pairs = []
    for p in manifest.pairs:
        if p.synthetic is not None:
            d = asdict(p.synthetic)
            d["kind"] = p.synthetic.kind.value
            entry = {"synthetic": {k: v for k, v in d.items() if v is not None}}
        else:
            entry = {k: os.path.relpath(getattr(p, k), path.parent) for k in ("source", "target", "pose")}
        if p.groups:
            entry["groups"] = dict(p.groups)
        pairs.append(entry)
    doc = {"schema_version": MANIFEST_SCHEMA_VERSION, "name": manifest.name,
           "radius_pr": manifest.radius_pr, "pairs": pairs}
    path.write_text(yaml.safe_dump(doc, sort_keys=False))


def load_pair(entry: PairEntry):
    """(source, target, ground-truth pose) for a manifest entry."""
    if entry.synthetic is not None:
        return generate_synthetic_pair(entry.synthetic)
    return read_ply(entry.source), read_ply(entry.target), read_pose(entry.pose)


# ---------------------------------------------------------------------------
# reports


def run_metadata(extra: dict | None = None) -> dict:
    import scipy

    from . import __version__
    meta = {
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "featbench": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": platform.platform(),
    }
    meta.update(extra or {})
    return meta


def write_report(report: BenchReport, out_dir, include_time: bool = False) -> Path:
    """Write report.csv, one rpc_*.csv per cell, report.txt and run.json into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(report_csv(report, include_time))
    for cell in report.cells:
        if cell.curve is not None:
            (out / rpc_filename(cell)).write_text(rpc_csv(cell.curve))
    (out / "report.txt").write_text(text_summary(report))
    meta = run_metadata(report.metadata)
    meta["mean_time_ms"] = {f"{c.kind}/{c.condition}/{c.level:g}": c.mean_time_ms for c in report.cells}
    meta["failures"] = report.failures
    (out / "run.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")
    return out / "report.csv"

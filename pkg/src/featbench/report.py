"""Result containers and their CSV / text serialization."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

REPORT_COLUMNS = ("kind", "condition", "level", "auc", "bytes", "mean_time_ms", "n_corr", "n_pairs")
RPC_COLUMNS = ("tau", "one_minus_precision", "recall")


@dataclass(eq=False)
class RpcCurve:
    """Recall versus 1-precision, one point per threshold that produced matches."""

    taus: np.ndarray
    one_minus_precision: np.ndarray
    recall: np.ndarray
    auc: float = 0.0
    degenerate: bool = False

    def __post_init__(self):
        self.taus = np.asarray(self.taus, dtype=np.float64)
        self.one_minus_precision = np.asarray(self.one_minus_precision, dtype=np.float64)
        self.recall = np.asarray(self.recall, dtype=np.float64)

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.one_minus_precision.tolist(), self.recall.tolist()))

    def __len__(self) -> int:
        return self.taus.size


@dataclass(eq=False)
class BenchCell:
    kind: str
    condition: str
    level: float
    auc: float
    bytes: int
    n_corr: int
    n_pairs: int
    mean_time_ms: float | None = None
    curve: RpcCurve | None = None

    @property
    def key(self) -> tuple[str, str, float]:
        return (self.kind, self.condition, self.level)


@dataclass(eq=False)
class BenchReport:
    cells: list[BenchCell] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def cell(self, kind, condition="baseline", level=0.0) -> BenchCell:
        kind = getattr(kind, "value", kind)
        for c in self.cells:
            if c.kind == kind and c.condition == condition and math.isclose(c.level, level, abs_tol=1e-12):
                return c
        raise KeyError((kind, condition, level))

    def auc_table(self) -> dict[tuple[str, str, float], float]:
        return {c.key: c.auc for c in self.cells}


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def report_csv(report: BenchReport, include_time: bool = False) -> str:
    """CSV text for the report.

    ``mean_time_ms`` holds wall-clock measurements and is left blank unless
    ``include_time`` is set, so repeated runs produce identical bytes.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for c in report.cells:
        w.writerow([c.kind, c.condition, _fmt(c.level), _fmt(c.auc), c.bytes,
                    _fmt(c.mean_time_ms) if include_time else "", c.n_corr, c.n_pairs])
    return buf.getvalue()


def rpc_csv(curve: RpcCurve) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RPC_COLUMNS)
    for t, x, y in zip(curve.taus, curve.one_minus_precision, curve.recall):
        w.writerow([_fmt(t), _fmt(x), _fmt(y)])
    return buf.getvalue()


def rpc_filename(cell: BenchCell) -> str:
    return f"rpc_{cell.kind}_{cell.condition}_{cell.level:g}.csv".replace("/", "_")


def parse_report_csv(text: str) -> BenchReport:
    rows = list(csv.DictReader(io.StringIO(text)))
    cells = []
    for r in rows:
        t = r.get("mean_time_ms", "")
        cells.append(BenchCell(r["kind"], r["condition"], float(r["level"]), float(r["auc"]),
                               int(r["bytes"]), int(r["n_corr"]), int(r["n_pairs"]),
                               float(t) if t else None))
    return BenchReport(cells)


def parse_rpc_csv(text: str) -> RpcCurve:
    rows = list(csv.DictReader(io.StringIO(text)))
    return RpcCurve([float(r["tau"]) for r in rows],
                    [float(r["one_minus_precision"]) for r in rows],
                    [float(r["recall"]) for r in rows])


def read_report(path) -> BenchReport:
    return parse_report_csv(Path(path).read_text())


def text_summary(report: BenchReport) -> str:
    """Fixed-width table of AUC per descriptor (rows) and condition (columns)."""
    conds = []
    for c in report.cells:
        label = c.condition if c.condition == "baseline" else f"{c.condition}={c.level:g}"
        if label not in conds:
            conds.append(label)
    kinds = list(dict.fromkeys(c.kind for c in report.cells))
    table = {}
    for c in report.cells:
        label = c.condition if c.condition == "baseline" else f"{c.condition}={c.level:g}"
        table[(c.kind, label)] = c
    width = max([len(s) for s in conds] + [6]) + 2
    lines = ["AUC by descriptor and condition", ""]
    lines.append("kind".ljust(8) + "bytes".rjust(8) + "".join(s.rjust(width) for s in conds))
    for k in kinds:
        some = next(c for c in report.cells if c.kind == k)
        row = k.ljust(8) + str(some.bytes).rjust(8)
        for s in conds:
            c = table.get((k, s))
            row += (f"{c.auc:.4f}" if c else "-").rjust(width)
        lines.append(row)
    if report.failures:
        lines += ["", f"{len(report.failures)} pair/condition failure(s):"]
        lines += [f"  pair {f['pair']} {f['condition']}: {f['error']}" for f in report.failures]
    return "\n".join(lines) + "\n"

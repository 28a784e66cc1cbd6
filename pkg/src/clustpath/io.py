"""Data ingestion, synthetic data and path serialisation."""

from __future__ import annotations

import csv
import json
import os
import platform
from dataclasses import asdict, dataclass, field

import numpy as np

from .core_model import Dataset, Model, ridge_augment
from .errors import InputError, RankDeficientError
from .path import Breakpoint, DriverStats, EventKind, EventRecord, SolutionPath

FORMAT_VERSION = 1


def _fmt(x: float) -> str:
    # shortest repr that round-trips
    return repr(float(x))


@dataclass
class RunManifest:
    command: str
    inputs: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    seed: int | None = None
    outputs: list = field(default_factory=list)
    version: str = ""
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["python"] = platform.python_version()
        d["numpy"] = np.__version__
        return d


# ---------------------------------------------------------------------------
# ingestion


def read_table(path):
    """Header and float matrix of a CSV file."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise InputError(f"{path}: need a header row and at least one data row")
    header = [h.strip() for h in rows[0]]
    data = np.empty((len(rows) - 1, len(header)))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise InputError(f"{path}: row {i} has {len(row)} cells, header has {len(header)}")
        for j, cell in enumerate(row):
            try:
                data[i - 2, j] = float(cell)
            except ValueError:
                raise InputError(
                    f"{path}: non-numeric cell {cell!r} at row {i}, column {j + 1} ({header[j]})"
                ) from None
    return header, data


def split_response(header, data, response: str | None):
    if response is None:
        col = 0
    elif response in header:
        col = header.index(response)
    else:
        raise InputError(f"response column {response!r} not found; available: {', '.join(header)}")
    keep = [j for j in range(len(header)) if j != col]
    return data[:, col].copy(), data[:, keep], [header[j] for j in keep]


def column_stats(X):
    """Column means and sample standard deviations (constant columns rejected)."""
    X = np.asarray(X, dtype=float)
    mu = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.zeros(X.shape[1])
    if np.any(sd == 0):
        bad = np.flatnonzero(sd == 0) + 1
        raise InputError(f"cannot standardize constant column(s) {bad.tolist()}")
    return mu, sd


def standardize(X):
    """Centre each column and scale it to unit sample variance."""
    mu, sd = column_stats(X)
    return (np.asarray(X, dtype=float) - mu) / sd


def load_xy(path, response: str | None = None):
    """``(y, X, names)`` from a CSV without any rank requirement."""
    header, data = read_table(path)
    y, X, names = split_response(header, data, response)
    if X.shape[1] == 0:
        raise InputError(f"{path}: no predictor columns")
    return y, X, names


def make_dataset(y, X, ridge: float | None = None) -> Dataset:
    if ridge:
        return ridge_augment(y, X, ridge)
    try:
        return Dataset(y, X)
    except RankDeficientError as exc:
        raise RankDeficientError(f"{exc}; rerun with --ridge <eps> (e.g. --ridge 1e-6)") from None


def ingest_csv(path, response: str | None = None, standardize_x: bool = False,
               ridge: float | None = None):
    """Load ``(Dataset, predictor names)`` from a CSV with a header row.

    The response is the named column (default: the first); the remaining
    columns, in header order, form the design.
    """
    y, X, names = load_xy(path, response)
    if standardize_x:
        X = standardize(X)
    return make_dataset(y, X, ridge), names


def write_table(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


# ---------------------------------------------------------------------------
# synthetic data


def synth_generate(n: int, p: int, seed: int):
    """``y = X beta + e`` with ``beta = [theta, theta, -theta, -theta, 0]``.

    ``theta``, ``X`` and ``e`` are standard normal, drawn in that order from a
    PCG64 generator seeded with ``seed``. Returns ``(X, y, beta)``.
    """
    if p <= 0 or p % 5:
        raise InputError(f"p must be a positive multiple of 5, got {p}")
    if n <= 0:
        raise InputError("n must be positive")
    rng = np.random.Generator(np.random.PCG64(seed))
    theta = rng.standard_normal(p // 5)
    beta = np.concatenate([theta, theta, -theta, -theta, np.zeros(p // 5)])
    X = rng.standard_normal((n, p))
    e = rng.standard_normal(n)
    return X, X @ beta + e, beta


def write_dataset(path, y, X, names=None) -> None:
    names = names or [f"x{j + 1}" for j in range(X.shape[1])]
    write_table(path, ["y", *names], ([float(a), *map(float, b)] for a, b in zip(y, X)))


# ---------------------------------------------------------------------------
# path output


CSV_FIXED = ["eta", "event_kind", "event_detail", "gnnz"]


def path_header(p: int) -> list:
    return CSV_FIXED + [f"beta_{j + 1}" for j in range(p)]


def _row_events(bp: Breakpoint, i: int, path: SolutionPath):
    if not bp.events:
        if i == 0:
            return "start", ""
        return path.reason, ""
    return ";".join(e.kind.value for e in bp.events), ";".join(e.detail() for e in bp.events)


def emit_csv(path: SolutionPath, out) -> None:
    rows = []
    for i, bp in enumerate(path.breakpoints):
        kind, detail = _row_events(bp, i, path)
        rows.append([float(bp.eta), kind, detail, bp.gnnz, *map(float, bp.beta)])
    write_table(out, path_header(path.p), rows)


def path_to_dict(path: SolutionPath) -> dict:
    st = path.stats
    return {
        "format_version": FORMAT_VERSION,
        "model": path.model.value,
        "lambda1_bar": path.lambda1_bar,
        "lambda2_bar": path.lambda2_bar,
        "reason": path.reason,
        "truncated": path.truncated,
        "terminal_eta": path.terminal_eta,
        "final_slope_norm": path.final_slope_norm,
        "slope_tol": path.slope_tol,
        "near_degenerate": path.near_degenerate,
        "breakpoints": [
            {
                "eta": bp.eta,
                "beta": [float(b) for b in bp.beta],
                "labels": [int(v) for v in bp.labels],
                "events": [{"kind": e.kind.value, "group": e.group, "k": e.k} for e in bp.events],
            }
            for bp in path.breakpoints
        ],
        "stats": {
            "T_fuse": st.T_fuse,
            "T_split": st.T_split,
            "T_switch": st.T_switch,
            "max_continuity_jump": st.max_jump,
            "refreshes": st.refreshes,
            "inverse_drift_max": max(st.inverse_drift) if st.inverse_drift else None,
        },
        # timing is the only non-reproducible part of the output
        "timing": {"mean_wall_time_per_event": st.mean_wall_time()},
    }


def emit_json(path: SolutionPath, out, manifest: RunManifest | None = None) -> None:
    doc = {"manifest": manifest.to_dict() if manifest else None, "path": path_to_dict(path)}
    with open(out, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def emit_path(path: SolutionPath, fmt: str, out_dir, manifest: RunManifest | None = None,
              stem: str = "path") -> list:
    """Write the path as ``<stem>.csv`` or ``<stem>.json`` in ``out_dir``; returns written files."""
    if fmt not in ("csv", "json"):
        raise InputError(f"unknown format {fmt!r}")
    os.makedirs(out_dir, exist_ok=True)
    target = os.path.join(out_dir, f"{stem}.{fmt}")
    if fmt == "csv":
        emit_csv(path, target)
    else:
        emit_json(path, target, manifest)
    return [target]


def path_from_dict(d: dict) -> SolutionPath:
    bps = [
        Breakpoint(
            float(b["eta"]),
            np.array(b["beta"], dtype=float),
            np.array(b["labels"], dtype=np.int64),
            tuple(EventRecord(EventKind(e["kind"]), e["group"], e["k"]) for e in b["events"]),
        )
        for b in d["breakpoints"]
    ]
    s = d.get("stats", {})
    stats = DriverStats(T_fuse=s.get("T_fuse", 0), T_split=s.get("T_split", 0),
                        T_switch=s.get("T_switch", 0))
    return SolutionPath(Model(d["model"]), d["lambda1_bar"], d["lambda2_bar"], bps,
                        d["terminal_eta"], d["reason"], stats, d["final_slope_norm"],
                        d["slope_tol"])


def load_path_json(fname) -> SolutionPath:
    with open(fname) as fh:
        doc = json.load(fh)
    return path_from_dict(doc["path"] if "path" in doc else doc)

"""CSV, JSON and SVG writers plus the run manifest.

All writers are deterministic: floats are printed with 17 significant
digits (round-trip exact) and JSON keys are sorted.
"""
from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .boundary import GraphSample

CSV_HEADER = "theta,value"


def write_csv(path, theta, values) -> Path:
    path = Path(path)
    data = np.column_stack([np.asarray(theta, dtype=np.float64), np.asarray(values, dtype=np.float64)])
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=CSV_HEADER, comments="")
    return path


def write_graph_csv(path, graph: GraphSample) -> Path:
    return write_csv(path, graph.theta, graph.values)


def read_graph_csv(path, L: float = 1.0) -> GraphSample:
    """Read a ``theta,value`` file written on a uniform grid back into a GraphSample."""
    with open(path) as fh:
        header = fh.readline().strip()
    if header != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {header!r}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    theta, values = data[:, 0], data[:, 1]
    n = len(theta)
    offset = float(theta[0] * n) if n else 0.0
    return GraphSample(values, L, None, "", round(offset, 12))


def jsonable(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats for JSON."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return obj


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj))
    return path


def write_svg(path, series: Sequence[tuple], L: float, width: int = 800, height: int = 400,
              max_points: int = 4000) -> Path:
    """Polylines of (theta, values) pairs on [0, 1] x [0, L], with a frame."""
    pad = 20
    w, h = width - 2 * pad, height - 2 * pad
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="{pad}" y="{pad}" width="{w}" height="{h}" fill="none" stroke="black"/>',
    ]
    for k, (theta, values) in enumerate(series):
        theta = np.asarray(theta, dtype=np.float64)
        values = np.asarray(values, dtype=np.float64)
        step = max(1, len(theta) // max_points)
        xs = pad + w * theta[::step]
        ys = pad + h * (1.0 - values[::step] / L)
        pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
        shade = 30 + (180 * k) // max(1, len(series) - 1) if len(series) > 1 else 0
        lines.append(f'<polyline fill="none" stroke="rgb({shade},{shade},{shade})" stroke-width="1" points="{pts}"/>')
    lines.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, files: Iterable, config_hash: str, version: str, wall_time: float) -> Path:
    """manifest.json listing every emitted file with its sha256."""
    out_dir = Path(out_dir)
    entries = {Path(f).name: sha256_file(f) for f in sorted(files, key=lambda p: Path(p).name)}
    return write_json(out_dir / "manifest.json", {
        "config_hash": config_hash,
        "version": version,
        "wall_time_s": round(wall_time, 3),
        "files": entries,
    })

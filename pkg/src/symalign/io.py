"""Point-cloud text I/O and result records.

Point files are plain text: one point per line, 2 or 3 coordinates separated
by whitespace or commas, '#' starts a comment.  Values are written with
repr-level precision so a save/load round trip is bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .geometry import PointSet

__all__ = ["load_points", "save_points", "result_record", "write_result"]


def load_points(path) -> PointSet:
    """Parse a point file; malformed rows report their line number."""
    path = Path(path)
    rows: list[list[float]] = []
    width = None
    with path.open() as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            try:
                values = [float(p) for p in parts]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed row: {raw.strip()!r}") from exc
            if len(values) not in (2, 3):
                raise ValueError(f"{path}:{lineno}: expected 2 or 3 columns, got {len(values)}")
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise ValueError(f"{path}:{lineno}: mixed dimensionality "
                                 f"({len(values)} columns after {width})")
            rows.append(values)
    if not rows:
        raise ValueError(f"{path}: no points found")
    return PointSet(np.array(rows))


def save_points(path, points, header: str | None = None):
    pts = points.points if isinstance(points, PointSet) else np.asarray(points, dtype=np.float64)
    path = Path(path)
    with path.open("w") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        for row in pts:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def result_record(result, normalization=None, extras: dict | None = None) -> dict:
    """JSON-serializable record of a solve: enough to re-evaluate the energy."""
    h = result.hypothesis
    rec = {
        "mode": result.mode,
        "energy": result.energy,
        "tau": result.tau,
        "certified": result.certified,
        "pose": {"r": h.pose.r, "t": h.pose.t.tolist()},
        "plane": None if h.plane is None else {"alpha": h.plane.alpha, "d": h.plane.d},
        "stats": {
            "outer_expansions": result.stats.outer_expansions,
            "inner_expansions": result.stats.inner_expansions,
            "inner_calls": result.stats.inner_calls,
            "evaluations": result.stats.evaluations,
            "outer_queue_peak": result.stats.outer_queue_peak,
            "inner_queue_peak": result.stats.inner_queue_peak,
            "icp_runs": result.stats.icp_runs,
            "icp_improvements": result.stats.icp_improvements,
            "wall_time": result.stats.wall_time,
        },
    }
    if normalization is not None:
        rec["normalization"] = {"offset": normalization.offset.tolist(),
                                "scale": normalization.scale}
    if extras:
        rec.update(extras)
    return rec


def write_result(path, record: dict):
    Path(path).write_text(json.dumps(record, indent=2) + "\n")

"""Synthetic trial generation, normalization, error metrics, and batch runs.

2D trials split a symmetric contour into two overlapping angular sectors and
pose the data half by a random yaw and translation; 3D trials cull a
symmetric surface model from two random horizontal viewpoints
(hidden-point-removal) before posing.  All coordinates are in [-1, 1] by
construction, random translations are drawn per component from +/-0.5 (the
draw is rejected and retried when a corner case would push points outside the
normalized box), and every source of randomness flows from the trial seed.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .baselines import RansacConfig, ransac_symmetry_detailed, register_only
from .bnb import SolveConfig, SolveResult, solve
from .geometry import Pose, SymmetryPlane, as_points, transform_plane, wrap_angle
from .objective import Hypothesis
from .shapes import SHAPE_FAMILIES, contour_2d, hidden_point_removal, mutual_overlap, surface_3d

__all__ = [
    "TrialSpec",
    "GroundTruth",
    "TrialResult",
    "NormalizationRecord",
    "normalize",
    "normalize_pair",
    "make_2d_trial",
    "make_3d_trial",
    "make_trial",
    "score",
    "batch",
    "rows_to_csv",
    "summarize",
]

SUCCESS_ROTATION_DEG = 10.0  # a trial counts as a success below this rotation error


@dataclass(frozen=True)
class TrialSpec:
    """One synthetic experiment; all randomness derives from `seed`."""

    shape: str = "blob"
    overlap_ratio: float = 0.5
    outlier_fraction: float = 0.0
    seed: int = 0
    dim: int = 2
    n_points: int = 50

    def __post_init__(self):
        if not (0.0 < self.overlap_ratio <= 1.0):
            raise ValueError("overlap_ratio must be in (0, 1]")
        if not (0.0 <= self.outlier_fraction <= 0.5):
            raise ValueError("outlier_fraction must be in [0, 0.5]")
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        if self.shape not in SHAPE_FAMILIES:
            raise ValueError(f"unknown shape {self.shape!r}")


@dataclass
class GroundTruth:
    pose: Pose
    plane: SymmetryPlane
    overlap: float
    outliers_model: np.ndarray
    outliers_data: np.ndarray


@dataclass
class TrialResult:
    rotation_error_deg: float
    normal_error_deg: float
    translation_error: float
    depth_error: float
    energy: float = math.nan
    wall_time: float = 0.0
    certified: bool = True

    @property
    def success(self) -> bool:
        return self.rotation_error_deg < SUCCESS_ROTATION_DEG


@dataclass(frozen=True)
class NormalizationRecord:
    """Common centering offset and isotropic scale: x_norm = (x - offset) * scale."""

    offset: np.ndarray
    scale: float

    def apply(self, points) -> np.ndarray:
        return (as_points(points) - self.offset) * self.scale

    def invert(self, points) -> np.ndarray:
        return as_points(points) / self.scale + self.offset


def normalize(P) -> tuple[np.ndarray, NormalizationRecord]:
    """Center on the centroid and scale so every coordinate lies in [-1, 1]."""
    pts = as_points(P)
    offset = pts.mean(axis=0)
    extent = np.abs(pts - offset).max()
    if extent == 0.0:
        raise ValueError("cannot normalize a degenerate (all-identical) point set")
    record = NormalizationRecord(offset=offset, scale=1.0 / extent)
    return record.apply(pts), record


def normalize_pair(X, Y) -> tuple[np.ndarray, np.ndarray, NormalizationRecord]:
    """Normalize two sets with one shared offset and scale."""
    X, Y = as_points(X), as_points(Y)
    both = np.vstack([X, Y])
    offset = both.mean(axis=0)
    extent = np.abs(both - offset).max()
    if extent == 0.0:
        raise ValueError("cannot normalize degenerate point sets")
    record = NormalizationRecord(offset=offset, scale=1.0 / extent)
    return record.apply(X), record.apply(Y), record


def _split_int(total: int, parts: int) -> list[int]:
    base, rem = divmod(total, parts)
    return [base + (1 if i < rem else 0) for i in range(parts)]


def _split_indices(n_contour: int, k: int, shared: int, offset: int,
                   reps: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Interleaved sector split: per repetition [X-only, shared, Y-only, shared].

    Exactly k points per set and `shared` common points; shared sectors sit at
    the boundaries between the exclusive arcs, like adjoining partial views.
    """
    xo = _split_int(k - shared, reps)
    yo = _split_int(k - shared, reps)
    sh = _split_int(shared, 2 * reps)
    x_idx: list[np.ndarray] = []
    y_idx: list[np.ndarray] = []
    cursor = offset
    for i in range(reps):
        for size, owners in ((xo[i], (x_idx,)), (sh[2 * i], (x_idx, y_idx)),
                             (yo[i], (y_idx,)), (sh[2 * i + 1], (x_idx, y_idx))):
            block = (cursor + np.arange(size)) % n_contour
            cursor += size
            for owner in owners:
                owner.append(block)
    return np.concatenate(x_idx), np.concatenate(y_idx)


def _draw_pose(rng: np.random.Generator, dim: int, points_model_frame: np.ndarray,
               max_component: float = 0.5) -> tuple[Pose, np.ndarray]:
    """Ground-truth pose with all posed coordinates kept inside [-1, 1]."""
    r = rng.uniform(-math.pi, math.pi)
    span = max_component
    for _ in range(64):
        t = rng.uniform(-span, span, size=dim)
        pose = Pose(r, t)
        data = pose.inverse().apply(points_model_frame)
        if np.abs(data).max() <= 1.0:
            return pose, data
        span *= 0.9
    raise RuntimeError("could not draw a pose keeping coordinates normalized")


def _inject_outliers(points: np.ndarray, fraction: float,
                     rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    n_out = int(math.floor(fraction * len(points)))
    mask = np.zeros(len(points) + n_out, dtype=bool)
    if n_out == 0:
        return points, mask
    extra = rng.uniform(-1.0, 1.0, size=(n_out, points.shape[1]))
    mask[len(points):] = True
    return np.vstack([points, extra]), mask


def make_2d_trial(spec: TrialSpec) -> tuple[np.ndarray, np.ndarray, GroundTruth]:
    """Contour sector split with a constructed shared-point overlap ratio."""
    if spec.dim != 2:
        raise ValueError("make_2d_trial requires dim=2")
    rng = np.random.default_rng(spec.seed)
    o = spec.overlap_ratio
    k = spec.n_points
    shared = int(round(o * k))
    n_used = 2 * k - shared
    n_contour = n_used + (n_used % 2)  # generator mirrors halves, needs even n
    contour = contour_2d(spec.shape, rng, n_contour, radius=0.33)
    n_contour = len(contour)
    if n_used > n_contour:
        raise ValueError("requested overlap is infeasible for the sector structure")
    offset = int(rng.integers(n_contour))
    x_idx, y_idx = _split_indices(n_contour, k, shared, offset)

    # model pose scatters the mirror line away from the generator frame
    model_pose = Pose(rng.uniform(-math.pi, math.pi), rng.uniform(-0.1, 0.1, size=2))
    placed = model_pose.apply(contour)
    plane_gt = transform_plane(model_pose.inverse(), SymmetryPlane(math.pi / 2, 0.0))

    X = placed[x_idx]
    pose_gt, Y = _draw_pose(rng, 2, placed[y_idx])
    X, out_x = _inject_outliers(X, spec.outlier_fraction, rng)
    Y, out_y = _inject_outliers(Y, spec.outlier_fraction, rng)
    truth = GroundTruth(pose=pose_gt, plane=plane_gt, overlap=shared / k,
                        outliers_model=out_x, outliers_data=out_y)
    return X, Y, truth


def make_3d_trial(spec: TrialSpec, min_overlap: float | None = None,
                  max_view_separation: float = 1.9) -> tuple[np.ndarray, np.ndarray, GroundTruth]:
    """Two hidden-point-removal culled views of a symmetric 3D model.

    The overlap is measured (mutual NN within 0.02), not constructed;
    viewpoints are redrawn until it reaches ``min_overlap`` (defaults to the
    spec's overlap_ratio).
    """
    if spec.dim != 3:
        raise ValueError("make_3d_trial requires dim=3")
    rng = np.random.default_rng(spec.seed)
    target = spec.overlap_ratio if min_overlap is None else min_overlap
    master = surface_3d(spec.shape, rng, n_points=max(700, 6 * spec.n_points))
    model_pose = Pose(rng.uniform(-math.pi, math.pi),
                      np.append(rng.uniform(-0.1, 0.1, size=2), 0.0))
    master = model_pose.apply(master)
    plane_gt = transform_plane(model_pose.inverse(), SymmetryPlane(math.pi / 2, 0.0))

    for _attempt in range(64):
        phi = rng.uniform(-math.pi, math.pi)
        dphi = rng.uniform(0.25, max_view_separation)
        views = []
        for angle in (phi, phi + dphi):
            vp = np.array([3.0 * math.cos(angle), 3.0 * math.sin(angle),
                           rng.uniform(0.0, 0.8)])
            vis = hidden_point_removal(master, vp)
            pts = master[vis]
            if len(pts) > spec.n_points:
                sel = rng.choice(len(pts), size=spec.n_points, replace=False)
                pts = pts[np.sort(sel)]
            views.append(pts)
        Xv, Yv = views
        overlap = mutual_overlap(Xv, Yv)
        if overlap >= target:
            break
    else:
        raise RuntimeError("could not reach the requested 3D overlap")

    pose_gt, Y = _draw_pose(rng, 3, Yv)
    X, out_x = _inject_outliers(Xv, spec.outlier_fraction, rng)
    Y, out_y = _inject_outliers(Y, spec.outlier_fraction, rng)
    truth = GroundTruth(pose=pose_gt, plane=plane_gt, overlap=overlap,
                        outliers_model=out_x, outliers_data=out_y)
    return X, Y, truth


def make_trial(spec: TrialSpec):
    return make_2d_trial(spec) if spec.dim == 2 else make_3d_trial(spec)


def score(result: Hypothesis | SolveResult, truth: GroundTruth) -> TrialResult:
    """Errors against ground truth, respecting the (n, d) ~ (-n, -d) ambiguity."""
    h = result.hypothesis if isinstance(result, SolveResult) else result
    rot_err = abs(wrap_angle(h.pose.r - truth.pose.r)) * 180.0 / math.pi
    trans_err = float(np.linalg.norm(h.pose.t - truth.pose.t))
    if h.plane is None:
        normal_err = math.nan
        depth_err = math.nan
    else:
        raw = wrap_angle(h.plane.alpha - truth.plane.alpha)
        if abs(raw) <= math.pi / 2:
            normal_err = abs(raw) * 180.0 / math.pi
            depth_err = abs(h.plane.d - truth.plane.d)
        else:
            normal_err = (math.pi - abs(raw)) * 180.0 / math.pi
            depth_err = abs(-h.plane.d - truth.plane.d)
    return TrialResult(rotation_error_deg=rot_err, normal_error_deg=normal_err,
                       translation_error=trans_err, depth_error=depth_err)


def _run_method(X, Y, method: str, cfg: SolveConfig, seed: int) -> tuple[Hypothesis, float, bool]:
    if method == "joint":
        res = solve(X, Y, cfg)
        return res.hypothesis, res.energy, res.certified
    if method == "register-only":
        res = register_only(X, Y, cfg)
        return res.hypothesis, res.energy, res.certified
    if method == "ransac-sym":
        res = register_only(X, Y, cfg)
        fused = np.vstack([as_points(X), res.pose.apply(Y)])
        det = ransac_symmetry_detailed(fused, RansacConfig(), seed=seed)
        hyp = Hypothesis(res.pose, det.plane)
        return hyp, res.energy, res.certified
    raise ValueError(f"unknown method {method!r}")


def batch(specs, method: str = "joint", cfg: SolveConfig | None = None) -> list[dict]:
    """Run trials sequentially; per-trial failures are recorded, not fatal."""
    rows = []
    for i, spec in enumerate(specs):
        row = {
            "trial": i,
            "dim": spec.dim,
            "shape": spec.shape,
            "overlap": spec.overlap_ratio,
            "outlier_fraction": spec.outlier_fraction,
            "method": method,
            "seed": spec.seed,
        }
        try:
            X, Y, truth = make_trial(spec)
            run_cfg = cfg if cfg is not None else SolveConfig()
            t0 = time.perf_counter()
            hyp, energy, certified = _run_method(X, Y, method, run_cfg, spec.seed)
            wall = time.perf_counter() - t0
            tr = score(hyp, truth)
            row.update({
                "measured_overlap": truth.overlap,
                "rot_err_deg": tr.rotation_error_deg,
                "normal_err_deg": tr.normal_error_deg,
                "trans_err": tr.translation_error,
                "depth_err": tr.depth_error,
                "energy": energy,
                "certified": certified,
                "success": tr.rotation_error_deg < SUCCESS_ROTATION_DEG,
                "time_s": wall,
                "error": "",
            })
        except Exception as exc:  # record the failure and keep going
            row.update({"error": f"{type(exc).__name__}: {exc}"})
        rows.append(row)
    return rows


_CSV_COLUMNS = ["trial", "dim", "shape", "overlap", "outlier_fraction", "method",
                "seed", "measured_overlap", "rot_err_deg", "normal_err_deg",
                "trans_err", "depth_err", "energy", "certified", "success",
                "time_s", "error"]


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def rows_to_csv(rows: list[dict], include_time: bool = True) -> str:
    """Deterministic CSV rendering (drop the wall-time column to compare runs)."""
    cols = [c for c in _CSV_COLUMNS if include_time or c != "time_s"]
    lines = [",".join(cols)]
    for row in rows:
        lines.append(",".join(_fmt(row.get(c, "")) for c in cols))
    return "\n".join(lines) + "\n"


def summarize(rows: list[dict]) -> str:
    """Mean/median error table per (method, overlap bucket)."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        if row.get("error"):
            continue
        key = (row["method"], round(row["overlap"], 2))
        groups.setdefault(key, []).append(row)

    lines = ["method,overlap,n,stat,rot_err_deg,normal_err_deg,trans_err,depth_err,success_rate"]
    for (method, overlap), rs in sorted(groups.items()):
        fields = ["rot_err_deg", "normal_err_deg", "trans_err", "depth_err"]
        data = {f: np.array([r[f] for r in rs], dtype=float) for f in fields}
        rate = float(np.mean([r["success"] for r in rs]))
        for stat, fn in (("mean", np.nanmean), ("median", np.nanmedian)):
            vals = ",".join(_fmt(float(fn(data[f]))) for f in fields)
            lines.append(f"{method},{_fmt(overlap)},{len(rs)},{stat},{vals},{_fmt(rate)}")
    return "\n".join(lines) + "\n"

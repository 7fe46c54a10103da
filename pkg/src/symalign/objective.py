"""Per-point residuals, trimming, and the joint alignment-plus-symmetry energy.

For a hypothesis (r, t, alpha, d) over model set X (M points) and data set Y
(N points), three residual families are evaluated:

* ``sym_model``: each x reflected across the plane, matched against the union
  of X and the aligned data Y^r = {R y + t}.
* ``reg``: each aligned data point R y + t matched against the union of X and
  its reflection X^s, weighted by which of the two the match came from.
* ``sym_data``: each y reflected across the plane expressed in the data frame
  (normal angle alpha - r, depth t.n + d), matched against the union of Y and
  the model brought into the data frame X^r = {R^T (x - t)}.

The trimmed energy keeps, independently per family, the 70% (configurable)
smallest residuals and sums their squares.

The evaluator never materializes the hypothesis-dependent unions: rigid maps
and reflections are isometries, so the distance from a query to a transformed
copy of a set equals the distance from the inversely transformed query to the
original set.  All lookups therefore run against two static indexes (one over
X, one over Y).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import (
    Pose,
    SymmetryPlane,
    as_points,
    normal_vector,
    rotation_matrix,
)
from .nnindex import NeighborIndex, query_workers

__all__ = [
    "TrimConfig",
    "Weights",
    "Hypothesis",
    "ResidualBreakdown",
    "trim",
    "build_sets",
    "residual_sym_model",
    "residual_reg",
    "residual_sym_data",
    "evaluate",
    "Evaluator",
]

# sets ≤ this size use vectorized brute-force distances instead of a k-d tree
_BRUTE_LIMIT = 256


@dataclass(frozen=True)
class TrimConfig:
    """Trimmed-ICP configuration: keep the `ratio` smallest residuals."""

    ratio: float = 0.7

    def __post_init__(self):
        if not (0.0 < self.ratio <= 1.0):
            raise ValueError("trim ratio must be in (0, 1]")

    def kept(self, n: int) -> int:
        return max(1, int(math.floor(self.ratio * n)))


@dataclass(frozen=True)
class Weights:
    """Registration residual weights by match provenance (X vs reflected X)."""

    w_primary: float = 1.0
    w_reflected: float = 1.0

    def __post_init__(self):
        for w in (self.w_primary, self.w_reflected):
            if not (0.0 < w <= 1.0):
                raise ValueError("weights must be in (0, 1]")


@dataclass(frozen=True)
class Hypothesis:
    """A joint pose-plus-plane candidate. `plane` is None in register-only mode."""

    pose: Pose
    plane: SymmetryPlane | None

    @property
    def dim(self) -> int:
        return self.pose.dim


@dataclass
class ResidualBreakdown:
    """Per-point residuals, kept masks, and the trimmed total energy."""

    sym_model: np.ndarray
    reg: np.ndarray
    sym_data: np.ndarray
    kept_masks: dict[str, np.ndarray] = field(default_factory=dict)
    trimmed_energy: float = 0.0


def trim(residuals, cfg: TrimConfig) -> tuple[np.ndarray, float]:
    """Keep the k = floor(ratio*len) smallest residuals (k >= 1), ties by index.

    Returns the boolean kept mask and the sum of squares of kept residuals.
    """
    res = np.asarray(residuals, dtype=np.float64).reshape(-1)
    if res.size == 0:
        raise ValueError("residual list is empty")
    k = cfg.kept(res.size)
    order = np.argsort(res, kind="stable")
    mask = np.zeros(res.size, dtype=bool)
    mask[order[:k]] = True
    return mask, float(np.sum(res[mask] ** 2))


def _trimmed_sq_sum(res: np.ndarray, k: int) -> float:
    # sum of the k smallest squares; tie order does not affect the value
    if k >= res.size:
        return float(np.dot(res, res))
    part = np.partition(res, k - 1)[:k]
    return float(np.dot(part, part))


def build_sets(h: Hypothesis, X, Y) -> dict[str, np.ndarray]:
    """Materialize the derived sets X^s, X^r, Y^r for a hypothesis."""
    X = as_points(X)
    Y = as_points(Y)
    if h.plane is None:
        raise ValueError("hypothesis has no plane")
    R = h.pose.matrix
    t = h.pose.t
    return {
        "Xs": h.plane.reflect(X),
        "Xr": (X - t) @ R,
        "Yr": Y @ R.T + t,
    }


def residual_sym_model(plane: SymmetryPlane, x_i, neighbors: NeighborIndex) -> float:
    """Symmetry residual of a model point against an index over X u Y^r."""
    x_i = np.asarray(x_i, dtype=np.float64).reshape(-1)
    _, dist, _ = neighbors.nearest(plane.reflect(x_i))
    return dist


def residual_reg(pose: Pose, y_i, neighbors: NeighborIndex, w: Weights) -> float:
    """Weighted alignment residual of a data point against an index over X u X^s."""
    y_i = np.asarray(y_i, dtype=np.float64).reshape(-1)
    _, dist, tag = neighbors.nearest(pose.apply(y_i))
    weight = w.w_reflected if tag == "Xs" else w.w_primary
    return weight * dist

def residual_sym_data(h: Hypothesis, y_i, neighbors: NeighborIndex) -> float:
    """Symmetry residual of a data point against an index over X^r u Y.

    Uses the plane transported into the data frame: normal angle alpha - r,
    depth t.n + d.
    """
    from .geometry import transform_plane

    y_i = np.asarray(y_i, dtype=np.float64).reshape(-1)
    plane_hat = transform_plane(h.pose, h.plane)
    _, dist, _ = neighbors.nearest(plane_hat.reflect(y_i))
    return dist


class _StaticSet:
    """Exact NN distances to one static point set.

    Small sets use a brute vectorized path (faster than tree queries at this
    scale); large ones a cKDTree.  Brute squared distances are recomputed
    through explicit differences whenever cancellation could matter, so
    near-zero distances stay exact.
    """

    def __init__(self, points: np.ndarray):
        self.points = points
        self.sq_norms = np.einsum("ij,ij->i", points, points)
        self.max_norm = float(np.sqrt(self.sq_norms.max()))
        self.norms = np.sqrt(self.sq_norms)
        self._tree = None if len(points) <= _BRUTE_LIMIT else cKDTree(points)

    def distances(self, queries: np.ndarray) -> np.ndarray:
        if self._tree is not None:
            d, _ = self._tree.query(queries, workers=query_workers())
            return d
        sq = (
            np.einsum("ij,ij->i", queries, queries)[:, None]
            - 2.0 * (queries @ self.points.T)
            + self.sq_norms[None, :]
        )
        idx = np.argmin(sq, axis=1)
        best = sq[np.arange(len(queries)), idx]
        small = best < 1e-9
        if np.any(small):
            diff = queries[small] - self.points[idx[small]]
            best[small] = np.einsum("ij,ij->i", diff, diff)
        return np.sqrt(np.maximum(best, 0.0))

    def distances_argmin(self, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self._tree is not None:
            return self._tree.query(queries, workers=query_workers())
        sq = (
            np.einsum("ij,ij->i", queries, queries)[:, None]
            - 2.0 * (queries @ self.points.T)
            + self.sq_norms[None, :]
        )
        idx = np.argmin(sq, axis=1)
        best = sq[np.arange(len(queries)), idx]
        small = best < 1e-9
        if np.any(small):
            diff = queries[small] - self.points[idx[small]]
            best[small] = np.einsum("ij,ij->i", diff, diff)
        return np.sqrt(np.maximum(best, 0.0)), idx


class Evaluator:
    """Vectorized residual engine bound to one (X, Y) instance.

    mode selects the active residual families:

    * ``"joint"``   - sym_model + reg + sym_data (the full objective)
    * ``"register"``- reg only, matched against X alone (no plane)
    * ``"symmetry"``- sym_model only on X alone (single-set plane fitting)
    """

    def __init__(self, X, Y=None, trim: TrimConfig = TrimConfig(),
                 weights: Weights = Weights(), mode: str = "joint"):
        if mode not in ("joint", "register", "symmetry"):
            raise ValueError(f"unknown mode {mode!r}")
        self.mode = mode
        self.X = as_points(X)
        if mode == "symmetry":
            Y = self.X if Y is None else as_points(Y)
        if Y is None:
            raise ValueError("data set Y is required")
        self.Y = as_points(Y)
        if self.X.shape[1] != self.Y.shape[1]:
            raise ValueError("model and data dimensionality differ")
        self.dim = self.X.shape[1]
        self.trim = trim
        self.weights = weights
        self._set_X = _StaticSet(self.X)
        self._set_Y = _StaticSet(self.Y)
        self.x_norms = self._set_X.norms
        self.y_norms = self._set_Y.norms
        self.k_model = trim.kept(len(self.X))
        self.k_data = trim.kept(len(self.Y))
        self.evaluations = 0

    # -- residual families ------------------------------------------------

    def residuals(self, r: float, t: np.ndarray, alpha: float, d: float):
        """Raw residual arrays (sym_model, reg, sym_data) plus reg match tags.

        Inactive families come back as empty arrays.
        """
        self.evaluations += 1
        dim = self.dim
        empty = np.empty(0)
        e_s = e_r = e_sd = empty
        reg_from_reflected = np.empty(0, dtype=bool)

        if self.mode in ("joint", "symmetry"):
            n = normal_vector(alpha, dim)
            s = self.X @ n + d
            x_ref = self.X - 2.0 * s[:, None] * n
            d_self = self._set_X.distances(x_ref)
            if self.mode == "joint":
                R = rotation_matrix(r, dim)
                d_aligned = self._set_Y.distances((x_ref - t) @ R)
                e_s = np.minimum(d_self, d_aligned)
            else:
                e_s = d_self

        if self.mode in ("joint", "register"):
            R = rotation_matrix(r, dim)
            q = self.Y @ R.T + t
            d_x = self._set_X.distances(q)
            if self.mode == "joint":
                n = normal_vector(alpha, dim)
                sq = q @ n + d
                d_xs = self._set_X.distances(q - 2.0 * sq[:, None] * n)
                reg_from_reflected = d_xs < d_x  # ties go to X
                dist = np.where(reg_from_reflected, d_xs, d_x)
                wsel = np.where(reg_from_reflected, self.weights.w_reflected,
                                self.weights.w_primary)
                e_r = wsel * dist
            else:
                reg_from_reflected = np.zeros(len(q), dtype=bool)
                e_r = self.weights.w_primary * d_x

        if self.mode == "joint":
            n = normal_vector(alpha, dim)
            n_hat = normal_vector(alpha - r, dim)
            d_hat = float(t @ n) + d
            sh = self.Y @ n_hat + d_hat
            y_ref = self.Y - 2.0 * sh[:, None] * n_hat
            d_y = self._set_Y.distances(y_ref)
            R = rotation_matrix(r, dim)
            d_xr = self._set_X.distances(y_ref @ R.T + t)
            e_sd = np.minimum(d_xr, d_y)

        return e_s, e_r, e_sd, reg_from_reflected

    def correspondences(self, r: float, t: np.ndarray, alpha: float, d: float):
        """Residuals plus NN match indices and origin flags, for freezing.

        Returns a dict keyed by family with entries
        ``(residuals, match_index, from_moving)`` where ``from_moving`` marks
        matches taken from the hypothesis-dependent half of the union
        (Y^r for sym_model, X^s for reg, X^r for sym_data); ``match_index``
        points into Y/X/X respectively for moving matches and X/X/Y otherwise.
        """
        self.evaluations += 1
        dim = self.dim
        out = {}

        if self.mode in ("joint", "symmetry"):
            n = normal_vector(alpha, dim)
            s = self.X @ n + d
            x_ref = self.X - 2.0 * s[:, None] * n
            d_self, i_self = self._set_X.distances_argmin(x_ref)
            if self.mode == "joint":
                R = rotation_matrix(r, dim)
                d_al, i_al = self._set_Y.distances_argmin((x_ref - t) @ R)
                from_moving = d_al < d_self
                res = np.where(from_moving, d_al, d_self)
                idx = np.where(from_moving, i_al, i_self)
            else:
                from_moving = np.zeros(len(self.X), dtype=bool)
                res, idx = d_self, i_self
            out["sym_model"] = (res, idx, from_moving)

        if self.mode in ("joint", "register"):
            R = rotation_matrix(r, dim)
            q = self.Y @ R.T + t
            d_x, i_x = self._set_X.distances_argmin(q)
            if self.mode == "joint":
                n = normal_vector(alpha, dim)
                sq = q @ n + d
                d_xs, i_xs = self._set_X.distances_argmin(q - 2.0 * sq[:, None] * n)
                from_moving = d_xs < d_x
                dist = np.where(from_moving, d_xs, d_x)
                idx = np.where(from_moving, i_xs, i_x)
            else:
                from_moving = np.zeros(len(self.Y), dtype=bool)
                dist, idx = d_x, i_x
            wsel = np.where(from_moving, self.weights.w_reflected, self.weights.w_primary)
            out["reg"] = (wsel * dist, idx, from_moving)

        if self.mode == "joint":
            n = normal_vector(alpha, dim)
            n_hat = normal_vector(alpha - r, dim)
            d_hat = float(t @ n) + d
            sh = self.Y @ n_hat + d_hat
            y_ref = self.Y - 2.0 * sh[:, None] * n_hat
            d_y, i_y = self._set_Y.distances_argmin(y_ref)
            R = rotation_matrix(r, dim)
            d_xr, i_xr = self._set_X.distances_argmin(y_ref @ R.T + t)
            from_moving = d_xr <= d_y  # X^r comes first in the union
            res = np.where(from_moving, d_xr, d_y)
            idx = np.where(from_moving, i_xr, i_y)
            out["sym_data"] = (res, idx, from_moving)

        return out

    def energy_from_residuals(self, e_s, e_r, e_sd) -> float:
        total = 0.0
        if e_s.size:
            total += _trimmed_sq_sum(e_s, self.k_model)
        if e_r.size:
            total += _trimmed_sq_sum(e_r, self.k_data)
        if e_sd.size:
            total += _trimmed_sq_sum(e_sd, self.k_data)
        return total

    def energy(self, r: float, t, alpha: float, d: float) -> float:
        t = np.asarray(t, dtype=np.float64)
        e_s, e_r, e_sd, _ = self.residuals(r, t, alpha, d)
        return self.energy_from_residuals(e_s, e_r, e_sd)

    def energy_of(self, h: Hypothesis) -> float:
        alpha, d = (h.plane.alpha, h.plane.d) if h.plane is not None else (0.0, 0.0)
        return self.energy(h.pose.r, h.pose.t, alpha, d)

    def breakdown(self, h: Hypothesis) -> ResidualBreakdown:
        alpha, d = (h.plane.alpha, h.plane.d) if h.plane is not None else (0.0, 0.0)
        e_s, e_r, e_sd, _ = self.residuals(h.pose.r, h.pose.t, alpha, d)
        masks: dict[str, np.ndarray] = {}
        total = 0.0
        for name, res in (("sym_model", e_s), ("reg", e_r), ("sym_data", e_sd)):
            if res.size:
                mask, ssq = trim(res, self.trim)
                masks[name] = mask
                total += ssq
        return ResidualBreakdown(sym_model=e_s, reg=e_r, sym_data=e_sd,
                                 kept_masks=masks, trimmed_energy=total)

    def hypothesis(self, r: float, t, alpha: float, d: float) -> Hypothesis:
        plane = None if self.mode == "register" else SymmetryPlane(alpha, d)
        return Hypothesis(Pose(r, np.asarray(t, dtype=np.float64)), plane)


def evaluate(h: Hypothesis, X, Y, cfg: TrimConfig = TrimConfig(),
             w: Weights = Weights()) -> ResidualBreakdown:
    """Full residual breakdown of the joint objective at a hypothesis."""
    if h.plane is None:
        raise ValueError("evaluate requires a hypothesis with a plane")
    ev = Evaluator(X, Y, cfg, w, mode="joint")
    if h.dim != ev.dim:
        raise ValueError("hypothesis dimensionality does not match the point sets")
    return ev.breakdown(h)

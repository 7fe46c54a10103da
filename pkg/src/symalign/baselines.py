"""Comparison baselines: registration-only BnB and RANSAC symmetry detection.

The registration-only baseline is the same nested BnB engine with both
symmetry terms removed from the objective (yaw-restricted, trimmed), so the
comparison against the joint solver isolates the contribution of the symmetry
terms with everything else held equal.  RANSAC symmetry detection hypothesizes
the perpendicular bisector plane of random point pairs, constrained to the
horizontal-normal family, and refines the best hypothesis by a least-squares
fit over its inliers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .bnb import SolveConfig, SolveResult, solve
from .geometry import SymmetryPlane, as_points, normal_derivative, normal_vector

__all__ = [
    "RansacConfig",
    "RansacDetection",
    "register_only",
    "ransac_symmetry",
    "ransac_symmetry_detailed",
]


@dataclass(frozen=True)
class RansacConfig:
    iterations: int = 5000
    inlier_threshold: float = 0.02
    min_inlier_fraction: float = 0.3

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.inlier_threshold <= 0:
            raise ValueError("inlier_threshold must be positive")


@dataclass
class RansacDetection:
    plane: SymmetryPlane
    inlier_count: int
    inlier_fraction: float
    inlier_mask: np.ndarray
    meets_min_inliers: bool


def register_only(X, Y, cfg: SolveConfig = SolveConfig()) -> SolveResult:
    """Globally optimal trimmed registration over (r, t) only; no plane."""
    return solve(X, Y, cfg, mode="register")


def _count_inliers(P: np.ndarray, tree: cKDTree, alpha: float, d: float,
                   threshold: float) -> tuple[int, np.ndarray, np.ndarray]:
    n = normal_vector(alpha, P.shape[1])
    s = P @ n + d
    reflected = P - 2.0 * s[:, None] * n
    dists, idx = tree.query(reflected)
    mask = dists <= threshold
    return int(mask.sum()), mask, idx


def _refine_plane(P: np.ndarray, alpha: float, d: float, matches: np.ndarray,
                  mask: np.ndarray) -> tuple[float, float]:
    """Least-squares fit of (alpha, d) over frozen inlier correspondences."""
    src = P[mask]
    tgt = P[matches[mask]]
    dim = P.shape[1]
    for _ in range(5):
        n = normal_vector(alpha, dim)
        npr = normal_derivative(alpha, dim)
        s = src @ n + d
        res = src - 2.0 * s[:, None] * n - tgt
        a = src @ npr
        J_alpha = -2.0 * (a[:, None] * n + s[:, None] * npr)
        J_d = np.broadcast_to(-2.0 * n, src.shape)
        J = np.stack([J_alpha.ravel(), J_d.ravel()], axis=1)
        g = J.T @ res.ravel()
        H = J.T @ J + 1e-12 * np.eye(2)
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            break
        alpha += float(step[0])
        d += float(step[1])
        if np.abs(step).max() < 1e-12:
            break
    return alpha, d


def ransac_symmetry_detailed(P, cfg: RansacConfig = RansacConfig(),
                             seed: int = 0) -> RansacDetection:
    """Best symmetry plane by inlier count over point-pair bisector hypotheses.

    A point is an inlier when its reflection lies within the threshold of some
    point of P (exact NN).  Ties in inlier count keep the earlier iteration.
    """
    P = as_points(P)
    if len(P) < 2:
        raise ValueError("need at least 2 points")
    dim = P.shape[1]
    tree = cKDTree(P)
    rng = np.random.default_rng(seed)

    best_count = -1
    best_params = None
    pairs_i = rng.integers(0, len(P), size=cfg.iterations)
    pairs_j = rng.integers(0, len(P) - 1, size=cfg.iterations)
    pairs_j = np.where(pairs_j >= pairs_i, pairs_j + 1, pairs_j)

    for i, j in zip(pairs_i, pairs_j):
        axis = P[j] - P[i]
        horiz = axis[:2]
        norm = float(np.linalg.norm(horiz))
        if norm < 1e-12:
            continue  # coincident points or vertical pair: no horizontal normal
        alpha = math.atan2(horiz[1], horiz[0])
        n = normal_vector(alpha, dim)
        mid = 0.5 * (P[i] + P[j])
        d = -float(mid @ n)
        count, _, _ = _count_inliers(P, tree, alpha, d, cfg.inlier_threshold)
        if count > best_count:
            best_count = count
            best_params = (alpha, d)

    if best_params is None:
        raise ValueError("all sampled pairs were degenerate")

    alpha, d = best_params
    _, mask, idx = _count_inliers(P, tree, alpha, d, cfg.inlier_threshold)
    if mask.any():
        alpha, d = _refine_plane(P, alpha, d, idx, mask)
    count, mask, _ = _count_inliers(P, tree, alpha, d, cfg.inlier_threshold)
    fraction = count / len(P)
    return RansacDetection(plane=SymmetryPlane(alpha, d), inlier_count=count,
                           inlier_fraction=fraction, inlier_mask=mask,
                           meets_min_inliers=fraction >= cfg.min_inlier_fraction)


def ransac_symmetry(P, cfg: RansacConfig = RansacConfig(), seed: int = 0) -> SymmetryPlane:
    """RANSAC plane detection returning just the refined plane."""
    return ransac_symmetry_detailed(P, cfg, seed).plane

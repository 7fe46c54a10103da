"""Exact nearest-neighbour queries over static point collections.

The index is a thin wrapper around a k-d tree that adds per-point provenance
tags (which source set a point came from when indexing unions such as
X + reflected X) and a deterministic tie rule: among equidistant points the
one with the lowest insertion index wins.  Exactness matters: the
branch-and-bound lower bounds assume the true nearest neighbour, so an
approximate index could corrupt pruning.
"""

from __future__ import annotations

import os
from typing import Hashable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .geometry import as_points

__all__ = ["NeighborIndex", "build"]


def query_workers() -> int:
    """Worker count for batched tree queries (SYMALIGN_THREADS, default 1)."""
    try:
        return max(1, int(os.environ.get("SYMALIGN_THREADS", "1")))
    except ValueError:
        return 1


class NeighborIndex:
    """Immutable exact nearest-neighbour index with provenance tags."""

    def __init__(self, points, tags: Sequence[Hashable] | None = None):
        pts = as_points(points).copy()
        pts.flags.writeable = False
        if tags is None:
            tags = [None] * len(pts)
        if len(tags) != len(pts):
            raise ValueError("tags must match the number of points")
        self._points = pts
        self._tags = tuple(tags)
        self._tree = cKDTree(pts)

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def tags(self) -> tuple:
        return self._tags

    @property
    def size(self) -> int:
        return self._points.shape[0]

    @property
    def dim(self) -> int:
        return self._points.shape[1]

    def nearest(self, q) -> tuple[np.ndarray, float, Hashable]:
        """Exact nearest point to q, its distance, and its provenance tag.

        Ties are broken by lowest insertion index.
        """
        q = np.asarray(q, dtype=np.float64).reshape(-1)
        if q.shape[0] != self.dim:
            raise ValueError(f"query dimension {q.shape[0]} != index dimension {self.dim}")
        idx = self._nearest_index(q)
        d = float(np.linalg.norm(q - self._points[idx]))
        return self._points[idx], d, self._tags[idx]

    def _nearest_index(self, q: np.ndarray) -> int:
        if self.size == 1:
            return 0
        dists, idxs = self._tree.query(q, k=2)
        if dists[0] < dists[1]:
            return int(idxs[0])
        # exact tie on the two closest: collect everything at the minimum
        ball = self._tree.query_ball_point(q, r=float(dists[0]))
        return int(min(ball))

    def nearest_many(self, queries) -> tuple[np.ndarray, np.ndarray]:
        """Batched exact NN distances and indices (ties by tree order)."""
        qs = np.asarray(queries, dtype=np.float64)
        if qs.ndim != 2 or qs.shape[1] != self.dim:
            raise ValueError("queries must be an (n, dim) array")
        d, i = self._tree.query(qs, workers=query_workers())
        return d, i


def build(points, tags: Sequence[Hashable] | None = None) -> NeighborIndex:
    """Build an exact NN index over the given points (nonempty, uniform dim)."""
    return NeighborIndex(points, tags)

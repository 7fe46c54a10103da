"""Parametric symmetric shape generators for synthetic trials.

2D contours are closed curves with exactly one mirror line (the x-axis in the
generator frame); 3D models extrude such a contour along the vertical axis
with a varying cross-section scale, so the mirror plane is vertical as the
upright assumption requires.  Shapes deliberately avoid rotational
self-similarity and second mirror planes, which would make the recovered
plane ambiguous.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial import ConvexHull, cKDTree

__all__ = [
    "SHAPE_FAMILIES",
    "contour_2d",
    "surface_3d",
    "hidden_point_removal",
]

SHAPE_FAMILIES = ("blob", "pear", "house", "bottle", "arrow")


def _fourier_radii(theta: np.ndarray, rng: np.random.Generator, base: float) -> np.ndarray:
    # even cosine series => contour symmetric about the x-axis; amplitudes are
    # kept large so the contour is strongly lobed (near-circular shapes make
    # partial-arc registration ambiguous)
    rho = np.full_like(theta, base)
    rho += rng.uniform(0.25, 0.45) * base * np.cos(theta) * rng.choice([-1.0, 1.0])
    for k in (2, 3, 4):
        rho += rng.uniform(0.12, 0.3) * base / math.sqrt(k) * np.cos(k * theta) \
            * rng.choice([-1.0, 1.0])
    return np.clip(rho, 0.25 * base, 1.8 * base)


def _polyline_profile(name: str, rng: np.random.Generator) -> np.ndarray:
    """Upper half-profile from (x0, 0) to (x1, 0); mirrored to close the contour."""
    j = lambda s: rng.uniform(-s, s)  # noqa: E731  small per-shape jitter
    if name == "house":
        # gabled outline with an off-center chimney notch
        pts = [(-1.0, 0.0), (-1.0, 0.5 + j(0.08)), (-0.55, 0.62 + j(0.05)),
               (-0.45, 1.0 + j(0.1)), (-0.25, 1.0), (-0.3, 0.72),
               (0.0, 0.8 + j(0.1)), (1.0, 0.45 + j(0.08)), (1.0, 0.0)]
    elif name == "bottle":
        w = 0.55 + j(0.08)
        pts = [(-1.0, 0.0), (-1.0, w), (-0.45, w), (-0.3, 0.2 + j(0.04)),
               (0.35 + j(0.1), 0.18), (0.45, 0.42 + j(0.06)), (0.85, 0.46),
               (1.0, 0.2), (1.0, 0.0)]
    elif name == "arrow":
        pts = [(-1.0, 0.0), (-0.45 + j(0.1), 0.55 + j(0.1)), (-0.25, 0.18),
               (0.3 + j(0.08), 0.2), (0.35, 0.7 + j(0.1)), (0.6, 0.68),
               (1.0, 0.0)]
    else:
        raise ValueError(f"unknown profile {name!r}")
    return np.array(pts)


def _sample_open_arclength(vertices: np.ndarray, n: int) -> np.ndarray:
    """n points by arclength along an open polyline, offset off the endpoints."""
    seg = np.diff(vertices, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = cum[-1]
    targets = (np.arange(n) + 0.5) * total / n
    idx = np.searchsorted(cum, targets, side="right") - 1
    idx = np.clip(idx, 0, len(seg) - 1)
    frac = (targets - cum[idx]) / np.maximum(seg_len[idx], 1e-300)
    return vertices[idx] + frac[:, None] * seg[idx]


def contour_2d(family: str, rng: np.random.Generator, n_points: int,
               radius: float = 0.33) -> np.ndarray:
    """Closed symmetric contour of n_points, mirror line = x-axis.

    The upper half is sampled and mirrored, so the returned point SET is
    exactly symmetric (no sample sits on the axis itself).
    """
    half = max(4, n_points // 2)
    if family in ("blob", "pear"):
        theta = (np.arange(half) + 0.5) * math.pi / half  # (0, pi)
        rho = _fourier_radii(theta, rng, base=1.0)
        if family == "pear":
            rho = rho * (1.0 + 0.45 * np.cos(theta))
        upper = np.column_stack([rho * np.cos(theta), rho * np.sin(theta)])
        upper[:, 0] *= rng.uniform(1.25, 1.8)  # anisotropic stretch, mirror-safe
    elif family in ("house", "bottle", "arrow"):
        upper = _sample_open_arclength(_polyline_profile(family, rng), half)
    else:
        raise ValueError(f"unknown shape family {family!r}")
    lower = upper[::-1].copy()
    lower[:, 1] *= -1.0
    pts = np.vstack([upper, lower])
    pts[:, 0] -= pts[:, 0].mean()  # recenter along the mirror line only
    return pts * (radius / np.abs(pts).max())


def surface_3d(family: str, rng: np.random.Generator, n_points: int,
               radius: float = 0.3, half_height: float = 0.38) -> np.ndarray:
    """Surface samples of a tapered extrusion of a symmetric contour (plus lid)."""
    n_side = int(n_points * 0.85)
    n_lid = n_points - n_side
    rows = max(8, int(math.sqrt(n_side / 2)))
    per_row = max(8, n_side // rows)
    contour = contour_2d(family, rng, per_row, radius=radius)
    z_levels = np.linspace(-half_height, half_height, rows)
    a = rng.uniform(-0.35, 0.35)
    b = rng.uniform(-0.5, 0.2)
    pts = []
    for z in z_levels:
        s = 1.0 + a * (z / half_height) + b * (z / half_height) ** 2
        s = max(0.45, min(1.35, s))
        layer = np.column_stack([contour * s, np.full(len(contour), z)])
        pts.append(layer)
    # lid: scaled-down rings of the top cross-section
    top_s = max(0.45, min(1.35, 1.0 + a + b))
    for frac in np.linspace(0.25, 0.9, max(2, n_lid // per_row)):
        ring = np.column_stack([contour * (top_s * frac),
                                np.full(len(contour), half_height)])
        pts.append(ring)
    return np.vstack(pts)


def hidden_point_removal(points: np.ndarray, viewpoint: np.ndarray,
                         param: float = 2.0) -> np.ndarray:
    """Indices of points visible from the viewpoint (spherical-flip operator).

    Points are flipped outward on a sphere of radius ``param * max range``
    around the viewpoint; the visible set is the convex hull of the flipped
    cloud plus the viewpoint itself.
    """
    rel = points - viewpoint
    norms = np.linalg.norm(rel, axis=1)
    if np.any(norms < 1e-12):
        raise ValueError("viewpoint coincides with a point")
    R = norms.max() * param
    flipped = rel + 2.0 * (R - norms)[:, None] * rel / norms[:, None]
    cloud = np.vstack([flipped, np.zeros(points.shape[1])])
    hull = ConvexHull(cloud)
    visible = np.array(sorted(set(hull.vertices) - {len(points)}), dtype=int)
    if visible.size == 0:
        raise ValueError("degenerate view: no visible points")
    return visible


def mutual_overlap(A: np.ndarray, B: np.ndarray, threshold: float = 0.02) -> float:
    """Fraction of the smaller set with a mutual NN within threshold."""
    tree_a, tree_b = cKDTree(A), cKDTree(B)
    d_ab, i_ab = tree_b.query(A)
    _, i_ba = tree_a.query(B)
    mutual = (i_ba[i_ab] == np.arange(len(A))) & (d_ab <= threshold)
    return float(np.sum(mutual)) / min(len(A), len(B))

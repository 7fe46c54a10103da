"""Points, rigid poses, symmetry planes, and the reflection identities.

Conventions used throughout the package:

* Point sets are ``(n, dim)`` float64 arrays with ``dim`` in {2, 3} and
  coordinates normalized to [-1, 1].
* A pose is a rotation angle ``r`` plus a translation.  In 2D the rotation is
  planar; in 3D it is a yaw about the third (vertical) axis, so inputs are
  assumed pre-leveled.
* A symmetry plane is stored as ``(alpha, d)`` where the unit normal is
  ``[cos(alpha), sin(alpha)]`` (a trailing zero in 3D) and points on the plane
  satisfy ``x.n + d = 0``.  The pair ``(n, d)`` and ``(-n, -d)`` describe the
  same plane; the canonical form keeps ``alpha`` in [-pi/2, pi/2].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PointSet",
    "Pose",
    "SymmetryPlane",
    "ParamInterval",
    "as_points",
    "wrap_angle",
    "canonical_plane_params",
    "rotation_matrix",
    "rotation_matrix_derivative",
    "normal_vector",
    "normal_derivative",
    "apply_pose",
    "reflect_point",
    "transform_plane",
]


def as_points(points) -> np.ndarray:
    """Coerce input to a validated (n, dim) float64 array."""
    if isinstance(points, PointSet):
        return points.points
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] not in (2, 3):
        raise ValueError(f"expected an (n, 2) or (n, 3) array, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise ValueError("point set is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point set contains non-finite coordinates")
    return arr


def wrap_angle(r: float) -> float:
    """Wrap an angle into [-pi, pi]."""
    r = math.remainder(float(r), 2.0 * math.pi)
    # remainder() returns values in [-pi, pi]; pin the open edge for stability
    if r == -math.pi:
        r = math.pi
    return r


def canonical_plane_params(alpha: float, d: float) -> tuple[float, float]:
    """Wrap alpha into [-pi/2, pi/2], flipping d via the (n, d) ~ (-n, -d) ambiguity."""
    alpha = wrap_angle(alpha)
    if alpha > math.pi / 2:
        return alpha - math.pi, -float(d)
    if alpha <= -math.pi / 2:
        return alpha + math.pi, -float(d)
    return alpha, float(d)


def rotation_matrix(r: float, dim: int) -> np.ndarray:
    """Planar rotation (2D) or yaw about the vertical axis (3D)."""
    c, s = math.cos(r), math.sin(r)
    if dim == 2:
        return np.array([[c, -s], [s, c]])
    if dim == 3:
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    raise ValueError(f"unsupported dimension {dim}")


def rotation_matrix_derivative(r: float, dim: int) -> np.ndarray:
    """d/dr of rotation_matrix(r, dim)."""
    c, s = math.cos(r), math.sin(r)
    if dim == 2:
        return np.array([[-s, -c], [c, -s]])
    if dim == 3:
        return np.array([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]])
    raise ValueError(f"unsupported dimension {dim}")


def normal_vector(alpha: float, dim: int) -> np.ndarray:
    """Unit plane normal for angle alpha (horizontal in 3D)."""
    c, s = math.cos(alpha), math.sin(alpha)
    if dim == 2:
        return np.array([c, s])
    if dim == 3:
        return np.array([c, s, 0.0])
    raise ValueError(f"unsupported dimension {dim}")


def normal_derivative(alpha: float, dim: int) -> np.ndarray:
    """d/dalpha of normal_vector(alpha, dim)."""
    c, s = math.cos(alpha), math.sin(alpha)
    if dim == 2:
        return np.array([-s, c])
    if dim == 3:
        return np.array([-s, c, 0.0])
    raise ValueError(f"unsupported dimension {dim}")


@dataclass(frozen=True)
class PointSet:
    """An ordered collection of 2D or 3D points."""

    points: np.ndarray

    def __post_init__(self):
        arr = as_points(self.points)
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "points", arr)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def __iter__(self):
        return iter(self.points)


@dataclass(frozen=True)
class Pose:
    """Rigid motion y -> R(r) y + t, with r a planar (2D) or yaw (3D) angle."""

    r: float
    t: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.float64).reshape(-1)
        if t.shape[0] not in (2, 3):
            raise ValueError(f"translation must have length 2 or 3, got {t.shape[0]}")
        t.flags.writeable = False
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "r", wrap_angle(self.r))

    @property
    def dim(self) -> int:
        return self.t.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        return rotation_matrix(self.r, self.dim)

    @staticmethod
    def identity(dim: int) -> "Pose":
        return Pose(0.0, np.zeros(dim))

    def apply(self, points) -> np.ndarray:
        return apply_pose(self, points)

    def inverse(self) -> "Pose":
        Rt = rotation_matrix(-self.r, self.dim)
        return Pose(-self.r, -(Rt @ self.t))


@dataclass(frozen=True)
class SymmetryPlane:
    """Symmetry plane with horizontal unit normal angle alpha and depth d."""

    alpha: float
    d: float

    def __post_init__(self):
        alpha, d = canonical_plane_params(self.alpha, self.d)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "d", d)

    def normal(self, dim: int) -> np.ndarray:
        return normal_vector(self.alpha, dim)

    def reflect(self, points) -> np.ndarray:
        return reflect_point(self, points)


@dataclass(frozen=True)
class ParamInterval:
    """Axis-aligned box over search parameters, as center plus half-widths.

    Outer intervals cover (r, alpha); inner intervals cover (t_1..t_dim, d).
    A zero half-width pins that parameter (used both for converged boxes and
    for deactivating parameters in reduced solver modes).
    """

    center: np.ndarray
    half_width: np.ndarray
    layer: str  # "outer" or "inner"

    def __post_init__(self):
        c = np.asarray(self.center, dtype=np.float64).reshape(-1)
        h = np.asarray(self.half_width, dtype=np.float64).reshape(-1)
        if c.shape != h.shape:
            raise ValueError("center and half_width must have matching shapes")
        if np.any(h < 0):
            raise ValueError("half_width must be nonnegative")
        if self.layer not in ("outer", "inner"):
            raise ValueError(f"unknown layer tag {self.layer!r}")
        c.flags.writeable = False
        h.flags.writeable = False
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "half_width", h)

    @property
    def lo(self) -> np.ndarray:
        return self.center - self.half_width

    @property
    def hi(self) -> np.ndarray:
        return self.center + self.half_width

    def contains(self, values: np.ndarray, atol: float = 0.0) -> bool:
        v = np.asarray(values, dtype=np.float64).reshape(-1)
        return bool(np.all(v >= self.lo - atol) and np.all(v <= self.hi + atol))


def _check_dims(dim_a: int, dim_b: int):
    if dim_a != dim_b:
        raise ValueError(f"dimensionality mismatch: {dim_a} vs {dim_b}")


def apply_pose(pose: Pose, x) -> np.ndarray:
    """Map point(s) x through R(r) x + t."""
    pts = np.asarray(x, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    _check_dims(pts.shape[1], pose.dim)
    out = pts @ pose.matrix.T + pose.t
    return out[0] if single else out


def reflect_point(plane: SymmetryPlane, x) -> np.ndarray:
    """Reflect point(s) x across the plane: x - 2 n (x.n + d)."""
    pts = np.asarray(x, dtype=np.float64)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    n = plane.normal(pts.shape[1])
    s = pts @ n + plane.d
    out = pts - 2.0 * s[:, None] * n
    return out[0] if single else out


def transform_plane(pose: Pose, plane: SymmetryPlane) -> SymmetryPlane:
    """Express a plane given in the transformed frame back in the source frame.

    If (alpha, d) is the symmetry plane of the aligned points R y + t, the
    original points y are symmetric about (alpha - r, t.n + d).
    """
    n = plane.normal(pose.dim)
    d_hat = float(pose.t @ n + plane.d)
    return SymmetryPlane(plane.alpha - pose.r, d_hat)

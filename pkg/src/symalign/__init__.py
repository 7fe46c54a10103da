"""Symmetry-aware globally optimal point-set registration.

Registers two partially overlapping point sets of a symmetric object by
jointly optimizing the rigid alignment (planar / yaw rotation plus
translation) and the symmetry-plane parameters (normal angle, depth) with a
nested branch-and-bound search, trimmed residuals, and local ICP refinement.
"""

from .baselines import RansacConfig, ransac_symmetry, ransac_symmetry_detailed, register_only
from .bnb import BnBNode, SolveConfig, SolveResult, SolveStats, default_tau, inner_solve, solve, subdivide
from .bounds import BoundPair, UncertaintyRadii, interval_bounds, lower_reg, lower_sym_data, lower_sym_model, radii, upper_energy
from .experiments import (
    GroundTruth,
    NormalizationRecord,
    TrialResult,
    TrialSpec,
    batch,
    make_2d_trial,
    make_3d_trial,
    make_trial,
    normalize,
    normalize_pair,
    rows_to_csv,
    score,
    summarize,
)
from .geometry import (
    ParamInterval,
    PointSet,
    Pose,
    SymmetryPlane,
    apply_pose,
    reflect_point,
    transform_plane,
)
from .io import load_points, save_points
from .nnindex import NeighborIndex, build
from .objective import (
    Evaluator,
    Hypothesis,
    ResidualBreakdown,
    TrimConfig,
    Weights,
    evaluate,
    residual_reg,
    residual_sym_data,
    residual_sym_model,
    trim,
)
from .refine import IcpConfig, refine

__version__ = "0.1.0"

__all__ = [
    "BnBNode",
    "BoundPair",
    "Evaluator",
    "GroundTruth",
    "Hypothesis",
    "IcpConfig",
    "NeighborIndex",
    "NormalizationRecord",
    "ParamInterval",
    "PointSet",
    "Pose",
    "RansacConfig",
    "ResidualBreakdown",
    "SolveConfig",
    "SolveResult",
    "SolveStats",
    "SymmetryPlane",
    "TrialResult",
    "TrialSpec",
    "TrimConfig",
    "UncertaintyRadii",
    "Weights",
    "apply_pose",
    "batch",
    "build",
    "default_tau",
    "evaluate",
    "inner_solve",
    "interval_bounds",
    "load_points",
    "lower_reg",
    "lower_sym_data",
    "lower_sym_model",
    "make_2d_trial",
    "make_3d_trial",
    "make_trial",
    "normalize",
    "normalize_pair",
    "radii",
    "ransac_symmetry",
    "ransac_symmetry_detailed",
    "reflect_point",
    "refine",
    "register_only",
    "residual_reg",
    "residual_sym_data",
    "residual_sym_model",
    "rows_to_csv",
    "save_points",
    "score",
    "solve",
    "subdivide",
    "summarize",
    "transform_plane",
    "trim",
    "upper_energy",
]

"""Nested branch-and-bound search for the joint registration-symmetry optimum.

The outer layer runs best-first search over the angle box (r, alpha); bounding
an angle box first calls the inner layer, a best-first search over the
translation-depth box (t, d) with the angles pinned at the box center, and
then evaluates the outer box bounds at the inner optimum with zero
translation/depth uncertainty.  Whenever a box improves on the incumbent
energy, a local ICP run is started from its center to tighten the incumbent.
Boxes whose lower bound reaches the incumbent are pruned; the search stops
with a certificate once the incumbent is within ``tau`` of the smallest
outstanding lower bound.

Reduced modes reuse the same machinery by pinning parameters (zero
half-width): ``register`` searches (r, t) only and ``symmetry`` (alpha, d)
only.
"""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .bounds import bound_pair
from .geometry import ParamInterval
from .objective import Evaluator, Hypothesis, TrimConfig, Weights
from .refine import IcpConfig, refine_with

__all__ = [
    "SolveConfig",
    "SolveStats",
    "SolveResult",
    "BnBNode",
    "default_tau",
    "subdivide",
    "solve",
    "inner_solve",
]

# boxes thinner than this are treated as converged points and never split
_MIN_SPLIT_WIDTH = 1e-9


def default_tau(mode: str, n_model: int, n_data: int, trim_ratio: float = 0.7) -> float:
    """Convergence threshold: 0.001 * trim * (M + 2N), or N / M in reduced modes."""
    if mode == "joint":
        return 0.001 * trim_ratio * (n_model + 2 * n_data)
    if mode == "register":
        return 0.001 * trim_ratio * n_data
    if mode == "symmetry":
        return 0.001 * trim_ratio * n_model
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class SolveConfig:
    """Solver settings; tau=None derives the mode-specific default."""

    tau: float | None = None
    epsilon: float = 0.5
    trim: TrimConfig = TrimConfig()
    weights: Weights = Weights()
    icp: IcpConfig = IcpConfig()
    use_icp: bool = True
    max_outer_expansions: int = 1_000_000
    max_inner_expansions: int = 500_000
    trace: bool = False

    def __post_init__(self):
        if self.tau is not None and self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


@dataclass
class BnBNode:
    """Priority-queue entry: a box with its bounds and FIFO tie-break counter."""

    interval: ParamInterval
    lower: float
    upper: float
    insertion_seq: int
    depth: int = 0


@dataclass
class SolveStats:
    outer_expansions: int = 0
    inner_expansions: int = 0
    inner_calls: int = 0
    evaluations: int = 0
    outer_queue_peak: int = 0
    inner_queue_peak: int = 0
    icp_runs: int = 0
    icp_improvements: int = 0
    inner_cap_hits: int = 0
    wall_time: float = 0.0


@dataclass
class SolveResult:
    hypothesis: Hypothesis
    energy: float
    certified: bool
    tau: float
    mode: str
    stats: SolveStats = field(default_factory=SolveStats)
    trace: list | None = None

    @property
    def pose(self):
        return self.hypothesis.pose

    @property
    def plane(self):
        return self.hypothesis.plane


def subdivide(interval: ParamInterval) -> list[ParamInterval]:
    """Bisect every dimension with positive half-width; children tile the parent."""
    hw = interval.half_width
    active = np.flatnonzero(hw > _MIN_SPLIT_WIDTH)
    if active.size == 0:
        return []
    children = []
    for signs in itertools.product((-1.0, 1.0), repeat=active.size):
        c = interval.center.copy()
        h = hw.copy()
        for axis, sgn in zip(active, signs):
            h[axis] = hw[axis] * 0.5
            c[axis] = interval.center[axis] + sgn * h[axis]
        children.append(ParamInterval(c, h, interval.layer))
    return children


def _initial_intervals(mode: str, dim: int, epsilon: float) -> tuple[ParamInterval, ParamInterval]:
    outer_hw = {
        "joint": [math.pi, math.pi / 2],
        "register": [math.pi, 0.0],
        "symmetry": [0.0, math.pi / 2],
    }[mode]
    inner_hw = np.full(dim + 1, epsilon)
    if mode == "register":
        inner_hw[dim] = 0.0
    elif mode == "symmetry":
        inner_hw[:dim] = 0.0
    outer = ParamInterval(np.zeros(2), np.array(outer_hw), "outer")
    inner = ParamInterval(np.zeros(dim + 1), inner_hw, "inner")
    return outer, inner


class _NestedSearch:
    def __init__(self, ev: Evaluator, cfg: SolveConfig):
        self.ev = ev
        self.cfg = cfg
        self.tau = cfg.tau if cfg.tau is not None else default_tau(
            ev.mode, len(ev.X), len(ev.Y), cfg.trim.ratio)
        self.best_energy = math.inf
        self.best: Hypothesis | None = None
        self.stats = SolveStats()
        self.trace: list | None = [] if cfg.trace else None
        self._seq = itertools.count()

    # -- incumbent ---------------------------------------------------------

    def _offer(self, r: float, t: np.ndarray, alpha: float, d: float, energy: float):
        if energy < self.best_energy:
            self.best_energy = energy
            self.best = self.ev.hypothesis(r, t, alpha, d)

    # -- inner layer ---------------------------------------------------------

    def inner(self, r0: float, alpha0: float) -> tuple[np.ndarray, float, float]:
        """Best-first search over (t, d) at pinned angles.

        Returns (t*, d*) and the slice energy, tracking the best hypothesis
        evaluated during this call; the shared incumbent is updated on the fly
        and used for pruning and the stop test.
        """
        cfg = self.cfg
        ev = self.ev
        dim = ev.dim
        self.stats.inner_calls += 1
        outer_pt = ParamInterval(np.array([r0, alpha0]), np.zeros(2), "outer")
        _, root = _initial_intervals(ev.mode, dim, cfg.epsilon)

        pair = bound_pair(ev, outer_pt, root)
        slice_center = root.center
        slice_energy = pair.upper
        self._offer(r0, root.center[:dim], alpha0, root.center[dim], pair.upper)

        heap: list[tuple[float, int, BnBNode]] = []
        node = BnBNode(root, pair.lower, pair.upper, next(self._seq))
        heapq.heappush(heap, (node.lower, node.insertion_seq, node))
        expansions = 0

        while heap:
            self.stats.inner_queue_peak = max(self.stats.inner_queue_peak, len(heap))
            lower, _, node = heapq.heappop(heap)
            if self.best_energy - lower < self.tau:
                break
            if expansions >= cfg.max_inner_expansions:
                self.stats.inner_cap_hits += 1
                break
            children = subdivide(node.interval)
            if not children:
                continue
            expansions += 1
            self.stats.inner_expansions += 1
            for child in children:
                pair = bound_pair(ev, outer_pt, child)
                t_c, d_c = child.center[:dim], float(child.center[dim])
                if pair.upper < slice_energy:
                    slice_energy = pair.upper
                    slice_center = child.center
                self._offer(r0, t_c, alpha0, d_c, pair.upper)
                if pair.lower >= self.best_energy:
                    continue
                cnode = BnBNode(child, pair.lower, pair.upper, next(self._seq),
                                node.depth + 1)
                heapq.heappush(heap, (cnode.lower, cnode.insertion_seq, cnode))

        return slice_center, slice_energy, float(slice_center[dim])

    # -- outer layer ---------------------------------------------------------

    def _outer_bounds(self, box: ParamInterval) -> tuple[float, float, np.ndarray]:
        """Bound an angle box: inner-solve its center, then bound with (t*, d*)."""
        r0, alpha0 = float(box.center[0]), float(box.center[1])
        incumbent_before = self.best_energy
        slice_center, slice_energy, _ = self.inner(r0, alpha0)
        inner_pt = ParamInterval(slice_center, np.zeros_like(slice_center), "inner")
        pair = bound_pair(self.ev, box, inner_pt)

        if pair.upper < incumbent_before and self.cfg.use_icp:
            self._run_icp(r0, slice_center, alpha0)
        return pair.upper, pair.lower, slice_center

    def _run_icp(self, r0: float, inner_center: np.ndarray, alpha0: float):
        dim = self.ev.dim
        start = self.ev.hypothesis(r0, inner_center[:dim], alpha0,
                                   float(inner_center[dim]))
        self.stats.icp_runs += 1
        refined, energy = refine_with(self.ev, start, self.cfg.icp,
                                      box=self.cfg.epsilon)
        if energy < self.best_energy:
            self.stats.icp_improvements += 1
            self.best_energy = energy
            self.best = refined

    def run(self) -> SolveResult:
        cfg = self.cfg
        t0 = time.perf_counter()
        root, _ = _initial_intervals(self.ev.mode, self.ev.dim, cfg.epsilon)
        upper, lower, _ = self._outer_bounds(root)
        node = BnBNode(root, lower, upper, next(self._seq))
        heap: list[tuple[float, int, BnBNode]] = [(node.lower, node.insertion_seq, node)]
        certified = True

        while heap:
            self.stats.outer_queue_peak = max(self.stats.outer_queue_peak, len(heap))
            low, _, node = heapq.heappop(heap)
            if self.best_energy - low < self.tau:
                break
            if self.stats.outer_expansions >= cfg.max_outer_expansions:
                certified = False
                break
            children = subdivide(node.interval)
            if not children:
                continue
            self.stats.outer_expansions += 1
            for child in children:
                upper, lower, _ = self._outer_bounds(child)
                if self.trace is not None:
                    self.trace.append({
                        "layer": "outer",
                        "depth": node.depth + 1,
                        "center": child.center.tolist(),
                        "half_width": child.half_width.tolist(),
                        "upper": upper,
                        "lower": lower,
                        "incumbent": self.best_energy,
                    })
                if lower >= self.best_energy:
                    continue
                cnode = BnBNode(child, lower, upper, next(self._seq), node.depth + 1)
                heapq.heappush(heap, (cnode.lower, cnode.insertion_seq, cnode))

        # squeeze the incumbent's local minimum before reporting
        if self.best is not None and cfg.use_icp:
            polish = IcpConfig(max_iters=cfg.icp.max_iters,
                               rel_tol=min(cfg.icp.rel_tol, 1e-10),
                               damping=cfg.icp.damping)
            refined, energy = refine_with(self.ev, self.best, polish, box=cfg.epsilon)
            if energy < self.best_energy:
                self.best_energy = energy
                self.best = refined

        self.stats.wall_time = time.perf_counter() - t0
        self.stats.evaluations = self.ev.evaluations
        return SolveResult(hypothesis=self.best, energy=self.best_energy,
                           certified=certified, tau=self.tau, mode=self.ev.mode,
                           stats=self.stats, trace=self.trace)


def _check_normalized(points: np.ndarray, name: str):
    if np.max(np.abs(points)) > 1.0 + 1e-9:
        raise ValueError(f"{name} has coordinates outside [-1, 1]; "
                         "normalize the inputs first")


def solve(X, Y=None, cfg: SolveConfig = SolveConfig(), mode: str = "joint") -> SolveResult:
    """Globally optimize the trimmed objective over the mode's parameter domain.

    X, Y must be pre-normalized to [-1, 1].  ``mode="symmetry"`` fits a plane
    to the single set X (Y defaults to X with the pose pinned to identity).
    """
    ev = Evaluator(X, Y, cfg.trim, cfg.weights, mode=mode)
    _check_normalized(ev.X, "model set")
    _check_normalized(ev.Y, "data set")
    return _NestedSearch(ev, cfg).run()


def inner_solve(X, Y, r0: float, alpha0: float, cfg: SolveConfig = SolveConfig(),
                E_star: float = math.inf, mode: str = "joint") -> tuple[np.ndarray, float, float]:
    """Best (t, d) for pinned angles: returns (t*, d*, slice energy).

    E_star seeds the incumbent used for pruning and the stop test.
    """
    ev = Evaluator(X, Y, cfg.trim, cfg.weights, mode=mode)
    search = _NestedSearch(ev, cfg)
    search.best_energy = E_star
    center, energy, d_star = search.inner(r0, alpha0)
    return center[:ev.dim], d_star, energy

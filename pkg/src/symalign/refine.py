"""Joint local ICP over (r, t, alpha, d) via damped Gauss-Newton.

Each outer iteration freezes nearest-neighbour correspondences (index plus
origin set, so matches from Y^r / X^s / X^r keep their parameter dependence)
and the per-family trim masks, then takes one Levenberg-damped Gauss-Newton
step on the active parameters with analytic Jacobians.  A step is accepted
only if the frozen objective does not increase (damping is enlarged and the
step retried otherwise), which gives the classical trimmed-ICP monotonicity:
the returned energy never exceeds the starting energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    Pose,
    SymmetryPlane,
    canonical_plane_params,
    normal_derivative,
    normal_vector,
    rotation_matrix,
    rotation_matrix_derivative,
    wrap_angle,
)
from .objective import Evaluator, Hypothesis, TrimConfig, Weights, trim

__all__ = ["IcpConfig", "refine", "refine_with"]


@dataclass(frozen=True)
class IcpConfig:
    max_iters: int = 60
    rel_tol: float = 1e-6
    damping: float = 1e-3

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")


def _param_count(mode: str, dim: int) -> int:
    return {"joint": dim + 3, "register": dim + 1, "symmetry": 2}[mode]


def _pack(mode: str, h: Hypothesis, dim: int) -> np.ndarray:
    if mode == "joint":
        return np.concatenate(([h.pose.r], h.pose.t, [h.plane.alpha, h.plane.d]))
    if mode == "register":
        return np.concatenate(([h.pose.r], h.pose.t))
    return np.array([h.plane.alpha, h.plane.d])


def _unpack(mode: str, theta: np.ndarray, dim: int) -> tuple[float, np.ndarray, float, float]:
    """Return (r, t, alpha, d) with inactive parameters zeroed."""
    if mode == "joint":
        return float(theta[0]), theta[1:1 + dim], float(theta[1 + dim]), float(theta[2 + dim])
    if mode == "register":
        return float(theta[0]), theta[1:1 + dim], 0.0, 0.0
    return 0.0, np.zeros(dim), float(theta[0]), float(theta[1])


def _to_hypothesis(mode: str, theta: np.ndarray, dim: int) -> Hypothesis:
    r, t, alpha, d = _unpack(mode, theta, dim)
    plane = None if mode == "register" else SymmetryPlane(alpha, d)
    return Hypothesis(Pose(r, t), plane)


def _normalize(mode: str, theta: np.ndarray, dim: int, box: float | None) -> np.ndarray:
    """Wrap angles to canonical ranges and clamp t, d into [-box, box]."""
    theta = theta.copy()
    r, t, alpha, d = _unpack(mode, theta, dim)
    if mode in ("joint", "register"):
        theta[0] = wrap_angle(r)
        if box is not None:
            theta[1:1 + dim] = np.clip(t, -box, box)
    if mode in ("joint", "symmetry"):
        ia = 1 + dim if mode == "joint" else 0
        alpha, d = canonical_plane_params(alpha, d)
        if box is not None:
            d = min(max(d, -box), box)
        theta[ia], theta[ia + 1] = alpha, d
    return theta


class _Frozen:
    """Correspondences, trim masks, and frozen weights at one hypothesis."""

    def __init__(self, ev: Evaluator, theta: np.ndarray):
        r, t, alpha, d = _unpack(ev.mode, theta, ev.dim)
        corr = ev.correspondences(r, np.asarray(t), alpha, d)
        self.energy = 0.0
        self.rows = {}
        for family, (res, idx, moving) in corr.items():
            mask, ssq = trim(res, ev.trim)
            self.energy += ssq
            kept = np.flatnonzero(mask)
            self.rows[family] = (kept, idx[kept], moving[kept])


def _frozen_residuals(ev: Evaluator, theta: np.ndarray, fr: _Frozen) -> np.ndarray:
    """Stacked vector residuals of the frozen-correspondence objective."""
    dim = ev.dim
    r, t, alpha, d = _unpack(ev.mode, theta, dim)
    R = rotation_matrix(r, dim)
    n = normal_vector(alpha, dim)
    blocks = []

    if "sym_model" in fr.rows:
        kept, idx, moving = fr.rows["sym_model"]
        xs = ev.X[kept]
        s = xs @ n + d
        xhat = xs - 2.0 * s[:, None] * n
        target = np.where(moving[:, None], ev.Y[idx] @ R.T + t, ev.X[idx])
        blocks.append(xhat - target)

    if "reg" in fr.rows:
        kept, idx, moving = fr.rows["reg"]
        ys = ev.Y[kept]
        q = ys @ R.T + t
        tx = ev.X[idx]
        if ev.mode == "joint":
            sj = tx @ n + d
            tx = np.where(moving[:, None], tx - 2.0 * sj[:, None] * n, tx)
        w = np.where(moving, ev.weights.w_reflected, ev.weights.w_primary)
        blocks.append(w[:, None] * (q - tx))

    if "sym_data" in fr.rows:
        kept, idx, moving = fr.rows["sym_data"]
        ys = ev.Y[kept]
        n_hat = normal_vector(alpha - r, dim)
        d_hat = float(t @ n) + d
        sh = ys @ n_hat + d_hat
        yhat = ys - 2.0 * sh[:, None] * n_hat
        target = np.where(moving[:, None], (ev.X[idx] - t) @ R, ev.Y[idx])
        blocks.append(yhat - target)

    return np.concatenate([b.ravel() for b in blocks])


def _frozen_jacobian(ev: Evaluator, theta: np.ndarray, fr: _Frozen) -> np.ndarray:
    """Analytic Jacobian of the stacked frozen residuals wrt active parameters."""
    dim = ev.dim
    mode = ev.mode
    n_params = _param_count(mode, dim)
    r, t, alpha, d = _unpack(mode, theta, dim)
    R = rotation_matrix(r, dim)
    Rp = rotation_matrix_derivative(r, dim)
    n = normal_vector(alpha, dim)
    np_ = normal_derivative(alpha, dim)

    if mode == "joint":
        ir, it, ia, idd = 0, slice(1, 1 + dim), 1 + dim, 2 + dim
    elif mode == "register":
        ir, it, ia, idd = 0, slice(1, 1 + dim), None, None
    else:
        ir, it, ia, idd = None, None, 0, 1

    blocks = []

    if "sym_model" in fr.rows:
        kept, idx, moving = fr.rows["sym_model"]
        xs = ev.X[kept]
        s = xs @ n + d
        J = np.zeros((len(kept), dim, n_params))
        a = xs @ np_
        J[:, :, ia] = -2.0 * (a[:, None] * n + s[:, None] * np_)
        J[:, :, idd] = -2.0 * n
        if mode == "joint" and np.any(moving):
            mv = np.flatnonzero(moving)
            J[mv, :, ir] = -(ev.Y[idx[mv]] @ Rp.T)
            J[mv, :, it] -= np.eye(dim)
        blocks.append(J)

    if "reg" in fr.rows:
        kept, idx, moving = fr.rows["reg"]
        ys = ev.Y[kept]
        w = np.where(moving, ev.weights.w_reflected, ev.weights.w_primary)
        J = np.zeros((len(kept), dim, n_params))
        J[:, :, ir] = w[:, None] * (ys @ Rp.T)
        J[:, :, it] = w[:, None, None] * np.eye(dim)
        if mode == "joint" and np.any(moving):
            mv = np.flatnonzero(moving)
            xj = ev.X[idx[mv]]
            sj = xj @ n + d
            aj = xj @ np_
            J[mv, :, ia] = (w[mv, None]) * 2.0 * (aj[:, None] * n + sj[:, None] * np_)
            J[mv, :, idd] = (w[mv, None]) * 2.0 * n
        blocks.append(J)

    if "sym_data" in fr.rows:
        kept, idx, moving = fr.rows["sym_data"]
        ys = ev.Y[kept]
        n_hat = normal_vector(alpha - r, dim)
        nhp = normal_derivative(alpha - r, dim)
        d_hat = float(t @ n) + d
        sh = ys @ n_hat + d_hat
        b = ys @ nhp
        J = np.zeros((len(kept), dim, n_params))
        # d(yhat)/dr = 2 ((y.nhp) nh + sh nhp); moving target adds -(x - t) @ Rp
        J[:, :, ir] = 2.0 * (b[:, None] * n_hat + sh[:, None] * nhp)
        J[:, :, ia] = -2.0 * ((b + float(t @ np_))[:, None] * n_hat + sh[:, None] * nhp)
        J[:, :, idd] = -2.0 * n_hat
        # d(yhat_k)/dt_l = -2 nh_k n_l
        J[:, :, it] = -2.0 * n_hat[None, :, None] * n[None, None, :]
        if np.any(moving):
            mv = np.flatnonzero(moving)
            J[mv, :, ir] -= (ev.X[idx[mv]] - t) @ Rp
            # target_k = (R^T (x - t))_k has d/dt_l = -R_{l,k}; psi subtracts it
            J[mv, :, it] += R.T[None, :, :]
        blocks.append(J)

    return np.concatenate([b.reshape(-1, n_params) for b in blocks])


def refine_with(ev: Evaluator, start: Hypothesis, icp: IcpConfig = IcpConfig(),
                box: float | None = None) -> tuple[Hypothesis, float]:
    """Run the damped Gauss-Newton ICP loop on an existing evaluator."""
    dim = ev.dim
    theta = _normalize(ev.mode, _pack(ev.mode, start, dim), dim, box)
    best_theta = theta
    best_energy = math.inf
    prev_energy = None
    lam = icp.damping

    for _ in range(icp.max_iters):
        fr = _Frozen(ev, theta)
        if fr.energy < best_energy:
            best_energy, best_theta = fr.energy, theta
        if prev_energy is not None and prev_energy - fr.energy < icp.rel_tol * max(prev_energy, 1e-300):
            break
        prev_energy = fr.energy

        res = _frozen_residuals(ev, theta, fr)
        J = _frozen_jacobian(ev, theta, fr)
        f_cur = float(res @ res)
        JtJ = J.T @ J
        g = J.T @ res
        diag = np.diag(np.maximum(np.diag(JtJ), 1e-12))

        accepted = None
        for _attempt in range(8):
            try:
                delta = np.linalg.solve(JtJ + lam * diag, -g)
            except np.linalg.LinAlgError:
                delta, *_ = np.linalg.lstsq(JtJ + lam * diag, -g, rcond=None)
            cand = _normalize(ev.mode, theta + delta, dim, box)
            f_new = float(np.sum(_frozen_residuals(ev, cand, fr) ** 2))
            if f_new <= f_cur:
                accepted = cand
                lam = max(lam * 0.3, 1e-12)
                break
            lam *= 10.0
        if accepted is None:
            break
        theta = accepted

    final_energy = ev.energy(*_unpack(ev.mode, theta, dim))
    if final_energy < best_energy:
        best_energy, best_theta = final_energy, theta
    return _to_hypothesis(ev.mode, best_theta, dim), best_energy


def refine(start: Hypothesis, X, Y, cfg: TrimConfig = TrimConfig(),
           w: Weights = Weights(), icp: IcpConfig = IcpConfig(), *,
           mode: str = "joint", box: float | None = None) -> tuple[Hypothesis, float]:
    """Locally refine a hypothesis; the returned energy never exceeds the start's."""
    ev = Evaluator(X, Y, cfg, w, mode=mode)
    return refine_with(ev, start, icp, box=box)

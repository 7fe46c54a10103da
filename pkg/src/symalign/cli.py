"""Command-line front end.

Subcommands:

* ``register``        align a data cloud to a model cloud (joint symmetry-aware
                      search, register-only baseline, or register + RANSAC
                      plane detection)
* ``detect-symmetry`` fit a symmetry plane to a single cloud
* ``benchmark``       run the synthetic trial protocol and write CSV tables
* ``generate``        emit a synthetic trial (model, data, ground truth)

Inputs are normalized jointly to [-1, 1]; results are reported in the
normalized frame together with the normalization record and the denormalized
pose/plane.  Exit status is 0 iff a result record was fully written.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .baselines import RansacConfig, ransac_symmetry_detailed, register_only
from .bnb import SolveConfig, solve
from .experiments import (
    TrialSpec,
    batch,
    make_trial,
    normalize_pair,
    rows_to_csv,
    summarize,
)
from .geometry import Pose, SymmetryPlane, rotation_matrix
from .io import load_points, result_record, save_points, write_result
from .objective import Hypothesis, TrimConfig, Weights
from .refine import IcpConfig
from .shapes import SHAPE_FAMILIES


def _solver_config(args) -> SolveConfig:
    return SolveConfig(
        tau=args.tau,
        epsilon=args.epsilon,
        trim=TrimConfig(ratio=args.trim),
        weights=Weights(w_reflected=args.w_reflected),
        icp=IcpConfig(),
        trace=getattr(args, "trace", False),
    )


def _denormalize_pose(pose: Pose, record) -> dict:
    # x_w = x_n / s + c  =>  world transform: R unchanged, t_w = c - R c + t_n / s
    R = rotation_matrix(pose.r, pose.dim)
    c = record.offset
    t_w = c - R @ c + pose.t / record.scale
    return {"r": pose.r, "t": t_w.tolist()}


def _denormalize_plane(plane: SymmetryPlane, record, dim: int) -> dict:
    # x_n.n + d_n = 0  with  x_n = s (x_w - c)  =>  d_w = d_n / s + c.n
    n = plane.normal(dim)
    d_w = plane.d / record.scale + float(record.offset @ n)
    return {"alpha": plane.alpha, "d": d_w}


def _cmd_register(args) -> int:
    model = load_points(args.model)
    data = load_points(args.data)
    if args.dim != "auto" and int(args.dim) != model.dim:
        raise ValueError(f"--dim {args.dim} does not match input dimensionality {model.dim}")
    Xn, Yn, record = normalize_pair(model, data)
    cfg = _solver_config(args)

    if args.method == "joint":
        result = solve(Xn, Yn, cfg)
        plane = result.plane
    elif args.method == "register-only":
        result = register_only(Xn, Yn, cfg)
        plane = None
    elif args.method == "ransac-sym":
        result = register_only(Xn, Yn, cfg)
        fused = np.vstack([Xn, result.pose.apply(Yn)])
        plane = ransac_symmetry_detailed(fused, RansacConfig(), seed=args.seed).plane
        result.hypothesis = Hypothesis(result.pose, plane)
    else:
        raise ValueError(f"unknown method {args.method!r}")

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    extras = {"method": args.method,
              "pose_world": _denormalize_pose(result.pose, record)}
    if plane is not None:
        extras["plane_world"] = _denormalize_plane(plane, record, model.dim)
    rec = result_record(result, normalization=record, extras=extras)

    save_points(out / "data_aligned.xyz", result.pose.apply(Yn),
                header="data transformed into the model frame (normalized coords)")
    if plane is not None:
        save_points(out / "model_reflected.xyz", plane.reflect(Xn),
                    header="model reflected across the fitted plane (normalized coords)")
    if args.trace and result.trace is not None:
        with (out / "trace.jsonl").open("w") as fh:
            for entry in result.trace:
                fh.write(json.dumps(entry) + "\n")
    write_result(out / "result.json", rec)
    print(f"energy={result.energy:.6g} certified={result.certified} "
          f"pose=(r={result.pose.r:.6f}, t={result.pose.t.tolist()})")
    if plane is not None:
        print(f"plane=(alpha={plane.alpha:.6f}, d={plane.d:.6f})")
    print(f"wrote {out / 'result.json'}")
    return 0


def _cmd_detect_symmetry(args) -> int:
    from .experiments import normalize

    model = load_points(args.model)
    Xn, record = normalize(model.points)
    cfg = _solver_config(args)
    result = solve(Xn, None, cfg, mode="symmetry")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    extras = {"method": "detect-symmetry",
              "plane_world": _denormalize_plane(result.plane, record, model.dim)}
    rec = result_record(result, normalization=record, extras=extras)
    save_points(out / "model_reflected.xyz", result.plane.reflect(Xn),
                header="input reflected across the fitted plane (normalized coords)")
    write_result(out / "result.json", rec)
    print(f"plane=(alpha={result.plane.alpha:.6f}, d={result.plane.d:.6f}) "
          f"energy={result.energy:.6g} certified={result.certified}")
    print(f"wrote {out / 'result.json'}")
    return 0


def _cmd_benchmark(args) -> int:
    rng = np.random.default_rng(args.seed)
    lo, hi = args.overlap
    specs = []
    for i in range(args.trials):
        specs.append(TrialSpec(
            shape=SHAPE_FAMILIES[int(rng.integers(len(SHAPE_FAMILIES)))],
            overlap_ratio=float(rng.uniform(lo, hi)),
            outlier_fraction=args.outliers,
            seed=int(rng.integers(2**31 - 1)),
            dim=int(args.dim),
            n_points=args.n_points,
        ))
    methods = ["joint", "register-only"] if args.method == "both" else [args.method]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    all_rows = []
    for method in methods:
        rows = batch(specs, method=method, cfg=_solver_config(args))
        all_rows.extend(rows)
    (out / "trials.csv").write_text(rows_to_csv(all_rows))
    (out / "summary.csv").write_text(summarize(all_rows))
    print(summarize(all_rows))
    print(f"wrote {out / 'trials.csv'} and {out / 'summary.csv'}")
    return 0


def _cmd_generate(args) -> int:
    spec = TrialSpec(shape=args.shape, overlap_ratio=args.overlap,
                     outlier_fraction=args.outliers, seed=args.seed,
                     dim=int(args.dim), n_points=args.n_points)
    X, Y, truth = make_trial(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_points(out / "model.xyz", X, header=f"model set, shape={args.shape}")
    save_points(out / "data.xyz", Y, header=f"data set, shape={args.shape}")
    truth_rec = {
        "pose": {"r": truth.pose.r, "t": truth.pose.t.tolist()},
        "plane": {"alpha": truth.plane.alpha, "d": truth.plane.d},
        "overlap": truth.overlap,
        "outliers_model": truth.outliers_model.tolist(),
        "outliers_data": truth.outliers_data.tolist(),
        "spec": {"shape": spec.shape, "overlap_ratio": spec.overlap_ratio,
                 "outlier_fraction": spec.outlier_fraction, "seed": spec.seed,
                 "dim": spec.dim, "n_points": spec.n_points},
    }
    write_result(out / "truth.json", truth_rec)
    print(f"wrote {out / 'model.xyz'}, {out / 'data.xyz'}, {out / 'truth.json'}")
    return 0


def _add_solver_flags(p: argparse.ArgumentParser):
    p.add_argument("--tau", type=float, default=None,
                   help="convergence threshold (default: 0.001*trim*(M+2N) or mode equivalent)")
    p.add_argument("--epsilon", type=float, default=0.5,
                   help="translation/depth domain half-width")
    p.add_argument("--trim", type=float, default=0.7, help="trimming ratio")
    p.add_argument("--w-reflected", dest="w_reflected", type=float, default=1.0,
                   help="registration weight for matches from the reflected model")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="symalign_out")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="symalign",
                                 description="Symmetry-aware globally optimal point-set registration")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("register", help="align a data cloud to a model cloud")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=["joint", "register-only", "ransac-sym"],
                   default="joint")
    p.add_argument("--dim", choices=["2", "3", "auto"], default="auto")
    p.add_argument("--trace", action="store_true", help="write a per-expansion trace")
    _add_solver_flags(p)
    p.set_defaults(func=_cmd_register)

    p = sub.add_parser("detect-symmetry", help="fit a symmetry plane to one cloud")
    p.add_argument("--model", required=True)
    _add_solver_flags(p)
    p.set_defaults(func=_cmd_detect_symmetry)

    p = sub.add_parser("benchmark", help="synthetic trial protocol")
    p.add_argument("--dim", choices=["2", "3"], default="2")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--overlap", type=float, nargs=2, default=(0.3, 0.8),
                   metavar=("LO", "HI"))
    p.add_argument("--outliers", type=float, default=0.0)
    p.add_argument("--n-points", type=int, default=50)
    p.add_argument("--method", choices=["joint", "register-only", "ransac-sym", "both"],
                   default="both")
    _add_solver_flags(p)
    p.set_defaults(func=_cmd_benchmark)

    p = sub.add_parser("generate", help="emit one synthetic trial")
    p.add_argument("--dim", choices=["2", "3"], default="2")
    p.add_argument("--shape", choices=list(SHAPE_FAMILIES), default="blob")
    p.add_argument("--overlap", type=float, default=0.5)
    p.add_argument("--outliers", type=float, default=0.0)
    p.add_argument("--n-points", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="symalign_out")
    p.set_defaults(func=_cmd_generate)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())

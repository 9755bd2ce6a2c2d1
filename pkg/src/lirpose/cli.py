"""Command line front end: ``estimate``, ``simulate`` and ``evaluate``.

Exit codes are 0 on success, 2 for unreadable input or configuration and 3
when the estimator itself fails.  JSON output is written with sorted keys so
that re-runs with the same inputs and seed are byte-identical apart from the
``timing`` block.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .errors import DimensionMismatch, InputError, LirposeError, ParseError
from .geometry import RelativePose, rotation_angular_error
from .io import config_dict, load_experiment, load_intrinsics, load_matches, load_pose, sha256_file
from .lirp import lirp_solve
from .residuals import ligt_residuals, ppo_residuals
from .robust import GncConfig, RansacConfig, gnc_irls, gnc_ransac, refine_ligt
from .simlab import CSV_COLUMNS, Estimator, monte_carlo

REPORT_SCHEMA = "lirpose.report/1"
EVALUATION_SCHEMA = "lirpose.evaluation/1"
METRICS_SCHEMA = "lirpose.metrics/1"
EXIT_OK, EXIT_INPUT, EXIT_ESTIMATOR = 0, 2, 3
DEFAULT_MIN_MATCHES = 30


def _finite_or_none(v):
    v = float(v)
    return v if math.isfinite(v) else None


def dump_json(path, doc) -> None:
    text = json.dumps(doc, sort_keys=True, indent=2, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def _versions() -> dict:
    return {
        "lirpose": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def _error_block(exc) -> dict:
    block = {"type": type(exc).__name__, "message": str(exc)}
    if getattr(exc, "line", None) is not None:
        block["line"] = exc.line
    if getattr(exc, "field", None) is not None:
        block["field"] = exc.field
    return block


def run_method(method: Estimator, pairs, gnc: GncConfig, ransac: RansacConfig):
    """Returns ``(pose, inlier_mask, weights, diagnostics)``."""
    n = len(pairs)
    if method is Estimator.LIRP:
        pose, diag = lirp_solve(pairs)
        return pose, np.ones(n, dtype=bool), np.ones(n), {"d_min": _finite_or_none(diag.d_min)}
    if method in (Estimator.GNC_IRLS, Estimator.LIGT_REFINE):
        pose, state = gnc_irls(pairs, gnc)
        if method is Estimator.LIGT_REFINE:
            pose = refine_ligt(pose, pairs, state.weights)
        diag = {
            "iterations": state.iteration,
            "converged": state.converged,
            "sigma": _finite_or_none(state.sigma),
            "d_min": _finite_or_none(state.diagnostics.d_min) if state.diagnostics else None,
        }
        return pose, state.weights >= 0.5, state.weights, diag
    pose, inliers, info = gnc_ransac(pairs, ransac, gnc)
    mask = np.zeros(n, dtype=bool)
    mask[inliers] = True
    diag = {"n_inliers": info.n_inliers, "best_round": info.best_round, "d_min": _finite_or_none(info.d_min)}
    return pose, mask, mask.astype(float), diag


def cmd_estimate(args) -> int:
    method = Estimator(args.method)
    gnc = GncConfig(max_iterations=args.gnc_iters)
    ransac = RansacConfig(
        sample_size=args.ns, max_iterations=args.iters, inlier_threshold=args.theta, seed=args.seed
    )
    config = {
        "method": method.value,
        "min_matches": args.min_matches,
        "gnc": config_dict(gnc),
        "ransac": config_dict(ransac) if method is Estimator.GNC_RANSAC else None,
    }
    config_hash = hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()
    report = {
        "schema": REPORT_SCHEMA,
        "meta": {
            "seed": args.seed,
            "config": config,
            "config_hash": config_hash,
            "versions": _versions(),
            "inputs": {},
        },
        "status": "ok",
        "error": None,
        "pose": None,
        "pairs": None,
        "diagnostics": None,
        "timing": {},
    }
    code = EXIT_OK
    start = time.perf_counter()
    try:
        report["meta"]["inputs"]["matches_sha256"] = sha256_file(args.matches)
        K = None
        if args.intrinsics:
            report["meta"]["inputs"]["intrinsics_sha256"] = sha256_file(args.intrinsics)
            K = load_intrinsics(args.intrinsics)
        pairs = load_matches(args.matches, K, min_matches=args.min_matches)
        report["meta"]["inputs"]["n_matches"] = len(pairs)
        t0 = time.perf_counter()
        pose, mask, weights, diag = run_method(method, pairs, gnc, ransac)
        report["timing"]["estimate_s"] = time.perf_counter() - t0
    except (InputError, OSError) as exc:
        code = EXIT_INPUT
        report["status"], report["error"] = "error", _error_block(exc)
    except LirposeError as exc:
        code = EXIT_ESTIMATOR
        report["status"], report["error"] = "error", _error_block(exc)
    else:
        v_ligt = ligt_residuals(pose.R, pose.t, pairs.x, pairs.x_prime)
        v_ppo = ppo_residuals(pose.R, pose.t, pairs.x, pairs.x_prime)
        report["pose"] = {"R": [float(v) for v in pose.R.ravel()], "t": [float(v) for v in pose.t]}
        report["pairs"] = {
            "inlier": [bool(b) for b in mask],
            "weight": [float(w) for w in weights],
            "residual_ligt": [float(v) for v in v_ligt],
            "residual_ppo": [float(v) for v in v_ppo],
        }
        report["diagnostics"] = diag
        if args.residuals:
            write_residuals_csv(args.residuals, report["pairs"])
    report["timing"]["total_s"] = time.perf_counter() - start
    if code != EXIT_OK:
        print(f"error: {report['error']['type']}: {report['error']['message']}", file=sys.stderr)
    dump_json(args.out, report)
    return code


def write_residuals_csv(path, pairs_block) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "inlier", "weight", "residual_ligt", "residual_ppo"])
        for i, row in enumerate(
            zip(pairs_block["inlier"], pairs_block["weight"], pairs_block["residual_ligt"], pairs_block["residual_ppo"])
        ):
            w.writerow([i, int(row[0]), repr(row[1]), repr(row[2]), repr(row[3])])


def _csv_value(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_metrics_csv(path, summaries) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"#schema={METRICS_SCHEMA}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for s in summaries:
            w.writerow([_csv_value(s[c]) for c in CSV_COLUMNS])


def cmd_simulate(args) -> int:
    try:
        experiment = load_experiment(args.config)
    except (InputError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    progress = None
    if args.progress:
        total = len(experiment.cells) * experiment.n_trials

        def progress(i, j):
            done = i * experiment.n_trials + j + 1
            print(f"\r{done}/{total}", end="" if done < total else "\n", file=sys.stderr)

    table = monte_carlo(experiment, progress)
    write_metrics_csv(args.out, table.summaries())
    return EXIT_OK


def _load_report(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc.msg}", exc.lineno) from None
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: report must be a JSON object")
    return doc


def _report_pose(doc, path) -> RelativePose:
    pose = doc.get("pose")
    if not isinstance(pose, dict):
        raise DimensionMismatch(f"{path}: report carries no pose")
    R, t = pose.get("R"), pose.get("t")
    if not (isinstance(R, list) and len(R) == 9 and isinstance(t, list) and len(t) == 3):
        raise DimensionMismatch(f"{path}: pose needs 9 rotation and 3 translation values")
    return RelativePose(np.array(R, dtype=float).reshape(3, 3), np.array(t, dtype=float))


def evaluate(reports, truths) -> dict:
    """Rotation error per view pair plus their mean and median, in degrees."""
    if len(reports) != len(truths):
        raise DimensionMismatch(f"{len(reports)} reports but {len(truths)} ground-truth poses")
    rows = []
    for rp, tp in zip(reports, truths):
        est = _report_pose(_load_report(rp), rp)
        truth = load_pose(tp)
        rows.append({"report": str(rp), "truth": str(tp), "epsilon_deg": rotation_angular_error(truth.R, est.R)})
    eps = np.array([r["epsilon_deg"] for r in rows])
    return {
        "schema": EVALUATION_SCHEMA,
        "pairs": rows,
        "epsilon_mean_deg": float(eps.mean()) if len(eps) else None,
        "epsilon_med_deg": float(np.median(eps)) if len(eps) else None,
    }


def cmd_evaluate(args) -> int:
    try:
        doc = evaluate(args.report, args.truth)
    except (InputError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    dump_json(args.out, doc)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lirpose", description="Two-view relative pose estimation.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate the relative pose from a match file")
    est.add_argument("--matches", required=True)
    est.add_argument("--intrinsics", help="row-major 3x3 K, needed for PIXEL match files")
    est.add_argument("--method", required=True, choices=[e.value for e in Estimator])
    est.add_argument("--seed", type=int, default=0)
    est.add_argument("--theta", type=float, default=RansacConfig.inlier_threshold, help="RANSAC inlier threshold")
    est.add_argument("--ns", type=int, default=RansacConfig.sample_size, help="RANSAC sample size")
    est.add_argument("--iters", type=int, default=RansacConfig.max_iterations, help="RANSAC rounds")
    est.add_argument("--gnc-iters", type=int, default=GncConfig.max_iterations, help="GNC-IRLS iteration budget")
    est.add_argument("--min-matches", type=int, default=DEFAULT_MIN_MATCHES)
    est.add_argument("--out", required=True)
    est.add_argument("--residuals", help="optional per-pair CSV")
    est.set_defaults(func=cmd_estimate)

    sim = sub.add_parser("simulate", help="run a Monte Carlo experiment grid")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", required=True)
    sim.add_argument("--progress", action="store_true")
    sim.set_defaults(func=cmd_simulate)

    ev = sub.add_parser("evaluate", help="compare estimated rotations with ground truth")
    ev.add_argument("--report", required=True, action="append")
    ev.add_argument("--truth", required=True, action="append")
    ev.add_argument("--out", required=True)
    ev.set_defaults(func=cmd_evaluate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        # invalid option values rejected by the config dataclasses
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

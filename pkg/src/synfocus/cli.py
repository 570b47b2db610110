"""Command line interface: simulate, refine, variance-model, pose-error-curves.

Exit codes: 0 success, 2 usage or config problem, 3 I/O failure, 4 too few
usable images; `variance-model` additionally exits 1 when the Monte-Carlo
check misses its three-standard-error band. Every subcommand is
deterministic for a fixed config and seed; the only run-to-run difference
is the timings sidecar next to the report.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

import numpy as np

from .datafiles import (
    PoseRecord,
    RunReport,
    SimulationConfig,
    parse_config,
    read_manifest,
    read_pose_records,
    save_run_report,
    write_manifest,
    write_pose_records,
)
from .errors import ConfigError, SynfocusError, TooFewImages
from .geometry import CameraIntrinsics, PoseParams, compensating_translation, project_points
from .image_io import load_raster, preview_u8, save_raster, write_pgm
from .imaging import Roi
from .refine import PoseRefiner, SPACE_PRESETS, STRATEGY_KINDS
from .simulate import evaluate, perturb_poses, render_views
from .variance_model import (
    OcclusionStats,
    model_moments,
    var_integral,
    var_single,
    variance_standard_error,
)


def _parse_roi(raw: str) -> Roi:
    parts = raw.split(",")
    if len(parts) != 4:
        raise ConfigError(f"--roi expects x,y,w,h, got {raw!r}")
    try:
        x, y, w, h = (int(v) for v in parts)
        return Roi(x, y, w, h)
    except ValueError as exc:
        raise ConfigError(f"invalid --roi {raw!r}: {exc}") from exc


def cmd_simulate(args) -> int:
    t_start = time.perf_counter()
    config: SimulationConfig = parse_config(args.config)
    out = Path(args.outdir)
    (out / "images").mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    dataset = render_views(config.scene, config.capture, config.seed)
    render_s = time.perf_counter() - t0
    noisy = perturb_poses(dataset.poses, config.perturbation)

    image_paths = []
    for i, image in enumerate(dataset.images):
        rel = f"images/view_{i:03d}.pfm"
        save_raster(out / rel, image)
        image_paths.append(rel)
    save_raster(out / "reference.pfm", dataset.reference)

    true_records = [PoseRecord(rel, pose, i) for i, (rel, pose) in enumerate(zip(image_paths, dataset.poses))]
    noisy_records = [PoseRecord(rel, pose, i) for i, (rel, pose) in enumerate(zip(image_paths, noisy))]
    write_pose_records(out / "poses_true.txt", true_records)
    write_pose_records(out / "poses_noisy.txt", noisy_records)

    K = config.capture.intrinsics
    manifest = {
        "format": "synfocus-dataset/1",
        "images": image_paths,
        "poses_true": "poses_true.txt",
        "poses_noisy": "poses_noisy.txt",
        "reference": "reference.pfm",
        "intrinsics": {
            "focal_length_px": K.focal_length_px,
            "principal_point": list(K.principal_point),
            "image_size": list(K.image_size),
        },
        "altitude": config.capture.altitude,
        "seed": config.seed,
        "occluded_fractions": [float(v) for v in dataset.occluded_fractions],
        "config": config.echo,
    }
    write_manifest(out / "manifest.json", manifest)
    total_s = time.perf_counter() - t_start
    print(f"wrote {len(image_paths)} images to {out} (render {render_s:.2f}s, total {total_s:.2f}s)")
    return 0


def _load_dataset(dataset_dir: Path, which_poses: str):
    manifest = read_manifest(dataset_dir / "manifest.json")
    pose_file = manifest["poses_noisy"] if which_poses == "noisy" else manifest["poses_true"]
    records = read_pose_records(dataset_dir / pose_file, check_images=False)
    images, poses, names, failures = [], [], [], []
    for rec in records:
        try:
            images.append(load_raster(dataset_dir / rec.image))
            poses.append(rec.pose)
            names.append(rec.image)
        except (OSError, ValueError) as exc:
            failures.append((rec.image, str(exc)))
    k = manifest["intrinsics"]
    intrinsics = CameraIntrinsics(
        focal_length_px=float(k["focal_length_px"]),
        principal_point=tuple(float(v) for v in k["principal_point"]),
        image_size=tuple(int(v) for v in k["image_size"]),
    )
    return manifest, images, poses, names, intrinsics, failures


def cmd_refine(args) -> int:
    t_start = time.perf_counter()
    dataset_dir = Path(args.dataset)
    manifest, images, poses, names, intrinsics, load_failures = _load_dataset(
        dataset_dir, args.poses
    )
    if len(images) < 2:
        raise TooFewImages(f"only {len(images)} of {len(manifest['images'])} images loaded")
    roi = _parse_roi(args.roi) if args.roi else None

    refiner = PoseRefiner(
        intrinsics=intrinsics,
        space=args.space,
        strategy=args.strategy,
        patience=args.patience,
        plane_z=args.plane_z,
        auto_plane=args.auto_plane,
        z_range=(args.z_min, args.z_max),
        roi=roi,
        interpolation=args.interpolation,
        f_tolerance=args.f_tol,
        x_tolerance=args.x_tol,
        max_iterations=args.max_iterations,
        coverage_floor=args.coverage_floor,
    )
    t0 = time.perf_counter()
    refiner.fit(images, poses)
    refine_s = time.perf_counter() - t0
    result = refiner.result_

    out = Path(args.out) if args.out else dataset_dir / "refined"
    out.mkdir(parents=True, exist_ok=True)
    save_raster(out / "integral.pfm", refiner.integral_)
    write_pgm(out / "integral_preview.pgm", preview_u8(refiner.integral_))
    refined_records = [
        PoseRecord(name, pose, i) for i, (name, pose) in enumerate(zip(names, result.corrected_poses))
    ]
    write_pose_records(out / "poses_refined.txt", refined_records)

    metrics = None
    reference_file = dataset_dir / manifest.get("reference", "reference.pfm")
    truth_file = dataset_dir / manifest.get("poses_true", "poses_true.txt")
    if args.poses == "noisy" and reference_file.exists() and truth_file.exists():
        true_records = read_pose_records(truth_file, check_images=False)
        true_poses = [rec.pose for rec in true_records]
        if len(true_poses) == len(images):
            reference = load_raster(reference_file)
            if reference.shape == refiner.integral_.shape:
                metrics = evaluate(result, true_poses, reference, refiner.plane_, roi).to_dict()

    plane = refiner.plane_
    report = RunReport(
        config={
            "dataset": str(args.dataset),
            "poses": args.poses,
            "space": args.space,
            "strategy": args.strategy,
            "patience": args.patience,
            "roi": [roi.x, roi.y, roi.width, roi.height] if roi else None,
            "plane": {
                "anchor_point": list(plane.anchor_point),
                "unit_normal": list(plane.unit_normal),
                "raster_extent": list(plane.raster_extent),
                "raster_resolution": list(plane.raster_resolution),
            },
            "auto_plane": args.auto_plane,
            "interpolation": args.interpolation,
            "nelder_mead": {
                "f_tolerance": args.f_tol,
                "x_tolerance": args.x_tol,
                "max_iterations": args.max_iterations,
            },
        },
        objective_trace=[float(v) for v in result.objective_trace],
        n_stop=result.n_stop,
        included=list(result.included),
        optimized=list(result.optimized),
        order=list(result.order),
        parameter_evaluations=result.parameter_evaluations,
        baseline_parameter_evaluations=6 * max(len(images) - 1, 0),
        unrefined_objective=float(result.unrefined_objective),
        final_objective=float(result.final_objective),
        metrics=metrics,
        failures=[list(item) for item in load_failures + result.failures],
        timings={"refine": refine_s, "total": time.perf_counter() - t_start},
    )
    save_run_report(out / "report.json", report)
    gain = 100.0 * (result.final_objective / result.unrefined_objective - 1.0)
    print(
        f"integrated {result.n_stop}/{len(images)} images; objective "
        f"{result.unrefined_objective:.4g} -> {result.final_objective:.4g} ({gain:+.1f}%); "
        f"parameter evaluations {result.parameter_evaluations}"
    )
    print(f"outputs in {out}")
    return 0


def cmd_variance_model(args) -> int:
    if args.n < 1:
        raise ConfigError("N must be at least 1")
    if args.mc_pixels < 2:
        raise ConfigError("--mc-pixels must be at least 2")
    try:
        stats = OcclusionStats(args.d, args.mu_o, args.sigma2_o, args.mu_s, args.sigma2_s)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    vs = var_single(stats)
    vi = var_integral(stats, args.n)
    mm = model_moments(stats, args.n)
    mc, se = variance_standard_error(stats, args.n, args.mc_pixels, args.seed, args.workers)
    rows = [
        ("mean", mm.mean, mc.mean, ""),
        ("second_moment", mm.second_moment, mc.second_moment, ""),
        ("var_single", vs, "", ""),
        (f"var_integral(n={args.n})", vi, mc.variance, f"{se:.6g}"),
    ]
    print(f"{'quantity':<22}{'closed_form':>16}{'monte_carlo':>16}{'std_error':>12}")
    for name, closed, sampled, err in rows:
        sampled_s = f"{sampled:.8g}" if sampled != "" else "-"
        err_s = err if err else "-"
        print(f"{name:<22}{closed:>16.8g}{sampled_s:>16}{err_s:>12}")
    diff = abs(mc.variance - vi)
    ok = diff <= 3.0 * se
    print(f"agreement: {'PASS' if ok else 'FAIL'} (|diff| = {diff:.6g}, 3*SE = {3*se:.6g})")
    return 0 if ok else 1


def _error_curve_rows(K: CameraIntrinsics, t_z: float, ring_px: float = 100.0):
    pose = PoseParams(0.0, 0.0, t_z)
    center = np.array([[0.0, 0.0, 0.0]])
    r_world = ring_px * t_z / K.focal_length_px
    angles = np.arange(8) * (math.pi / 4.0)
    ring = np.column_stack([r_world * np.cos(angles), r_world * np.sin(angles), np.zeros(8)])

    def mean_error(pose_b, points):
        pix_a, da = project_points(K, pose, points)
        pix_b, db = project_points(K, pose_b, points)
        ok = (da > 0) & (db > 0)
        return float(np.mean(np.linalg.norm(pix_a[ok] - pix_b[ok], axis=1)))

    rows = []
    translations = np.linspace(-1.0, 1.0, 21)
    rotations_deg = np.linspace(-2.0, 2.0, 21)
    for param in ("t_x", "t_y", "t_z"):
        for delta in translations:
            pose_b = pose.shifted(param, float(delta))
            rows.append((param, float(delta), "m", mean_error(pose_b, center), mean_error(pose_b, ring)))
    for param in ("alpha", "beta", "gamma"):
        for delta_deg in rotations_deg:
            pose_b = pose.shifted(param, math.radians(float(delta_deg)))
            rows.append((param, float(delta_deg), "deg",
                         mean_error(pose_b, center), mean_error(pose_b, ring)))
    for delta_deg in rotations_deg:
        delta = math.radians(float(delta_deg))
        comp = compensating_translation(delta, "beta", t_z)
        pose_b = pose.replaced(beta=pose.beta + delta, t_x=pose.t_x - comp)
        rows.append(("beta_compensated", float(delta_deg), "deg",
                     mean_error(pose_b, center), mean_error(pose_b, ring)))
    return rows


def cmd_pose_error_curves(args) -> int:
    K = CameraIntrinsics(args.f, (512.0, 512.0), (1024, 1024))
    rows = _error_curve_rows(K, args.tz)
    lines = ["param\tdelta\tunit\tcenter_err_px\tring_mean_err_px"]
    for param, delta, unit, center_err, ring_err in rows:
        lines.append(f"{param}\t{delta:.6g}\t{unit}\t{center_err!r}\t{ring_err!r}")
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="ascii")
    print(f"wrote {len(rows)} samples to {args.out}")
    if args.plot:
        try:
            import matplotlib
            matplotlib.use("Agg")
            import matplotlib.pyplot as plt
        except ImportError as exc:
            raise ConfigError("matplotlib is required for --plot") from exc
        fig, axes = plt.subplots(1, 3, figsize=(13, 4))
        groups = (("t_x", "t_y", "t_z"), ("alpha", "beta", "gamma"), ("beta_compensated",))
        titles = ("translation error", "rotation error", "roll error compensated by t_x")
        for ax, group, title in zip(axes, groups, titles):
            for param in group:
                pts = [(d, r) for p, d, _, _, r in rows if p == param]
                ax.plot([p[0] for p in pts], [p[1] for p in pts], label=param)
            ax.set_xlabel("delta (m or deg)")
            ax.set_ylabel("mean image-plane error (px)")
            ax.set_title(title)
            ax.legend()
        fig.tight_layout()
        fig.savefig(args.plot, dpi=120)
        print(f"wrote plot to {args.plot}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="synfocus",
        description="Synthetic-aperture refocusing with variance-driven pose refinement.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="render a synthetic dataset from a config file")
    p_sim.add_argument("config", help="INI config with [scene], [capture], [perturbation]")
    p_sim.add_argument("outdir", help="output dataset directory")
    p_sim.set_defaults(func=cmd_simulate)

    p_ref = sub.add_parser("refine", help="refine poses and integrate a dataset")
    p_ref.add_argument("dataset", help="dataset directory written by 'simulate'")
    p_ref.add_argument("--out", default=None, help="output directory (default: DATASET/refined)")
    p_ref.add_argument("--space", choices=sorted(SPACE_PRESETS), default="three")
    p_ref.add_argument("--strategy", choices=list(STRATEGY_KINDS), default="early")
    p_ref.add_argument("--patience", type=int, default=1)
    p_ref.add_argument("--roi", default=None, help="x,y,w,h in plane raster pixels")
    p_ref.add_argument("--plane-z", dest="plane_z", type=float, default=0.0)
    p_ref.add_argument("--auto-plane", dest="auto_plane", action="store_true",
                       help="search the focal plane height before refinement")
    p_ref.add_argument("--z-min", type=float, default=-5.0)
    p_ref.add_argument("--z-max", type=float, default=5.0)
    p_ref.add_argument("--poses", choices=("noisy", "true"), default="noisy")
    p_ref.add_argument("--interpolation", choices=("bilinear", "nearest"), default="bilinear")
    p_ref.add_argument("--max-iterations", type=int, default=100)
    p_ref.add_argument("--f-tol", type=float, default=0.05)
    p_ref.add_argument("--x-tol", type=float, default=0.01)
    p_ref.add_argument("--coverage-floor", dest="coverage_floor", type=float, default=0.9,
                       help="candidates must keep this fraction of the start pose's "
                            "roi coverage")
    p_ref.set_defaults(func=cmd_refine)

    p_var = sub.add_parser("variance-model", help="closed forms vs Monte-Carlo check")
    p_var.add_argument("d", type=float, help="occlusion probability in [0, 1]")
    p_var.add_argument("mu_o", type=float, help="occluder mean intensity")
    p_var.add_argument("sigma2_o", type=float, help="occluder intensity variance")
    p_var.add_argument("mu_s", type=float, help="signal mean intensity")
    p_var.add_argument("sigma2_s", type=float, help="signal intensity variance")
    p_var.add_argument("n", type=int, help="number of integrated views")
    p_var.add_argument("--mc-pixels", type=int, default=1_000_000)
    p_var.add_argument("--seed", type=int, default=0)
    p_var.add_argument("--workers", type=int, default=1)
    p_var.set_defaults(func=cmd_variance_model)

    p_curves = sub.add_parser("pose-error-curves",
                              help="image-plane error versus each pose parameter")
    p_curves.add_argument("--tz", type=float, default=30.0, help="camera altitude in meters")
    p_curves.add_argument("--f", type=float, default=1000.0, help="focal length in pixels")
    p_curves.add_argument("--out", default="pose_error_curves.tsv")
    p_curves.add_argument("--plot", default=None, help="optional plot image path")
    p_curves.set_defaults(func=cmd_pose_error_curves)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except TooFewImages as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except KeyError as exc:
        print(f"config error: missing manifest key {exc}", file=sys.stderr)
        return 2
    except (ValueError, SynfocusError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

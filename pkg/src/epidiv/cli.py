"""Command-line entry point: ``epidiv {synth,loss,optimize,pseudo-label,eval}``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .divergence import DEFAULT_EPSILON, DivergenceConfig, scene_loss, write_loss_csv
from .errors import EmptySamples, NonFiniteLoss
from .geometry import DEFAULT_DEGENERACY_DEG, load_rig, save_rig
from .heatmap import HEATMAP_SIZE, apply_homography, save_heatmap
from .metrics import (
    argmax_keypoints,
    pck_curve,
    pck_svg,
    reprojection_error,
    write_pck_csv,
    write_residual_csv,
    write_summary_json,
)
from .scene import load_scene, save_scene
from .supervision import (
    LossWeights,
    annotation_records,
    build_pairs,
    group_annotations,
    optimize_heatmaps,
    read_annotations,
    spatial_augment,
    total_loss,
    track_augment,
    write_annotations,
    write_trajectory_csv,
)
from .synth import NoiseSpec, RigSpec, make_rig, make_scene

EXIT_INVALID_SPEC = 2
EXIT_NO_PAIRS = 3
EXIT_NON_FINITE = 4
EXIT_NOT_TRIANGULABLE = 5
EXIT_EMPTY_SAMPLES = 6


@dataclass
class RunConfig:
    rig: Path | None = None
    scene: Path | None = None
    out: Path = Path("out")
    weights: LossWeights = field(default_factory=LossWeights)
    divergence: DivergenceConfig = field(default_factory=DivergenceConfig)
    steps: int = 100
    step_size: float = 0.2
    seed: int = 0
    degeneracy_deg: float = DEFAULT_DEGENERACY_DEG

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        return cls(
            rig=Path(args.rig) if args.rig else None,
            scene=Path(args.scene) if args.scene else None,
            out=Path(args.out),
            weights=LossWeights(args.lambda_e, args.lambda_p),
            divergence=DivergenceConfig(epsilon=args.eps, normalize=args.normalize_flats),
            steps=args.steps,
            step_size=args.step_size,
            seed=args.seed,
            degeneracy_deg=args.degeneracy_deg,
        )


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


# ---------------------------------------------------------------- commands


def cmd_synth(args, cfg: RunConfig) -> int:
    try:
        spec = RigSpec(count=args.count, placement=args.placement, radius=args.radius, seed=cfg.seed)
        noise = NoiseSpec(jitter_sigma=args.jitter, clutter_count=args.clutter)
        if args.keypoints < 1:
            raise ValueError("need at least one keypoint")
    except ValueError as exc:
        return _fail(EXIT_INVALID_SPEC, str(exc))
    rig = make_rig(spec)
    rng = np.random.default_rng(cfg.seed)
    X = np.zeros((1, 3)) if args.keypoints == 1 else rng.uniform(-0.3, 0.3, size=(args.keypoints, 3))
    scene = make_scene(rig, X, sigma=args.sigma, noise=noise, seed=cfg.seed, snap_to_grid=True)
    cfg.out.mkdir(parents=True, exist_ok=True)
    save_rig(rig, cfg.out / "rig.json")
    save_scene(scene, cfg.out / "scene")
    print(f"synth: {len(rig)} cameras, {len(X)} keypoints -> {cfg.out}")
    return 0


def cmd_loss(args, cfg: RunConfig) -> int:
    scene = load_scene(cfg.scene)
    pairs = build_pairs(scene, degeneracy_deg=cfg.degeneracy_deg)
    if not pairs:
        return _fail(EXIT_NO_PAIRS, "every camera pair is degenerate")
    records: list = []
    scene_loss([v.heatmap for v in scene.views], pairs, cfg.divergence, records=records)
    terms: dict = {}
    total, _ = total_loss(scene, pairs, cfg.weights, cfg.divergence, terms=terms)
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_loss_csv(records, cfg.out / "loss.csv", view_ids=[v.camera_id for v in scene.views])
    summary = {
        "total": total,
        "L_L": terms["L_L"] if terms["L_L"] is not None else "absent",
        "L_E": terms["L_E"],
        "L_B": terms["L_B"] if terms["L_B"] is not None else "absent",
        "lambda_e": cfg.weights.lambda_e,
        "lambda_p": cfg.weights.lambda_p,
        "pairs": len(pairs),
    }
    (cfg.out / "totals.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"loss: total {total:.6g}, L_E {terms['L_E']:.6g} over {len(pairs)} pairs")
    return 0


def cmd_optimize(args, cfg: RunConfig) -> int:
    scene = load_scene(cfg.scene)
    pairs = build_pairs(scene, degeneracy_deg=cfg.degeneracy_deg)
    if len(pairs) < 2:
        return _fail(EXIT_NO_PAIRS, f"need at least 2 usable pairs, found {len(pairs)}")
    try:
        result = optimize_heatmaps(scene, pairs, cfg.weights, cfg.steps, cfg.step_size, cfg.divergence)
    except NonFiniteLoss as exc:
        return _fail(EXIT_NON_FINITE, str(exc))
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(result.trajectory, cfg.out / "trajectory.csv")
    for k, h in enumerate(result.heatmaps):
        save_heatmap(h, cfg.out / f"final_view{k}")
    first, last = result.trajectory[0], result.trajectory[-1]
    print(f"optimize: loss {first.total:.6g} -> {last.total:.6g}, reprojection {first.mean_reproj_px:.4g} -> {last.mean_reproj_px:.4g} px")
    return 0


def cmd_pseudo_label(args, cfg: RunConfig) -> int:
    rig = load_rig(cfg.rig)
    ids = [c.id for c in rig]
    records = read_annotations(args.annotations)
    out_records: list[dict] = []
    if args.mode == "spatial":
        frames = sorted({r["frame"] for r in records})
        for t in frames:
            result = spatial_augment(rig, group_annotations(records, ids, t), min_views=args.min_views)
            for c, why in result.skipped.items():
                print(f"frame {t} channel {c} skipped: {why}", file=sys.stderr)
            out_records += annotation_records(result.labels, ids, t, "spatial")
    else:
        frames = sorted({r["frame"] for r in records})
        channels = sorted({int(r["channel"]) for r in records})
        tracks = np.full((len(rig), len(frames), len(channels), 2), np.nan)
        for r in records:
            tracks[ids.index(r["view"]), frames.index(r["frame"]), channels.index(int(r["channel"]))] = (r["u"], r["v"])
        result = track_augment(rig, tracks, inlier_thresh=args.inlier_thresh, seed=cfg.seed)
        for t, c, why in result.gaps:
            print(f"frame {frames[t]} channel {channels[c]} gap: {why}", file=sys.stderr)
        for t, labels in result.labels.items():
            relabeled = [{channels[c]: uv for c, uv in per_view.items()} for per_view in labels]
            out_records += annotation_records(relabeled, ids, frames[t], "track")
    if not out_records:
        return _fail(EXIT_NOT_TRIANGULABLE, "no keypoint could be triangulated")
    cfg.out.parent.mkdir(parents=True, exist_ok=True)
    write_annotations(out_records, cfg.out)
    print(f"pseudo-label: {len(out_records)} labels -> {cfg.out}")
    return 0


def cmd_eval(args, cfg: RunConfig) -> int:
    scene = load_scene(cfg.scene)
    cams = scene.heatmap_cameras()
    detections, confidences, det_px, gt_px = [], [], [], []
    for k, view in enumerate(scene.views):
        found = argmax_keypoints(view.heatmap)
        detections.append([uv for uv, _ in found])
        confidences.append([peak for _, peak in found])
        A = view.crop.image_to_heatmap()
        for c, (uv, peak) in enumerate(found):
            if c in view.annotations and peak >= args.confidence_floor:
                det_px.append(uv)
                gt_px.append(apply_homography(A, view.annotations[c]))
    try:
        curve = pck_curve(det_px, gt_px, window_w=HEATMAP_SIZE)
    except EmptySamples as exc:
        return _fail(EXIT_EMPTY_SAMPLES, str(exc))
    stats = reprojection_error(cams, detections, confidences, args.confidence_floor)
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_pck_csv(curve, cfg.out / "pck.csv")
    write_residual_csv(stats, cfg.out / "residuals.csv", view_ids=[v.camera_id for v in scene.views])
    write_summary_json(stats, cfg.out / "summary.json", {"samples": len(det_px)})
    (cfg.out / "pck.svg").write_text(pck_svg(curve))
    print(f"eval: {len(det_px)} samples, reprojection {stats.mean:.4g} +- {stats.std:.4g} px")
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--rig", help="rig JSON file")
    common.add_argument("--scene", help="scene directory")
    common.add_argument("--out", default="out", help="output directory (file for pseudo-label)")
    common.add_argument("--lambda-e", type=float, default=5.0)
    common.add_argument("--lambda-p", type=float, default=1.0)
    common.add_argument("--eps", type=float, default=DEFAULT_EPSILON)
    common.add_argument("--steps", type=int, default=100)
    common.add_argument("--step-size", type=float, default=0.2)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--degeneracy-deg", type=float, default=DEFAULT_DEGENERACY_DEG)
    common.add_argument("--normalize-flats", action="store_true")

    parser = argparse.ArgumentParser(prog="epidiv", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic rig and scene")
    p.add_argument("--count", type=int, default=4)
    p.add_argument("--placement", default="ring")
    p.add_argument("--radius", type=float, default=3.0)
    p.add_argument("--keypoints", type=int, default=1)
    p.add_argument("--sigma", type=float, default=1.5)
    p.add_argument("--jitter", type=float, default=0.0)
    p.add_argument("--clutter", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("loss", parents=[common], help="per-pair cross-view loss report")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("optimize", parents=[common], help="gradient descent on heatmaps")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("pseudo-label", parents=[common], help="triangulate annotations into every view")
    p.add_argument("--annotations", required=True, help="annotation JSON records")
    p.add_argument("--mode", choices=("spatial", "track"), default="spatial")
    p.add_argument("--min-views", type=int, default=2)
    p.add_argument("--inlier-thresh", type=float, default=2.0)
    p.set_defaults(func=cmd_pseudo_label)

    p = sub.add_parser("eval", parents=[common], help="PCK and reprojection error")
    p.add_argument("--confidence-floor", type=float, default=0.0)
    p.set_defaults(func=cmd_eval)
    return parser


_REQUIRED = {"loss": ("scene",), "optimize": ("scene",), "eval": ("scene",), "pseudo-label": ("rig",)}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in _REQUIRED.get(args.command, ()):
        if getattr(args, name) is None:
            parser.error(f"--{name} is required for {args.command}")
    try:
        cfg = RunConfig.from_args(args)
    except ValueError as exc:
        return _fail(EXIT_INVALID_SPEC, str(exc))
    return args.func(args, cfg)


if __name__ == "__main__":
    sys.exit(main())

"""Batch CLI tying the pipeline together.

Subcommands: synth, detect, denoise, occupancy, fit, render, eval. Machine
readable JSON summaries go to stdout, logs to stderr. Exit codes: 0 success,
1 runtime failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from .config import ConfigError, RunConfig, load_run_config
from .core import Pose, RadarFrame, load_frame, quat_from_yaw, save_frame
from .metrics import metrics_report, psnr
from .multipath import MultipathSourceMap, build_source_map, render_multipath
from .noise import NoiseReport, denoise_frame, detect_noise
from .occupancy import OccupancyGrid, build_occupancy, windowed_occupancy
from .splat import GaussianScene, RenderMode, compose_final, render, scene_init
from .synth import (SceneSpec, arc_trajectory, inject_multipath,
                    inject_saturation, inject_speckle, line_trajectory,
                    simulate_frame)
from .train import optimize, save_loss_history, ssim

log = logging.getLogger("radarscene")


class UsageError(Exception):
    """Bad invocation that argparse cannot catch itself."""


def _parse_xy(text: str) -> np.ndarray:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 2:
        raise UsageError(f"expected 'x,y', got {text!r}")
    return np.array(parts)


def _frame_bases(indir: Path) -> list[Path]:
    if not indir.is_dir():
        raise UsageError(f"not a directory: {indir}")
    bases = sorted(p.with_suffix("") for p in indir.glob("*.png")
                   if p.with_suffix(".json").exists())
    if not bases:
        raise UsageError(f"no frame PNG+JSON pairs in {indir}")
    return bases


def _load_frames(indir: Path) -> list[RadarFrame]:
    return [load_frame(b) for b in _frame_bases(indir)]


def polar_to_cartesian_image(power: np.ndarray, cfg, size_px: int = 512) -> np.ndarray:
    """Nearest-sample BEV view of a polar image, sensor at the center."""
    extent = cfg.max_range
    axis = np.linspace(-extent, extent, size_px)
    xx, yy = np.meshgrid(axis, axis, indexing="xy")
    r = np.hypot(xx, yy)
    theta = np.arctan2(yy, xx) % (2.0 * np.pi)
    beam = np.round(theta / cfg.azimuth_step_rad).astype(int) % cfg.n_azimuth
    bins = np.round(r / cfg.range_resolution - 0.5).astype(int)
    ok = (bins >= 0) & (bins < cfg.n_range)
    out = np.zeros_like(r)
    out[ok] = power[beam[ok], bins[ok]]
    return out[::-1]   # +y up


def _save_gray_png(image: np.ndarray, path: Path) -> None:
    raw = np.round(np.clip(image, 0.0, 1.0) * 65535.0).astype("<u2")
    Image.fromarray(raw).save(path)


# --- subcommands ---

def cmd_synth(args) -> dict:
    run = load_run_config(args.config)
    scene_path = Path(args.scene)
    if not scene_path.exists():
        raise UsageError(f"scene file not found: {scene_path}")
    spec = SceneSpec.load(scene_path)
    cfg = run.radar
    if args.trajectory == "line":
        poses = line_trajectory(_parse_xy(args.start), _parse_xy(args.end),
                                args.n_frames)
    else:
        poses = arc_trajectory(_parse_xy(args.center), args.radius,
                               np.deg2rad(args.start_angle),
                               np.deg2rad(args.end_angle), args.n_frames)
    outdir = Path(args.outdir)
    clean_dir = outdir / "clean"
    clean_dir.mkdir(parents=True, exist_ok=True)
    with_noise = args.speckle > 0 or args.saturate > 0 or args.multipath > 0
    noisy_dir = outdir / "noisy"
    if with_noise:
        noisy_dir.mkdir(parents=True, exist_ok=True)
    for i, pose in enumerate(poses):
        frame = simulate_frame(spec, pose, cfg, timestamp=float(i))
        save_frame(frame, clean_dir / f"frame_{i:04d}")
        if not with_noise:
            continue
        rng = np.random.default_rng([args.seed, i])
        noisy = frame
        sat_beams = rng.choice(cfg.n_azimuth, size=args.saturate, replace=False) \
            if args.saturate else np.array([], dtype=int)
        if args.multipath:
            strong = np.argsort(frame.power.max(axis=1))[::-1]
            mp_beams = [int(b) for b in strong[:args.multipath]
                        if frame.power[b].max() > 0.05]
            for b in mp_beams:
                src_bin = int(np.argmax(noisy.power[b]))
                noisy = inject_multipath(noisy, b, src_bin, args.multipath_period,
                                         args.multipath_amp, args.multipath_gamma)
                # multipath rides on saturation in practice
                noisy = inject_saturation(noisy, [b], args.saturate_offset)
        if args.saturate:
            noisy = inject_saturation(noisy, sat_beams, args.saturate_offset)
        if args.speckle > 0:
            noisy = inject_speckle(noisy, args.speckle,
                                   seed=int(rng.integers(2 ** 31)))
        save_frame(noisy, noisy_dir / f"frame_{i:04d}")
    return {"frames": len(poses), "clean_dir": str(clean_dir),
            "noisy_dir": str(noisy_dir) if with_noise else None}


def cmd_detect(args) -> dict:
    run = load_run_config(args.config)
    det = run.detection
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    n_sat = n_multi = 0
    bases = _frame_bases(Path(args.indir))
    for base in bases:
        frame = load_frame(base)
        report = detect_noise(frame, det.c_th, det.c_multi_th, det.a_th)
        report.save(outdir / f"{base.name}_report.json")
        n_sat += len(report.saturated)
        n_multi += len(report.multipath)
    return {"frames": len(bases), "saturated_beams": n_sat,
            "multipath_beams": n_multi, "outdir": str(outdir)}


def cmd_denoise(args) -> dict:
    run = load_run_config(args.config)
    det = run.detection
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    bases = _frame_bases(Path(args.indir))
    n_beams = 0
    for base in bases:
        frame = load_frame(base)
        if args.reports:
            report = NoiseReport.load(Path(args.reports) / f"{base.name}_report.json")
        else:
            report = detect_noise(frame, det.c_th, det.c_multi_th, det.a_th)
        clean = denoise_frame(frame, report, det.smoothing_bins)
        save_frame(clean, outdir / base.name)
        n_beams += len(report.noisy_beams)
    return {"frames": len(bases), "denoised_beams": n_beams, "outdir": str(outdir)}


def cmd_occupancy(args) -> dict:
    run = load_run_config(args.config)
    occ = run.occupancy
    window = args.window if args.window is not None else occ.window
    p_th = args.pth if args.pth is not None else occ.power_threshold
    frames = _load_frames(Path(args.indir))
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if args.single:
        grid = build_occupancy(frames, p_th, occ.cell_size)
        grid.save(outdir / "grid_global", save_mean=args.save_mean)
        occupied = int(grid.binary.sum())
        n_grids = 1
    else:
        grids = windowed_occupancy(frames, window, p_th, occ.cell_size)
        for i, grid in enumerate(grids):
            grid.save(outdir / f"grid_{i:04d}", save_mean=args.save_mean)
        occupied = int(sum(g.binary.sum() for g in grids))
        n_grids = len(grids)
    return {"grids": n_grids, "occupied_cells": occupied, "window": window,
            "power_threshold": p_th, "outdir": str(outdir)}


def cmd_fit(args) -> dict:
    run = load_run_config(args.config)
    cfg = run.radar
    det = run.detection
    train_cfg = run.training
    if args.iterations is not None:
        train_cfg.iterations = args.iterations
    frames = _load_frames(Path(args.indir))
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    log.info("detecting noise on %d frames", len(frames))
    reports = [detect_noise(f, det.c_th, det.c_multi_th, det.a_th) for f in frames]
    denoised = [denoise_frame(f, r, det.smoothing_bins)
                for f, r in zip(frames, reports)]
    log.info("building occupancy windows")
    grids = windowed_occupancy(denoised, run.occupancy.window,
                               run.occupancy.power_threshold,
                               run.occupancy.cell_size)
    source_map = build_source_map(frames, reports, run.multipath.merge_radius,
                                  run.multipath.merge_angle_deg,
                                  det.smoothing_bins)
    source_map.save(outdir / "source_map.json")
    if args.resume:
        scene = GaussianScene.load(args.resume)
    else:
        si = run.scene_init
        scene = scene_init(si.n_gaussians, [f.pose for f in frames],
                           r_min=cfg.min_valid_range, r_max=cfg.max_range,
                           size=si.size, alpha0=si.alpha0, eta0=si.eta0,
                           sh0=si.sh0, z_range=(si.z_min, si.z_max),
                           sh_degree=si.sh_degree,
                           transmit_scale=cfg.transmit_scale,
                           s_max=train_cfg.s_max, seed=si.seed)
    if train_cfg.checkpoint_every:
        train_cfg.checkpoint_dir = str(outdir)
    log.info("fitting %d Gaussians for %d iterations", len(scene),
             train_cfg.iterations)
    scene, history = optimize(scene, frames, grids, reports, source_map,
                              train_cfg, run.loss_weights)
    scene.save(outdir / "checkpoint.json")
    save_loss_history(history, outdir / "loss.csv")
    final = history[-1]["total"] if history else None
    return {"frames": len(frames), "gaussians": len(scene),
            "iterations": train_cfg.iterations, "final_loss": final,
            "multipath_sources": len(source_map), "outdir": str(outdir)}


_MODE_NAMES = {"sigma": RenderMode.SIGMA, "alpha": RenderMode.ALPHA,
               "rhoalpha": RenderMode.RHO_ALPHA, "rhoeta": RenderMode.RHO_ETA}


def cmd_render(args) -> dict:
    run = load_run_config(args.config)
    cfg = run.radar
    ckpt = Path(args.checkpoint)
    if not ckpt.exists():
        raise UsageError(f"checkpoint not found: {ckpt}")
    scene = GaussianScene.load(ckpt)
    poses: list[tuple[str, Pose]] = []
    if args.poses_from:
        for base in _frame_bases(Path(args.poses_from)):
            poses.append((base.name, load_frame(base).pose))
    for i, spec in enumerate(args.pose or []):
        vals = [float(v) for v in spec.split(",")]
        if len(vals) != 3:
            raise UsageError(f"--pose expects 'x,y,yaw_deg', got {spec!r}")
        poses.append((f"pose_{i:02d}",
                      Pose(np.array([vals[0], vals[1], 0.0]),
                           quat_from_yaw(np.deg2rad(vals[2])))))
    if not poses:
        raise UsageError("provide --poses-from or --pose")
    modes = list(_MODE_NAMES) if args.mode == "all" else [args.mode]
    source_map = MultipathSourceMap.load(args.multipath) if args.multipath else None
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = 0
    for name, pose in poses:
        ghost = (render_multipath(source_map, pose, cfg,
                                  run.multipath.range_gate,
                                  run.multipath.angle_gate_deg)
                 if source_map is not None else None)
        for mode_name in modes:
            img = render(scene, pose, cfg, _MODE_NAMES[mode_name],
                         q_upsample=run.training.q_upsample)
            if mode_name == "sigma" and ghost is not None:
                img = compose_final(img, ghost)
            path = outdir / f"{name}_{mode_name}.png"
            _save_gray_png(img, path)
            written += 1
            if args.cartesian:
                _save_gray_png(polar_to_cartesian_image(np.clip(img, 0, 1), cfg),
                               outdir / f"{name}_{mode_name}_cart.png")
        if ghost is not None:
            _save_gray_png(ghost, outdir / f"{name}_multipath.png")
    return {"poses": len(poses), "modes": modes, "images": written,
            "outdir": str(outdir)}


def cmd_eval(args) -> dict:
    psnr_value = ssim_value = None
    if args.pred_frames and args.gt_frames:
        pred = _load_frames(Path(args.pred_frames))
        gt = _load_frames(Path(args.gt_frames))
        if len(pred) != len(gt):
            raise UsageError(f"frame counts differ: {len(pred)} vs {len(gt)}")
        psnrs, ssims = [], []
        for p, g in zip(pred, gt):
            if p.power.shape != g.power.shape:
                raise UsageError("frame shapes differ")
            mask = p.config.valid_range_mask()
            psnrs.append(psnr(p.power[:, mask], g.power[:, mask]))
            ssims.append(ssim(p.power, g.power,
                              np.broadcast_to(mask, p.power.shape)))
        psnr_value = float(np.mean(psnrs))
        ssim_value = float(np.mean(ssims))
    pred_points = gt_points = None
    if args.pred_grid and args.gt_points:
        from .metrics import occupancy_to_points
        grid = OccupancyGrid.load(args.pred_grid)
        pred_points = occupancy_to_points(grid)
        gt_points = np.array(json.loads(Path(args.gt_points).read_text()))
    if psnr_value is None and pred_points is None:
        raise UsageError("provide --pred-frames/--gt-frames and/or "
                         "--pred-grid/--gt-points")
    report = metrics_report(pred_points, gt_points, args.tau, psnr_value,
                            ssim_value)
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=1))
    return report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radarscene",
        description="Scanning-radar scene reconstruction pipeline")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="simulate frames along a trajectory")
    p.add_argument("--scene", required=True, help="SceneSpec JSON")
    p.add_argument("--outdir", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--trajectory", choices=["line", "arc"], default="line")
    p.add_argument("--start", default="0,0", help="line start 'x,y'")
    p.add_argument("--end", default="1,0", help="line end 'x,y'")
    p.add_argument("--center", default="0,0", help="arc center 'x,y'")
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--start-angle", type=float, default=0.0, help="degrees")
    p.add_argument("--end-angle", type=float, default=90.0, help="degrees")
    p.add_argument("--n-frames", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--speckle", type=float, default=0.0, help="noise level")
    p.add_argument("--saturate", type=int, default=0, help="beams per frame")
    p.add_argument("--saturate-offset", type=float, default=0.3)
    p.add_argument("--multipath", type=int, default=0, help="beams per frame")
    p.add_argument("--multipath-period", type=float, default=10.0, help="meters")
    p.add_argument("--multipath-amp", type=float, default=0.4)
    p.add_argument("--multipath-gamma", type=float, default=0.003)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("detect", help="classify noisy beams per frame")
    p.add_argument("--indir", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("denoise", help="mask noise outside decay regions")
    p.add_argument("--indir", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--reports", default=None, help="reuse detect output")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("occupancy", help="build BEV occupancy grids")
    p.add_argument("--indir", required=True, help="denoised frames")
    p.add_argument("--outdir", required=True)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--pth", type=float, default=None)
    p.add_argument("--single", action="store_true",
                   help="one grid from all frames instead of per-frame windows")
    p.add_argument("--save-mean", action="store_true")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_occupancy)

    p = sub.add_parser("fit", help="fit the Gaussian scene to frames")
    p.add_argument("--indir", required=True, help="raw (noisy) frames")
    p.add_argument("--outdir", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("render", help="render images from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--poses-from", default=None, help="frames dir for poses")
    p.add_argument("--pose", action="append", help="'x,y,yaw_deg'; repeatable")
    p.add_argument("--mode", choices=[*_MODE_NAMES, "all"], default="sigma")
    p.add_argument("--multipath", default=None, help="source map JSON")
    p.add_argument("--cartesian", action="store_true")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("eval", help="image and geometry metrics")
    p.add_argument("--pred-frames", default=None)
    p.add_argument("--gt-frames", default=None)
    p.add_argument("--pred-grid", default=None, help="occupancy grid base path")
    p.add_argument("--gt-points", default=None, help="JSON [[x,y],...]")
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--out", default=None, help="also write the JSON here")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr,
                        level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        summary = args.func(args)
    except (ConfigError, UsageError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        log.exception("command failed")
        return 1
    json.dump(summary, sys.stdout)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""``mview`` command-line entry point.

Subcommands: derive, augment, warp, gtmap, synth, eval. Every subcommand
accepts ``--config FILE`` (JSON object keyed by option name, dashes or
underscores); explicit flags override config values.

Exit codes: 0 success, 1 data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from mview import io
from mview.augment import OcclusionConfig, occlude_frame
from mview.errors import FormatError, MviewError
from mview.evaluation import DEFAULT_RADIUS, DetectionSet, score_frames
from mview.geometry import Direction, build_projection, plane_homography
from mview.gtmaps import (
    SINGLE_VIEW_SIGMA,
    TOP_VIEW_SIGMA,
    GaussianSpec,
    gaussian_blur,
    occupancy_map,
    view_point_maps,
)
from mview.synth import (
    Pedestrian,
    SceneSpec,
    intersection_localize,
    random_sparse_pedestrians,
    render_scene,
    ring_rig,
)
from mview.warp import DEFAULT_HEIGHTS, ScoreMap, project_multilayer, top_to_camera_sampler

logger = logging.getLogger("mview")

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")
MAP_SUFFIXES = (".f32", ".png")


@dataclass
class ToolConfig:
    command: str
    paths: Dict[str, Path] = field(default_factory=dict)
    occlusion: Optional[OcclusionConfig] = None
    heights: List[float] = field(default_factory=lambda: list(DEFAULT_HEIGHTS))
    sigma: float = TOP_VIEW_SIGMA
    radius: float = DEFAULT_RADIUS
    seed: int = 0
    jobs: int = 1
    verbosity: int = 0


class UsageError(Exception):
    pass


def _heights(text) -> List[float]:
    if isinstance(text, (list, tuple)):
        return [float(h) for h in text]
    try:
        return [float(h) for h in str(text).split(",") if h.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid heights list: {text!r}") from None


# option defaults applied after config merging; None in argparse means "not given"
DEFAULTS = {
    "heights": list(DEFAULT_HEIGHTS),
    "n": 25,
    "p": 1.0,
    "d": 1.0,
    "alpha": 0.4,
    "omega": 0,
    "ha": 1.8,
    "seed": 0,
    "max_rejections": 10000,
    "sigma": TOP_VIEW_SIGMA,
    "view_sigma": SINGLE_VIEW_SIGMA,
    "normalize": "sum",
    "radius": DEFAULT_RADIUS,
    "threshold": 0.0,
    "nms_radius": 1.0,
    "min_score": 1.0,
    "min_views": 2,
    "frame_id": 0,
    "jobs": 1,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mview", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", type=Path, default=None)
        return p

    p = add("derive", "write per-camera plane homographies")
    p.add_argument("--calib", type=Path)
    p.add_argument("--grid", type=Path)
    p.add_argument("--heights", type=_heights)
    p.add_argument("--out", type=Path)

    p = add("augment", "apply 3D random occlusion to multi-view frames")
    p.add_argument("--calib", type=Path)
    p.add_argument("--grid", type=Path)
    p.add_argument("--frames", type=Path, help="directory with one sub-directory per frame")
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--d", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--omega", type=int)
    p.add_argument("--ha", type=float, help="occluder height in meters")
    p.add_argument("--max-rejections", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--out", type=Path)

    p = add("warp", "project per-camera maps onto parallel top-view planes")
    p.add_argument("--calib", type=Path)
    p.add_argument("--grid", type=Path)
    p.add_argument("--heights", type=_heights)
    p.add_argument("--maps", type=Path)
    p.add_argument("--out", type=Path)
    p.add_argument("--localize", action="store_true", default=None,
                   help="also run intersection localization and write detections.jsonl")
    p.add_argument("--threshold", type=float)
    p.add_argument("--nms-radius", type=float)
    p.add_argument("--min-score", type=float)
    p.add_argument("--min-views", type=int)
    p.add_argument("--frame-id", type=int)

    p = add("gtmap", "build blurred occupancy (and head/foot) target maps")
    p.add_argument("--annotations", type=Path)
    p.add_argument("--grid", type=Path)
    p.add_argument("--sigma", type=float)
    p.add_argument("--calib", type=Path, help="also write per-view head/foot maps")
    p.add_argument("--view-sigma", type=float)
    p.add_argument("--normalize", choices=("sum", "peak"))
    p.add_argument("--jobs", type=int)
    p.add_argument("--out", type=Path)

    p = add("synth", "render a synthetic cylinder scene")
    p.add_argument("--spec", type=Path)
    p.add_argument("--out", type=Path)
    p.add_argument("--stack", action="store_true", default=None, help="also write the projection stack")
    p.add_argument("--heights", type=_heights)

    p = add("eval", "score ground-plane detections against ground truth")
    p.add_argument("--det", type=Path)
    p.add_argument("--gt", type=Path)
    p.add_argument("--radius", type=float)
    p.add_argument("--grid", type=Path, help="drop points outside this AOI before matching")
    p.add_argument("--report", type=Path)
    return parser


def merge_config(args: argparse.Namespace) -> argparse.Namespace:
    """Fill options not given on the command line from ``--config``, then defaults."""
    values = vars(args)
    if args.config is not None:
        cfg = json.loads(Path(args.config).read_text())
        if not isinstance(cfg, dict):
            raise UsageError("--config must hold a JSON object")
        for key, val in cfg.items():
            key = key.replace("-", "_")
            if key not in values:
                raise UsageError(f"unknown config key {key!r} for {args.command}")
            if values[key] is None:
                if key == "heights":
                    val = _heights(val)
                elif key in ("calib", "grid", "frames", "maps", "out", "annotations", "spec", "det", "gt", "report"):
                    val = Path(val)
                values[key] = val
    for key, val in DEFAULTS.items():
        if key in values and values[key] is None:
            values[key] = val
    for flag in ("localize", "stack"):
        if flag in values and values[flag] is None:
            values[flag] = False
    return args


REQUIRED = {
    "derive": ("calib", "out"),
    "augment": ("calib", "grid", "frames", "out"),
    "warp": ("calib", "grid", "maps", "out"),
    "gtmap": ("annotations", "grid", "out"),
    "synth": ("spec", "out"),
    "eval": ("det", "gt"),
}
INPUTS = ("calib", "grid", "frames", "maps", "annotations", "spec", "det", "gt")


def to_tool_config(args: argparse.Namespace) -> ToolConfig:
    values = vars(args)
    missing = [k for k in REQUIRED[args.command] if values.get(k) is None]
    if missing:
        raise UsageError(f"{args.command}: missing required option(s): " + ", ".join("--" + m for m in missing))
    paths = {k: values[k] for k in INPUTS + ("out", "report") if values.get(k) is not None}
    for key in INPUTS:
        if key in paths and not paths[key].exists():
            raise FileNotFoundError(f"--{key}: {paths[key]} does not exist")
    occ = None
    if args.command == "augment":
        occ = OcclusionConfig(
            n_occlusions=args.n,
            probability_p=args.p,
            min_separation_d=args.d,
            pedestrian_height_ha=args.ha,
            width_ratio_alpha=args.alpha,
            fill_value_omega=args.omega,
            rng_seed=args.seed,
            max_rejections=args.max_rejections,
        )
    jobs = values.get("jobs", 1)
    if jobs < 1:
        raise ValueError("--jobs must be >= 1")
    radius = values.get("radius", DEFAULT_RADIUS)
    if not radius > 0:
        raise ValueError("--radius must be > 0")
    sigma = values.get("sigma", TOP_VIEW_SIGMA)
    if not sigma > 0:
        raise ValueError("--sigma must be > 0")
    return ToolConfig(
        command=args.command,
        paths=paths,
        occlusion=occ,
        heights=values.get("heights", list(DEFAULT_HEIGHTS)),
        sigma=sigma,
        radius=radius,
        seed=values.get("seed", 0),
        jobs=jobs,
        verbosity=args.verbose,
    )


def _height_tag(h: float) -> str:
    return f"{h:.4f}".rstrip("0").rstrip(".") if h else "0"


def _find_per_camera(directory: Path, camera_id: int, suffixes) -> Path:
    for stem in (str(camera_id), f"cam{camera_id}"):
        for suf in suffixes:
            p = directory / f"{stem}{suf}"
            if p.exists():
                return p
    raise FormatError(f"{directory}: no file for camera {camera_id}")


def cmd_derive(args, cfg: ToolConfig) -> int:
    calibs = io.read_calibrations(cfg.paths["calib"])
    grid = io.read_grid(cfg.paths["grid"]) if "grid" in cfg.paths else None
    out = cfg.paths["out"]
    out.mkdir(parents=True, exist_ok=True)
    cameras = []
    for cal in calibs:
        proj = build_projection(cal)
        planes = []
        for h in cfg.heights:
            hom = plane_homography(proj, h, Direction.TOP_TO_CAM)
            rec = {
                "height": h,
                "top_to_cam": hom.h_matrix.tolist(),
                "cam_to_top": hom.inverse().h_matrix.tolist(),
            }
            if grid is not None:
                rec["top_pixel_to_cam"] = top_to_camera_sampler(cal, grid, h).tolist()
            planes.append(rec)
        cameras.append({"id": cal.camera_id, "projection": proj.m.tolist(), "planes": planes})
    io.dump_json({"cameras": cameras}, out / "homographies.json")
    logger.info("wrote homographies for %d cameras x %d heights", len(calibs), len(cfg.heights))
    return 0


def _augment_one(frame_dir: Path, ordinal: int, calibs, grid, cfg: ToolConfig):
    images = [io.read_image(_find_per_camera(frame_dir, c.camera_id, IMAGE_SUFFIXES)) for c in calibs]
    # per-frame stream derived from (seed, frame ordinal): independent of --jobs
    rng = np.random.default_rng([cfg.occlusion.rng_seed, ordinal])
    occluded, records = occlude_frame(images, calibs, grid, cfg.occlusion, rng)
    target = cfg.paths["out"] / frame_dir.name
    target.mkdir(parents=True, exist_ok=True)
    for cal, img in zip(calibs, occluded):
        io.write_image(img, target / f"{cal.camera_id}.png")
    io.dump_json(
        {"frame": frame_dir.name, "occlusions": [r.to_dict() for r in records]},
        target / "occlusions.json",
    )
    return frame_dir.name, len(records)


def cmd_augment(args, cfg: ToolConfig) -> int:
    calibs = io.read_calibrations(cfg.paths["calib"])
    grid = io.read_grid(cfg.paths["grid"])
    frames = sorted(p for p in cfg.paths["frames"].iterdir() if p.is_dir())
    if not frames:
        raise FormatError(f"{cfg.paths['frames']}: no frame directories")
    work = [(f, i) for i, f in enumerate(frames)]
    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        results = list(pool.map(lambda fi: _augment_one(fi[0], fi[1], calibs, grid, cfg), work))
    for name, n in results:
        logger.info("frame %s: %d occlusions", name, n)
    return 0


def cmd_warp(args, cfg: ToolConfig) -> int:
    calibs = io.read_calibrations(cfg.paths["calib"])
    grid = io.read_grid(cfg.paths["grid"])
    maps = [ScoreMap(io.read_map(_find_per_camera(cfg.paths["maps"], c.camera_id, MAP_SUFFIXES))) for c in calibs]
    stack = project_multilayer(maps, calibs, grid, cfg.heights)
    out = cfg.paths["out"]
    out.mkdir(parents=True, exist_ok=True)
    layers = []
    for ci, cal in enumerate(calibs):
        for hi, h in enumerate(stack.heights):
            name = f"layer_c{cal.camera_id}_h{_height_tag(h)}.f32"
            io.write_raw_map(stack.layer(ci, hi).data, out / name)
            layers.append({"camera": cal.camera_id, "height": h, "file": name})
    io.dump_json({"order": "camera-major", "layers": layers, "grid": io.grid_to_dict(grid)}, out / "stack.json")
    if args.localize:
        det = intersection_localize(
            stack,
            threshold=args.threshold,
            nms_radius=args.nms_radius,
            min_score=args.min_score,
            min_views=args.min_views,
            frame_id=args.frame_id,
        )
        io.write_point_sets([det], out / "detections.jsonl")
        logger.info("localized %d pedestrians", len(det.points))
    return 0


def _gtmap_one(frame, grid, calibs, args, cfg: ToolConfig):
    top_spec = GaussianSpec(cfg.sigma, normalize=args.normalize)
    target = cfg.paths["out"] / str(frame.frame_id)
    target.mkdir(parents=True, exist_ok=True)
    occ = occupancy_map(frame, grid)
    io.write_raw_map(occ.data, target / "occupancy.f32")
    io.write_raw_map(gaussian_blur(occ, top_spec).data, target / "occupancy_blurred.f32")
    if calibs:
        view_spec = GaussianSpec(args.view_sigma, normalize=args.normalize)
        for cal in calibs:
            head, foot = view_point_maps(frame, cal.camera_id, (cal.height, cal.width))
            io.write_raw_map(gaussian_blur(head, view_spec).data, target / f"head_{cal.camera_id}.f32")
            io.write_raw_map(gaussian_blur(foot, view_spec).data, target / f"foot_{cal.camera_id}.f32")
    return frame.frame_id


def cmd_gtmap(args, cfg: ToolConfig) -> int:
    frames = io.read_annotations(cfg.paths["annotations"])
    grid = io.read_grid(cfg.paths["grid"])
    calibs = io.read_calibrations(cfg.paths["calib"]) if "calib" in cfg.paths else []
    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        done = list(pool.map(lambda f: _gtmap_one(f, grid, calibs, args, cfg), frames))
    logger.info("wrote target maps for %d frames", len(done))
    return 0


def scene_from_dict(d: dict) -> SceneSpec:
    """Build a SceneSpec from its JSON form.

    Cameras come from ``calibrations`` (camera records) or ``rig`` (keyword
    arguments of :func:`mview.synth.ring_rig`). Pedestrians come from
    ``pedestrians`` and/or ``random_pedestrians`` ({n, min_separation, seed}).
    """
    try:
        grid = io.grid_from_dict(d["grid"])
        if "calibrations" in d:
            calibs = [io.calibration_from_dict(c) for c in d["calibrations"]]
        elif "rig" in d:
            rig = dict(d["rig"])
            if "image_size" in rig:
                rig["image_size"] = tuple(rig["image_size"])
            calibs = ring_rig(grid, **rig)
        else:
            raise FormatError("scene needs 'calibrations' or 'rig'")
        peds = [
            Pedestrian(int(p["grid_index"]), float(p.get("height_m", 1.8)), float(p.get("width_ratio", 0.4)))
            for p in d.get("pedestrians", [])
        ]
        if "random_pedestrians" in d:
            rp = d["random_pedestrians"]
            rng = np.random.default_rng(int(rp.get("seed", 0)))
            peds += random_sparse_pedestrians(grid, int(rp["n"]), float(rp.get("min_separation", 2.5)), rng)
        return SceneSpec(
            calibs,
            grid,
            peds,
            background=float(d.get("background", 0.0)),
            foreground=float(d.get("foreground", 1.0)),
            frame_id=int(d.get("frame_id", 0)),
        )
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed scene spec: {exc}") from None


def cmd_synth(args, cfg: ToolConfig) -> int:
    spec = scene_from_dict(json.loads(cfg.paths["spec"].read_text()))
    views, gt = render_scene(spec)
    out = cfg.paths["out"]
    maps_dir = out / "maps"
    maps_dir.mkdir(parents=True, exist_ok=True)
    for cal, view in zip(spec.calibrations, views):
        io.write_raw_map(view.data, maps_dir / f"{cal.camera_id}.f32")
    io.write_calibrations(spec.calibrations, out / "calib.json")
    io.write_grid(spec.grid, out / "grid.json")
    io.write_point_sets([gt], out / "gt.jsonl")
    if args.stack:
        stack = project_multilayer(views, spec.calibrations, spec.grid, cfg.heights)
        np.save(out / "stack.npy", stack.as_array().astype(np.float32))
    logger.info("rendered %d pedestrians in %d views", len(spec.pedestrians), len(views))
    return 0


def cmd_eval(args, cfg: ToolConfig) -> int:
    dets = {d.frame_id: d for d in io.read_detections(cfg.paths["det"])}
    gts = io.read_ground_truth(cfg.paths["gt"])
    pairs = [(dets.get(g.frame_id, DetectionSet(g.frame_id, np.empty((0, 2)))), g) for g in gts]
    extra = set(dets) - {g.frame_id for g in gts}
    if extra:
        raise FormatError(f"detections for frames without ground truth: {sorted(extra)}")
    aoi = io.read_grid(cfg.paths["grid"]) if "grid" in cfg.paths else None
    report = score_frames(pairs, cfg.radius, aoi)
    agg = report.aggregate
    text = (
        f"MODA {agg.moda:.4f}  MODP {agg.modp:.4f}  Precision {agg.precision:.4f}  Recall {agg.recall:.4f}"
        f"  (TP {agg.tp}, FP {agg.fp}, FN {agg.fn}, r = {cfg.radius} m)"
    )
    print(text)
    if "report" in cfg.paths:
        cfg.paths["report"].parent.mkdir(parents=True, exist_ok=True)
        io.dump_json(report.to_dict(), cfg.paths["report"])
    return 0


COMMANDS = {
    "derive": cmd_derive,
    "augment": cmd_augment,
    "warp": cmd_warp,
    "gtmap": cmd_gtmap,
    "synth": cmd_synth,
    "eval": cmd_eval,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        merge_config(args)
        cfg = to_tool_config(args)
    except UsageError as exc:
        print(f"mview: usage error: {exc}", file=sys.stderr)
        return 2
    except (MviewError, ValueError, OSError) as exc:
        print(f"mview: error: {exc}", file=sys.stderr)
        return 1
    try:
        return COMMANDS[args.command](args, cfg)
    except (MviewError, ValueError, OSError) as exc:
        print(f"mview: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

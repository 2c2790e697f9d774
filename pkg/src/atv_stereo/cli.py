"""Command-line entry point: ``atv-stereo {synth,reconstruct,fuse,eval,report}``.

Exit codes: 0 success, 1 pipeline failure, 2 usage or configuration error.

Dataset layout written by ``synth``::

    manifest.json
    images/00000000.ppm
    depths/00000000.pfm      ground-truth depth, 0 where no surface
    cams/00000000_cam.txt

Reconstruction layout written by ``reconstruct``::

    recon.json
    depths/00000000.pfm      final-stage depth per reference view
    reports/00000000_stage1.json
    stages/00000000_stage1_{depth,sigma,lower,upper}.pfm   with --dump-stages
    images/, cams/           copies of the dataset inputs, for ``fuse``
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io as _stdio
import json
import logging
import math
import shutil
import sys
from pathlib import Path

import numpy as np

from . import io
from .cascade import StageOutput, run_cascade, select_views
from .config import ConfigError, RunConfig
from .errors import InputError, ParseError, PipelineError, StatisticsError
from .evalkit import accuracy_completeness, depth_error, gt_cloud_from_depths
from .features import SCALE_FACTORS, build_feature_pyramid
from .fusion import fuse_depth_maps, write_ply, read_ply
from .geometry import CameraModel, InvalidProjection
from .parallel import ENV_VAR, pmap, resolve_workers
from .synth import BUILTIN_SCENES, SceneSpec, check_scene, get_scene, render_camera, render_views
from .uncertainty import IntervalMap, uncertainty_stats

logger = logging.getLogger("atv_stereo")

EXIT_OK, EXIT_PIPELINE, EXIT_USAGE = 0, 1, 2
MANIFEST = "manifest.json"
RECON = "recon.json"


class UsageError(Exception):
    """Bad or missing command inputs (exit code 2)."""


def _name(view: int) -> str:
    return f"{view:08d}"


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")


def _clean(obj):
    """NaN/inf to null and numpy scalars to Python, recursively."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _read_json(path: Path) -> dict:
    if not path.is_file():
        raise UsageError(f"missing {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise UsageError(f"{path}:{e.lineno}: invalid JSON: {e.msg}") from None


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(json.dumps(cfg.data, sort_keys=True).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Dataset access
# ---------------------------------------------------------------------------


class Dataset:
    """A ``synth``-style directory: images, cameras, optional ground truth."""

    def __init__(self, root):
        self.root = Path(root)
        self.manifest = _read_json(self.root / MANIFEST)
        try:
            self.views = list(self.manifest["views"])
        except (KeyError, TypeError):
            raise UsageError(f"{self.root / MANIFEST}: no 'views' list") from None
        self.scene = SceneSpec.from_dict(self.manifest["scene"]) if self.manifest.get("scene") else None
        self.images = [io.read_ppm(self._path(v, "image")) for v in self.views]
        self.cameras: list[CameraModel] = []
        self.ranges: list[dict] = []
        for v, img in zip(self.views, self.images):
            cam, rng = io.read_camera(self._path(v, "camera"), (img.shape[1], img.shape[0]))
            self.cameras.append(cam)
            self.ranges.append(rng)

    def _path(self, view: dict, key: str) -> Path:
        if key not in view:
            raise UsageError(f"manifest view {view.get('id')} lacks {key!r}")
        p = self.root / view[key]
        if not p.is_file():
            raise UsageError(f"missing {p}")
        return p

    def gt_depths(self) -> list[np.ndarray]:
        return [io.read_pfm(self._path(v, "depth")).astype(np.float64) for v in self.views]

    def gt_at_stage(self, view: int, stage: int) -> np.ndarray | None:
        """Ground-truth depth at a stage's resolution, ray cast from the scene description."""
        if self.scene is None:
            return None
        _, depth, _ = render_camera(self.scene, self.cameras[view].scaled(SCALE_FACTORS[stage]))
        return depth


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    if args.scene in BUILTIN_SCENES:
        scene = get_scene(args.scene)
    else:
        path = Path(args.scene)
        if not path.is_file():
            raise UsageError(f"unknown scene {args.scene!r}: not a builtin ({', '.join(BUILTIN_SCENES)}) or a file")
        scene = SceneSpec.from_dict(_read_json(path))
    check_scene(scene)
    images, depths, _ = render_views(scene, args.threads)
    hit = np.concatenate([d[d > 0] for d in depths])
    if hit.size == 0:
        raise InputError("no camera sees any surface")
    if hit.min() < scene.d_min or hit.max() > scene.d_max:
        raise InputError(
            f"scene depth range [{scene.d_min}, {scene.d_max}] misses rendered depths [{hit.min()}, {hit.max()}]"
        )
    out = Path(args.out_dir)
    for sub in ("images", "depths", "cams"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    views = []
    for i, (img, depth, cam) in enumerate(zip(images, depths, scene.cameras)):
        entry = {
            "id": i,
            "image": f"images/{_name(i)}.ppm",
            "depth": f"depths/{_name(i)}.pfm",
            "camera": f"cams/{_name(i)}_cam.txt",
            "width": cam.width,
            "height": cam.height,
        }
        io.write_ppm(out / entry["image"], img)
        io.write_pfm(out / entry["depth"], depth)
        io.write_camera(out / entry["camera"], cam, scene.d_min, scene.d_max)
        views.append(entry)
    _dump_json(out / MANIFEST, {"scene": scene.to_dict(), "d_min": scene.d_min, "d_max": scene.d_max, "views": views})
    print(f"wrote {len(views)} views of {scene.name!r} to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# reconstruct
# ---------------------------------------------------------------------------


def _stats_block(intervals: IntervalMap, gt: np.ndarray | None, planes: int, bin_width: float) -> dict:
    mask = gt > 0 if gt is not None else np.ones(intervals.lower.shape, dtype=bool)
    return uncertainty_stats(intervals, gt, mask, planes, bin_width).to_dict()


def stage_report(out: StageOutput, view: int, sources: list[int], planes: tuple, gt, bin_width: float) -> dict:
    """Report for one stage: the swept volume and the interval it hands on.

    ``volume`` describes the depth span this stage tiled with its own planes;
    ``interval`` describes the confidence interval it produced, measured
    against the next stage's plane count (its own on the last stage).
    """
    D = out.hypotheses.planes
    nxt = [p for p in planes[out.stage:] if p > 0]
    w, h = out.size
    return {
        "view": view,
        "stage": out.stage,
        "source_views": sources,
        "size": [w, h],
        "planes": D,
        "ground_truth": gt is not None,
        "volume": _stats_block(out.span, gt, D, bin_width),
        "interval": _stats_block(out.intervals, gt, nxt[0] if nxt else D, bin_width),
        "lambda": out.intervals.lambda_used,
    }


def cmd_reconstruct(args) -> int:
    cfg = RunConfig.load(args.config)
    ds = Dataset(args.dataset_dir)
    n = len(ds.views)
    if n < 2:
        raise UsageError("dataset needs at least 2 views")
    refs = list(range(n)) if args.reference is None else [args.reference]
    if args.reference is not None and not 0 <= args.reference < n:
        raise UsageError(f"--reference {args.reference} out of range 0..{n - 1}")
    out = Path(args.out_dir)
    for sub in ("depths", "reports", "images", "cams") + (("stages",) if args.dump_stages else ()):
        (out / sub).mkdir(parents=True, exist_ok=True)

    feat_cfg = cfg.features()
    pyramids = pmap(lambda a: build_feature_pyramid(a[1], feat_cfg, a[0]), list(enumerate(ds.images)), args.threads)
    bin_width = cfg.eval["histogram_bin"]
    reports = []
    for r in refs:
        lo, hi = cfg.depth_range()
        rng = ds.ranges[r]
        lo = lo if lo is not None else rng["d_min"]
        hi = hi if hi is not None else rng["d_max"]
        if lo is None or hi is None:
            raise UsageError(f"view {r}: no depth range in config or camera file")
        cc = cfg.cascade(lo, hi)
        order = select_views(ds.cameras, r, cc.n_views)
        logger.info("reference %d with sources %s", r, order[1:])
        outs = run_cascade(
            [ds.images[v] for v in order],
            [ds.cameras[v] for v in order],
            cc,
            workers=args.threads,
            pyramids=[pyramids[v] for v in order],
        )
        io.write_pfm(out / "depths" / f"{_name(r)}.pfm", outs[-1].estimate.depth)
        for o in outs:
            rep = stage_report(o, r, order, cc.planes, ds.gt_at_stage(r, o.stage), bin_width)
            _dump_json(out / "reports" / f"{_name(r)}_stage{o.stage}.json", rep)
            reports.append(rep)
            if args.dump_stages:
                maps = {"depth": o.estimate.depth, "sigma": o.estimate.sigma,
                        "lower": o.intervals.lower, "upper": o.intervals.upper}
                for key, m in maps.items():
                    io.write_pfm(out / "stages" / f"{_name(r)}_stage{o.stage}_{key}.pfm", m)
    for i, v in enumerate(ds.views):
        shutil.copyfile(ds.root / v["image"], out / "images" / f"{_name(i)}.ppm")
        shutil.copyfile(ds.root / v["camera"], out / "cams" / f"{_name(i)}_cam.txt")
    _dump_json(out / RECON, {"views": n, "references": refs, "config": cfg.data})
    for rep in reports:
        iv = rep["interval"]
        print(f"view {rep['view']} stage {rep['stage']}: planes {rep['planes']}, "
              f"coverage {iv['coverage_ratio']}, mean width {iv['mean_width']:.6g}, unit {iv['unit_distance']:.6g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# fuse
# ---------------------------------------------------------------------------


def _load_recon(recon_dir: Path):
    meta = _read_json(recon_dir / RECON)
    n = int(meta["views"])
    images, cameras, depths = [], [], []
    for i in range(n):
        img = io.read_ppm(recon_dir / "images" / f"{_name(i)}.ppm")
        cam, _ = io.read_camera(recon_dir / "cams" / f"{_name(i)}_cam.txt", (img.shape[1], img.shape[0]))
        images.append(img)
        cameras.append(cam)
        dp = recon_dir / "depths" / f"{_name(i)}.pfm"
        depths.append(io.read_pfm(dp).astype(np.float64) if dp.is_file() else np.zeros((cam.height, cam.width)))
    return meta, images, cameras, depths


def _final_unit_distance(recon_dir: Path) -> float | None:
    """Mean over reference views of the last stage's volume unit distance."""
    last = {}
    for p in sorted((recon_dir / "reports").glob("*_stage*.json")):
        rep = _read_json(p)
        if rep["view"] not in last or rep["stage"] > last[rep["view"]]["stage"]:
            last[rep["view"]] = rep
    if not last:
        return None
    units = [last[v]["volume"]["unit_distance"] for v in sorted(last)]
    return math.fsum(units) / len(units)


def cmd_fuse(args) -> int:
    cfg = RunConfig.load(args.config)
    recon = Path(args.recon_dir)
    meta, images, cameras, depths = _load_recon(recon)
    present = [r for r in meta["references"] if (recon / "depths" / f"{_name(r)}.pfm").is_file()]
    if len(present) < 2:
        raise UsageError(f"fusion needs depth maps for >= 2 views, found {len(present)}")
    cloud = fuse_depth_maps(depths, cameras, images, cfg.fusion(), workers=args.threads)
    out = Path(args.out_ply)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_ply(cloud, out)
    if args.dump_counts:
        cdir = out.parent / f"{out.stem}_consistency"
        cdir.mkdir(exist_ok=True)
        for r in present:
            io.write_pfm(cdir / f"{_name(r)}.pfm", cloud.consistency[r].astype(np.float32))
    report = {
        "points": len(cloud),
        "kept_fraction": {str(r): cloud.kept_fraction[r] for r in present},
        "final_unit_distance": _final_unit_distance(recon),
        "fusion": cfg.data["fusion"],
    }
    _dump_json(out.with_suffix(".json"), report)
    print(f"fused {len(cloud)} points into {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

DEPTH_TABLE_HEADER = ["view", "stage", "mae", "rmse", "spacing", "pixels", "within_1x", "within_2x", "within_4x"]


def _depth_table(recon: Path, ds: Dataset) -> list[dict]:
    rows = []
    for p in sorted((recon / "reports").glob("*_stage*.json")):
        rep = _read_json(p)
        r, k = rep["view"], rep["stage"]
        staged = recon / "stages" / f"{_name(r)}_stage{k}_depth.pfm"
        final = recon / "depths" / f"{_name(r)}.pfm"
        if staged.is_file():
            pred = io.read_pfm(staged)
        elif k == 3 and final.is_file():
            pred = io.read_pfm(final)
        else:
            continue
        gt = ds.gt_at_stage(r, k)
        if gt is None:
            continue
        err = depth_error(pred, gt, gt > 0, rep["volume"]["unit_distance"])
        rows.append({"view": r, "stage": k, **err})
    return rows


def cmd_eval(args) -> int:
    cfg = RunConfig.load(args.config)
    ply = Path(args.ply_path)
    if not ply.is_file():
        raise UsageError(f"missing {ply}")
    ds = Dataset(args.dataset_dir)
    max_dist = cfg.eval["max_dist"]
    if max_dist is None:
        unit = None
        side = ply.with_suffix(".json")
        if side.is_file():
            unit = _read_json(side).get("final_unit_distance")
        if unit is None and args.recon:
            unit = _final_unit_distance(Path(args.recon))
        if unit is None:
            raise UsageError("eval.max_dist is null and no final-stage unit distance is available (pass --recon)")
        max_dist = cfg.eval["max_dist_units"] * unit
    cloud = read_ply(ply)
    gt = gt_cloud_from_depths(ds.gt_depths(), ds.cameras, cell=cfg.eval["gt_dedupe_cell"])
    score = accuracy_completeness(cloud.points, gt, max_dist)
    rows = _depth_table(Path(args.recon), ds) if args.recon else []

    out_dir = Path(args.out_dir) if args.out_dir else ply.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    scene = ds.scene.name if ds.scene is not None else ds.root.name
    inputs = {"ply_sha256": _sha256(ply), "manifest_sha256": _sha256(ds.root / MANIFEST)}
    _dump_json(out_dir / f"{ply.stem}_eval.json", {
        "scene": scene,
        "score": score.to_dict(),
        "gt_points": len(gt),
        "pred_points": len(cloud),
        "depth_errors": rows,
        "config": cfg.data,
        "inputs": inputs,
    })
    buf = _stdio.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["scene", "config_sha256", "accuracy", "completeness", "overall", "max_dist", "empty_prediction"])
    w.writerow([scene, _config_hash(cfg), score.accuracy, score.completeness, score.overall, score.max_dist,
                score.empty_prediction])
    if rows:
        w.writerow([])
        w.writerow(DEPTH_TABLE_HEADER)
        for row in rows:
            w.writerow([row[k] for k in DEPTH_TABLE_HEADER])
    (out_dir / f"{ply.stem}_eval.csv").write_text(buf.getvalue())
    flag = "  (empty prediction)" if score.empty_prediction else ""
    print(f"accuracy {score.accuracy:.6g}  completeness {score.completeness:.6g}  "
          f"overall {score.overall:.6g}  max_dist {score.max_dist:.6g}{flag}")
    for row in rows:
        print(f"view {row['view']} stage {row['stage']}: mae {row['mae']:.6g} rmse {row['rmse']:.6g} "
              f"within 1x/2x/4x {row['within_1x']:.3f}/{row['within_2x']:.3f}/{row['within_4x']:.3f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

REPORT_HEADER = ["view", "stage", "kind", "coverage", "mean_width", "median_width", "D", "unit_distance", "valid_pixels"]


def cmd_report(args) -> int:
    recon = Path(args.recon_dir)
    paths = sorted((recon / "reports").glob("*_stage*.json"))
    if not paths:
        raise UsageError(f"no stage reports under {recon / 'reports'}")
    buf = _stdio.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_HEADER)
    for p in paths:
        rep = _read_json(p)
        for kind in ("volume", "interval"):
            s = rep[kind]
            w.writerow([rep["view"], rep["stage"], kind, s["coverage_ratio"], s["mean_width"], s["median_width"],
                        s["planes"], s["unit_distance"], s["valid_pixels"]])
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _threads(value: str) -> int:
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {value!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="atv-stereo", description=__doc__.splitlines()[0], formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text, formatter_class=fmt)
        return p

    def threads(p):
        p.add_argument("--threads", type=_threads, default=None,
                       help=f"worker threads (None: ${ENV_VAR}, else the CPU count)")

    def config(p):
        p.add_argument("--config", default=None, help="run config JSON (None: built-in defaults)")

    p = add("synth", "render a builtin or JSON-described scene into a dataset directory")
    p.add_argument("scene", help=f"one of {', '.join(BUILTIN_SCENES)} or a scene JSON path")
    p.add_argument("out_dir", help="dataset directory to write")
    threads(p)
    p.set_defaults(func=cmd_synth)

    p = add("reconstruct", "run the depth cascade with each view (or one) as reference")
    p.add_argument("dataset_dir", help="directory written by synth")
    p.add_argument("out_dir", help="reconstruction directory to write")
    config(p)
    p.add_argument("--dump-stages", action="store_true", default=False,
                   help="also write per-stage depth, sigma and interval PFMs")
    p.add_argument("--reference", type=int, default=None, help="only this view id (None: every view)")
    threads(p)
    p.set_defaults(func=cmd_reconstruct)

    p = add("fuse", "fuse reconstructed depth maps into an ASCII PLY point cloud")
    p.add_argument("recon_dir", help="directory written by reconstruct")
    p.add_argument("out_ply", help="PLY path; a report JSON is written beside it")
    config(p)
    p.add_argument("--dump-counts", action="store_true", default=False,
                   help="write per-view consistent-view count maps as PFM")
    threads(p)
    p.set_defaults(func=cmd_fuse)

    p = add("eval", "score a point cloud against the dataset's ground truth")
    p.add_argument("ply_path", help="point cloud to score")
    p.add_argument("dataset_dir", help="directory written by synth")
    config(p)
    p.add_argument("--recon", default=None, help="reconstruction directory for per-stage depth errors")
    p.add_argument("--out-dir", default=None, help="where to write scores (None: next to the PLY)")
    p.set_defaults(func=cmd_eval)

    p = add("report", "collect per-stage interval statistics into one CSV")
    p.add_argument("recon_dir", help="directory written by reconstruct")
    p.add_argument("--out", default=None, help="CSV path (None: stdout)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if hasattr(args, "threads"):
            try:
                args.threads = resolve_workers(args.threads)
            except ValueError as e:
                raise UsageError(str(e)) from None
        return args.func(args)
    except (UsageError, ConfigError, InputError, ParseError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (PipelineError, StatisticsError, InvalidProjection) as e:
        print(f"pipeline failure: {e}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())

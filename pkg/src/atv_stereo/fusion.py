"""Geometric-consistency fusion of per-view depth maps into a colored point cloud."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import io as _io
from .errors import InputError
from .geometry import CameraModel, bilinear_sample_many
from .parallel import pmap


@dataclass
class FusionConfig:
    max_relative_depth_diff: float = 0.01
    max_reprojection_dist: float = 1.0
    min_consistent_views: int = 3

    def __post_init__(self):
        if not (self.max_relative_depth_diff > 0 and self.max_reprojection_dist > 0 and self.min_consistent_views > 0):
            raise InputError("fusion thresholds must be positive")


@dataclass(eq=False)
class PointCloud:
    points: np.ndarray  # P x 3
    colors: np.ndarray  # P x 3 in [0, 1]
    source_view: np.ndarray  # P, int
    source_pixel: np.ndarray | None = None  # P x 2 (x, y), when known
    kept_fraction: list[float] = field(default_factory=list)
    # per view, the number of agreeing other views at each pixel (-1 where no depth)
    consistency: list[np.ndarray] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0, dtype=np.int64), np.zeros((0, 2), dtype=np.int64))


def write_ply(cloud: PointCloud, path) -> None:
    _io.write_ply(path, cloud.points, cloud.colors)


def read_ply(path) -> PointCloud:
    pts, cols = _io.read_ply(path)
    return PointCloud(pts, cols, np.full(len(pts), -1, dtype=np.int64))


def _fuse_view(r, depths, cameras, images, masks, cfg: FusionConfig):
    cam_r = cameras[r]
    d_r = np.asarray(depths[r], dtype=np.float64)
    valid = np.isfinite(d_r) & (d_r > 0)
    if masks is not None:
        valid &= masks[r]
    ys, xs = np.nonzero(valid)
    n_valid = len(xs)
    counts = np.full(d_r.shape, -1, dtype=np.int64)
    if n_valid == 0:
        return np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 2), dtype=np.int64), 0.0, counts
    xf = xs.astype(np.float64)
    yf = ys.astype(np.float64)
    d = d_r[ys, xs]
    X = cam_r.unproject(xf, yf, d)

    others = [v for v in range(len(cameras)) if v != r]
    n_ok = np.zeros(n_valid, dtype=np.int64)
    contrib = np.zeros((len(others), n_valid, 3))
    for k, v in enumerate(others):
        cam_v = cameras[v]
        d_v = np.asarray(depths[v], dtype=np.float64)
        u, w, d_proj = cam_v.project(X)
        good_v = np.isfinite(d_v) & (d_v > 0)
        if masks is not None:
            good_v &= masks[v]
        front = d_proj > 0
        u = np.where(front, u, -1.0)
        w = np.where(front, w, -1.0)
        d_s, inb = bilinear_sample_many(np.where(good_v, d_v, 0.0), u, w)
        support, _ = bilinear_sample_many(good_v.astype(np.float64), u, w)
        ok = inb & (support >= 1.0 - 1e-12)
        d_s = np.where(ok, d_s, 1.0)
        ok &= np.abs(d_proj - d_s) <= cfg.max_relative_depth_diff * d_s
        Xv = cam_v.unproject(u, w, d_s)
        xb, yb, _ = cam_r.project(Xv)
        ok &= np.hypot(xb - xf, yb - yf) <= cfg.max_reprojection_dist
        n_ok += ok
        contrib[k] = np.where(ok[:, None], Xv, 0.0)

    counts[ys, xs] = n_ok
    keep = n_ok >= cfg.min_consistent_views
    # sort contributions per coordinate so the sum ignores view order
    total = X + np.sort(contrib, axis=0).sum(axis=0)
    pts = (total / (n_ok + 1)[:, None])[keep]
    img = np.asarray(images[r], dtype=np.float64)
    cols = img[ys[keep], xs[keep]] if img.ndim == 3 else np.repeat(img[ys[keep], xs[keep]][:, None], 3, axis=1)
    pix = np.stack([xs[keep], ys[keep]], axis=1)
    return pts, cols, pix, float(keep.sum()) / n_valid, counts


def fuse_depth_maps(
    depths: Sequence[np.ndarray],
    cameras: Sequence[CameraModel],
    images: Sequence[np.ndarray],
    config: FusionConfig | None = None,
    masks: Sequence[np.ndarray] | None = None,
    workers: int | None = None,
) -> PointCloud:
    """Fuse depth maps by cross-view geometric consistency.

    Every view acts as the reference in turn. A reference pixel is projected
    into each other view; that view agrees when its own depth at the landing
    spot matches the projected depth (relative tolerance) and sends the point
    back within the pixel tolerance. Pixels with enough agreeing views emit the
    average of the agreeing 3D points, colored from the reference image.

    Args:
        depths: per-view H x W depth maps; non-positive or non-finite means empty.
        cameras: one camera per view, matching the depth map size.
        images: per-view colors in [0, 1].
        config: consistency thresholds.
        masks: optional per-view boolean masks of usable depth.
        workers: thread count across reference views.
    """
    cfg = config or FusionConfig()
    n = len(depths)
    if n < 2 or len(cameras) != n or len(images) != n:
        raise InputError(f"need >= 2 views with cameras and images, got {n}, {len(cameras)}, {len(images)}")
    for i, (d, c) in enumerate(zip(depths, cameras)):
        if np.shape(d) != (c.height, c.width):
            raise InputError(f"view {i}: depth shape {np.shape(d)} != camera size {c.image_size}")
    parts = pmap(lambda r: _fuse_view(r, depths, cameras, images, masks, cfg), range(n), workers)
    pts = [p[0] for p in parts]
    return PointCloud(
        np.concatenate(pts).reshape(-1, 3),
        np.concatenate([p[1] for p in parts]).reshape(-1, 3),
        np.concatenate([np.full(len(p[0]), r, dtype=np.int64) for r, p in enumerate(parts)]),
        np.concatenate([p[2] for p in parts]).reshape(-1, 2),
        [p[3] for p in parts],
        [p[4] for p in parts],
    )

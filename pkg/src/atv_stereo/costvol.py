"""Depth hypotheses and variance cost volumes.

Each cost cell is the cross-view variance of features warped onto a reference
pixel at one hypothesized depth, averaged over channels. Cells seen by fewer
than two views carry :data:`SENTINEL_COST`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InputError, PipelineError
from .features import FeatureMap
from .geometry import CameraModel, bilinear_sample_many, compose_warp, warp_points
from .parallel import pmap

SENTINEL_COST = 1e6


@dataclass(eq=False)
class HypothesisVolume:
    depths: np.ndarray  # D x H x W
    kind: str = "uniform"
    stage_index: int = 1

    @property
    def planes(self) -> int:
        return self.depths.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.depths.shape[1:]


@dataclass(eq=False)
class CostVolume:
    costs: np.ndarray  # D x H x W, float64
    valid_views: np.ndarray  # D x H x W, uint8

    @property
    def sentinel_mask(self) -> np.ndarray:
        return self.valid_views < 2


def cell_centered(lower, upper, D: int) -> np.ndarray:
    """``lower + (j + 0.5) * (upper - lower) / D`` stacked along a new leading axis."""
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    step = (upper - lower) / D
    j = (np.arange(D, dtype=np.float64) + 0.5).reshape((D,) + (1,) * lower.ndim)
    return lower + j * step


def uniform_hypotheses(d_min: float, d_max: float, D: int, size: tuple[int, int], stage_index: int = 1) -> HypothesisVolume:
    """Fronto-parallel sweep: ``D`` cell-centered planes over ``[d_min, d_max]``.

    The spacing is ``(d_max - d_min) / D``.
    """
    if not (0 < d_min < d_max):
        raise InputError(f"need 0 < d_min < d_max, got {d_min}, {d_max}")
    if D < 1:
        raise InputError(f"need D >= 1, got {D}")
    w, h = size
    planes = cell_centered(d_min, d_max, D)
    depths = np.broadcast_to(planes[:, None, None], (D, h, w)).copy()
    return HypothesisVolume(depths, "uniform", stage_index)


def _check_inputs(features: Sequence[FeatureMap], cameras: Sequence[CameraModel], hyps: HypothesisVolume):
    if len(features) < 2 or len(features) != len(cameras):
        raise InputError(f"need >= 2 views with one camera each, got {len(features)} maps, {len(cameras)} cameras")
    h, w = features[0].shape
    c = features[0].channels
    for i, (f, cam) in enumerate(zip(features, cameras)):
        if f.channels != c or f.scale_index != features[0].scale_index:
            raise InputError(f"view {i}: feature scale/channels differ from the reference")
        if cam.image_size != (f.shape[1], f.shape[0]):
            raise InputError(f"view {i}: camera size {cam.image_size} != feature size {(f.shape[1], f.shape[0])}")
    if hyps.shape != (h, w):
        raise InputError(f"hypotheses sized {hyps.shape}, reference features {(h, w)}")


class _Sweep:
    """Precomputed warps and pixel grid shared by all planes of one volume."""

    def __init__(self, features, cameras):
        self.ref = features[0].values.astype(np.float64)
        self.sources = [f.values for f in features[1:]]
        self.warps = [compose_warp(cam, cameras[0]) for cam in cameras[1:]]
        h, w = features[0].shape
        self.ys, self.xs = np.mgrid[0:h, 0:w].astype(np.float64)

    def plane(self, depth: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Cost and valid-view count for one depth plane (an H x W depth map)."""
        ref = self.ref
        # moments of (view - reference) keep identical views exactly at zero cost
        s1 = np.zeros_like(ref)
        s2 = np.zeros_like(ref)
        count = np.ones(depth.shape, dtype=np.int64)
        for H, src in zip(self.warps, self.sources):
            xw, yw, ok = warp_points(H, self.xs, self.ys, depth)
            vals, valid = bilinear_sample_many(src, xw, yw)
            valid &= ok
            diff = np.where(valid[..., None], vals - ref, 0.0)
            s1 += diff
            s2 += diff * diff
            count += valid
        n = count[..., None].astype(np.float64)
        mean = s1 / n
        var = np.maximum(s2 / n - mean * mean, 0.0)
        cost = var.mean(axis=-1)
        cost[count < 2] = SENTINEL_COST
        return cost, count.astype(np.uint8)


def cost_slice(features: Sequence[FeatureMap], cameras: Sequence[CameraModel], depth: np.ndarray):
    """Cost and valid-view count of a single plane, computed in isolation."""
    return _Sweep(features, cameras).plane(np.asarray(depth, dtype=np.float64))


def build_cost_volume(
    features: Sequence[FeatureMap],
    cameras: Sequence[CameraModel],
    hyps: HypothesisVolume,
    workers: int | None = None,
) -> CostVolume:
    """Variance cost volume over all hypothesis planes.

    Args:
        features: one map per view at the same scale; index 0 is the reference.
        cameras: cameras matching the feature resolution.
        hyps: per-pixel depth hypotheses sized to the reference map.
        workers: thread count for the per-plane loop.

    Raises:
        InputError: on mismatched shapes or fewer than two views.
        PipelineError: if no source view lands inside its image anywhere.
    """
    _check_inputs(features, cameras, hyps)
    sweep = _Sweep(features, cameras)
    D = hyps.planes
    h, w = hyps.shape
    costs = np.empty((D, h, w), dtype=np.float64)
    counts = np.empty((D, h, w), dtype=np.uint8)

    def run(j):
        costs[j], counts[j] = sweep.plane(hyps.depths[j])

    pmap(run, range(D), workers)
    if counts.max() < 2:
        raise PipelineError("no source view contributes to any cost cell")
    return CostVolume(costs, counts)

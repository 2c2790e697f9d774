"""Point-cloud accuracy/completeness and depth-map error metrics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import InputError, StatisticsError
from .geometry import CameraModel


@dataclass
class ReconstructionScore:
    accuracy: float
    completeness: float
    overall: float
    max_dist: float
    empty_prediction: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def pair_distances(q: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix ``len(q) x len(t)``."""
    diff = q[:, None, :] - t[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def nearest_distance_bruteforce(query: np.ndarray, target: np.ndarray, max_dist: float, chunk: int = 512) -> np.ndarray:
    """Exhaustive nearest-neighbor distance, capped at ``max_dist``."""
    out = np.full(len(query), max_dist)
    if len(target) == 0:
        return out
    for s in range(0, len(query), chunk):
        d = pair_distances(query[s : s + chunk], target).min(axis=1)
        out[s : s + chunk] = np.minimum(d, max_dist)
    return out


def nearest_distance(query: np.ndarray, target: np.ndarray, max_dist: float) -> np.ndarray:
    """Nearest-neighbor distance from each query to ``target``, capped at ``max_dist``.

    KD-tree backed; exact for every pair closer than ``max_dist``.
    """
    query = np.asarray(query, dtype=np.float64).reshape(-1, 3)
    out = np.full(len(query), float(max_dist))
    if len(query) == 0 or len(target) == 0:
        return out
    d, _ = cKDTree(np.asarray(target, dtype=np.float64).reshape(-1, 3)).query(query, k=1, distance_upper_bound=max_dist)
    return np.minimum(d, max_dist)


def accuracy_completeness(pred: np.ndarray, gt: np.ndarray, max_dist: float) -> ReconstructionScore:
    """Mean capped nearest-neighbor distances pred->gt (accuracy) and gt->pred (completeness).

    An empty prediction is fully penalized: both terms equal ``max_dist`` and
    ``empty_prediction`` is set.
    """
    pred = np.asarray(pred, dtype=np.float64).reshape(-1, 3)
    gt = np.asarray(gt, dtype=np.float64).reshape(-1, 3)
    if len(gt) == 0:
        raise InputError("ground-truth cloud is empty")
    if not max_dist > 0:
        raise InputError(f"max_dist must be positive, got {max_dist}")
    if len(pred) == 0:
        return ReconstructionScore(max_dist, max_dist, max_dist, max_dist, True)
    acc_d = nearest_distance(pred, gt, max_dist)
    comp_d = nearest_distance(gt, pred, max_dist)
    acc = math.fsum(acc_d.tolist()) / len(acc_d)
    comp = math.fsum(comp_d.tolist()) / len(comp_d)
    return ReconstructionScore(acc, comp, (acc + comp) / 2, max_dist)


def grid_dedupe(points: np.ndarray, cell: float) -> np.ndarray:
    """Keep the first point falling in each cubic cell, preserving input order."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        return pts
    keys = np.floor(pts / cell).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    return pts[np.sort(first)]


def gt_cloud_from_depths(
    depths: Sequence[np.ndarray],
    cameras: Sequence[CameraModel],
    masks: Sequence[np.ndarray] | None = None,
    cell: float | None = None,
) -> np.ndarray:
    """One point per valid ground-truth pixel of every view.

    Args:
        depths: per-view ground-truth depth (non-positive = no surface).
        cameras: matching cameras.
        masks: optional extra validity masks.
        cell: grid-deduplication cell size; None keeps every point.
    """
    pts = []
    for i, (d, cam) in enumerate(zip(depths, cameras)):
        d = np.asarray(d, dtype=np.float64)
        valid = np.isfinite(d) & (d > 0)
        if masks is not None:
            valid &= masks[i]
        ys, xs = np.nonzero(valid)
        pts.append(cam.unproject(xs, ys, d[ys, xs]))
    cloud = np.concatenate(pts) if pts else np.zeros((0, 3))
    return grid_dedupe(cloud, cell) if cell else cloud


def depth_error(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray, spacing: float = 1.0) -> dict:
    """Masked MAE, RMSE and fractions within 1x/2x/4x ``spacing``.

    Raises:
        StatisticsError: if the mask selects no pixel.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if pred.shape != gt.shape or gt.shape != mask.shape:
        raise InputError(f"shape mismatch {pred.shape} / {gt.shape} / {mask.shape}")
    n = int(mask.sum())
    if n == 0:
        raise StatisticsError("mask selects no pixels")
    err = np.abs(pred[mask] - gt[mask])
    inliers = {f"within_{m}x": int(np.count_nonzero(err <= m * spacing)) / n for m in (1, 2, 4)}
    return {
        "mae": math.fsum(err.tolist()) / n,
        "rmse": math.sqrt(math.fsum((err * err).tolist()) / n),
        "spacing": spacing,
        "pixels": n,
        **inliers,
    }

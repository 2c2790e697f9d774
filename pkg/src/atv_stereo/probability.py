"""Cost regularization, depth-wise softmax, and moments of the depth distribution."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .costvol import SENTINEL_COST, CostVolume, HypothesisVolume
from .errors import InputError
from .parallel import pmap


@dataclass(eq=False)
class ProbabilityVolume:
    probs: np.ndarray  # D x H x W


@dataclass(eq=False)
class DepthEstimate:
    depth: np.ndarray
    sigma: np.ndarray
    stage_index: int = 1


def _box_slice(cost: np.ndarray, finite: np.ndarray, radius: int) -> np.ndarray:
    size = 2 * radius + 1
    w = finite.astype(np.float64)
    num = ndimage.uniform_filter(np.where(finite, cost, 0.0), size, mode="constant", cval=0.0)
    den = ndimage.uniform_filter(w, size, mode="constant", cval=0.0)
    out = np.where(finite, num / np.where(den > 0, den, 1.0), SENTINEL_COST)
    return out


def regularize_cost(costs: CostVolume, radius: int, workers: int | None = None) -> CostVolume:
    """Box-filter each depth slice over non-sentinel cells.

    Sentinel cells stay sentinel and never contribute to their neighbours;
    windows are truncated at the image border.
    """
    if radius < 0:
        raise InputError(f"radius must be >= 0, got {radius}")
    if radius == 0:
        return CostVolume(costs.costs.copy(), costs.valid_views.copy())
    finite = ~costs.sentinel_mask
    out = np.empty_like(costs.costs)

    def run(j):
        out[j] = _box_slice(costs.costs[j], finite[j], radius)

    pmap(run, range(costs.costs.shape[0]), workers)
    return CostVolume(out, costs.valid_views.copy())


def softmax_probability(costs: CostVolume, beta: float) -> ProbabilityVolume:
    """``softmax(-beta * cost)`` along the depth axis, max-shifted for stability."""
    if not beta > 0:
        raise InputError(f"beta must be positive, got {beta}")
    score = -beta * np.asarray(costs.costs, dtype=np.float64)
    score -= score.max(axis=0, keepdims=True)
    e = np.exp(score)
    return ProbabilityVolume(e / e.sum(axis=0, keepdims=True))


def _check(probs: ProbabilityVolume, hyps: HypothesisVolume):
    if probs.probs.shape != hyps.depths.shape:
        raise InputError(f"probability shape {probs.probs.shape} != hypothesis shape {hyps.depths.shape}")


def expect_depth(probs: ProbabilityVolume, hyps: HypothesisVolume) -> np.ndarray:
    """Probability-weighted mean of the per-pixel hypotheses."""
    _check(probs, hyps)
    depth = np.sum(probs.probs * hyps.depths, axis=0)
    # a convex combination may drift an ulp past its support
    return np.clip(depth, hyps.depths.min(axis=0), hyps.depths.max(axis=0))


def variance_depth(probs: ProbabilityVolume, hyps: HypothesisVolume, depth: np.ndarray) -> np.ndarray:
    """Per-pixel variance ``sum_j P_j (L_j - depth)^2``."""
    _check(probs, hyps)
    if np.shape(depth) != hyps.shape:
        raise InputError(f"depth shape {np.shape(depth)} != {hyps.shape}")
    return np.sum(probs.probs * (hyps.depths - depth) ** 2, axis=0)


def estimate(probs: ProbabilityVolume, hyps: HypothesisVolume, stage_index: int = 1) -> DepthEstimate:
    depth = expect_depth(probs, hyps)
    var = variance_depth(probs, hyps, depth)
    return DepthEstimate(depth, np.sqrt(var), stage_index)

"""Three-stage coarse-to-fine depth estimation.

Stage 1 sweeps the full depth range at quarter resolution. Stages 2 and 3
sample thin per-pixel volumes inside the previous stage's confidence
interval, upsampled to half and full resolution.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .costvol import HypothesisVolume, build_cost_volume, uniform_hypotheses
from .errors import InputError
from .features import SCALE_FACTORS, FeatureConfig, FeatureMap, build_feature_pyramid, scale_size
from .geometry import CameraModel
from .parallel import pmap
from .probability import DepthEstimate, ProbabilityVolume, estimate, regularize_cost, softmax_probability
from .uncertainty import IntervalMap, atv_hypotheses, confidence_interval

logger = logging.getLogger(__name__)


@dataclass
class CascadeConfig:
    d_min: float
    d_max: float
    n_views: int = 5
    planes: tuple[int, int, int] = (64, 32, 8)
    lam: float = 1.5
    beta: float = 10.0
    smoothing_radii: tuple[int, int, int] = (2, 1, 1)
    min_interval_width: float = 0.1
    features: FeatureConfig = field(default_factory=FeatureConfig)
    keep_probabilities: bool = False

    def __post_init__(self):
        self.planes = tuple(int(p) for p in self.planes)
        self.smoothing_radii = tuple(int(r) for r in self.smoothing_radii)
        if len(self.planes) != 3 or self.planes[0] < 1 or any(p < 0 for p in self.planes):
            raise InputError(f"planes must be (D1 >= 1, D2 >= 0, D3 >= 0), got {self.planes}")
        if self.planes[1] == 0 and self.planes[2] != 0:
            raise InputError("stage 3 requires stage 2")
        if not 0 < self.d_min < self.d_max:
            raise InputError(f"need 0 < d_min < d_max, got {self.d_min}, {self.d_max}")
        if self.n_views < 2:
            raise InputError(f"n_views must be >= 2, got {self.n_views}")
        if not (self.lam > 0 and self.beta > 0 and self.min_interval_width > 0):
            raise InputError("lambda, beta and min_interval_width must be positive")
        if len(self.smoothing_radii) != 3 or any(r < 0 for r in self.smoothing_radii):
            raise InputError(f"smoothing_radii must be three counts >= 0, got {self.smoothing_radii}")

    @property
    def n_stages(self) -> int:
        return sum(1 for p in self.planes if p > 0)

    @classmethod
    def standard(cls, d_min: float, d_max: float, **overrides) -> "CascadeConfig":
        """Planes (64, 32, 8), lambda 1.5, five views, over the given depth range."""
        base = dict(n_views=5, planes=(64, 32, 8), lam=1.5)
        base.update(overrides)
        return cls(d_min, d_max, **base)


@dataclass(eq=False)
class StageOutput:
    stage: int
    estimate: DepthEstimate
    intervals: IntervalMap
    hypotheses: HypothesisVolume
    probabilities: ProbabilityVolume | None = None
    # the depth interval this stage's hypotheses tile, per pixel
    span: IntervalMap | None = None

    @property
    def size(self) -> tuple[int, int]:
        h, w = self.estimate.depth.shape
        return w, h


def run_stage(
    stage: int,
    features: Sequence[FeatureMap],
    cameras: Sequence[CameraModel],
    hyps: HypothesisVolume,
    config: CascadeConfig,
    workers: int | None = None,
    span: IntervalMap | None = None,
) -> StageOutput:
    """Cost volume, smoothing, softmax, expectation, variance, interval."""
    if any(f.scale_index != stage for f in features):
        raise InputError(f"stage {stage} needs scale-{stage} features")
    cost = build_cost_volume(features, cameras, hyps, workers)
    cost = regularize_cost(cost, config.smoothing_radii[stage - 1], workers)
    probs = softmax_probability(cost, config.beta)
    est = estimate(probs, hyps, stage)
    intervals = confidence_interval(est, config.lam, config.min_interval_width, (config.d_min, config.d_max))
    return StageOutput(stage, est, intervals, hyps, probs if config.keep_probabilities else None, span)


def upsample2(m: np.ndarray, size: tuple[int, int] | None = None) -> np.ndarray:
    """Bilinear 2x upsampling with pixel-center alignment, optionally cropped to ``size=(w, h)``.

    Output pixel ``x`` reads input coordinate ``(x + 0.5) / 2 - 0.5`` clamped to the
    image, which makes area-averaging the result return affine maps unchanged.
    """
    h, w = m.shape
    W2, H2 = size if size is not None else (2 * w, 2 * h)

    def axis(n_out, n_in):
        c = np.clip((np.arange(n_out) + 0.5) / 2 - 0.5, 0, n_in - 1)
        i0 = np.minimum(np.floor(c).astype(np.intp), max(n_in - 2, 0))
        f = c - i0
        i1 = np.minimum(i0 + 1, n_in - 1)
        return i0, i1, f

    y0, y1, fy = axis(H2, h)
    x0, x1, fx = axis(W2, w)
    rows = m[y0] * (1 - fy)[:, None] + m[y1] * fy[:, None]
    return rows[:, x0] * (1 - fx) + rows[:, x1] * fx


def upsample_intervals(intervals: IntervalMap, size: tuple[int, int] | None = None) -> IntervalMap:
    """Upsample lower and upper bounds independently; ordering is preserved."""
    return IntervalMap(upsample2(intervals.lower, size), upsample2(intervals.upper, size), intervals.lambda_used)


def upsample_estimate(est: DepthEstimate, intervals: IntervalMap, factor: int = 2) -> IntervalMap:
    """The interval map of ``est`` at twice the resolution."""
    if factor != 2:
        raise InputError(f"only factor 2 is supported, got {factor}")
    if intervals.lower.shape != est.depth.shape:
        raise InputError("interval and estimate shapes differ")
    return upsample_intervals(intervals)


def scaled_cameras(cameras: Sequence[CameraModel], stage: int) -> list[CameraModel]:
    return [c.scaled(SCALE_FACTORS[stage]) for c in cameras]


def select_views(cameras: Sequence[CameraModel], reference: int, count: int) -> list[int]:
    """``reference`` followed by the ``count - 1`` views with the nearest camera centers.

    Ties break by view index, so the order is deterministic.
    """
    if not 0 <= reference < len(cameras):
        raise InputError(f"reference view {reference} out of range for {len(cameras)} views")
    c0 = cameras[reference].center
    others = [v for v in range(len(cameras)) if v != reference]
    others.sort(key=lambda v: (float(np.linalg.norm(cameras[v].center - c0)), v))
    return [reference] + others[: max(count - 1, 0)]


def run_cascade(
    views: Sequence[np.ndarray],
    cameras: Sequence[CameraModel],
    config: CascadeConfig,
    workers: int | None = None,
    pyramids: Sequence[tuple[FeatureMap, FeatureMap, FeatureMap]] | None = None,
) -> list[StageOutput]:
    """Run all enabled stages with ``views[0]`` as the reference.

    Args:
        views: H x W x 3 float images, reference first.
        cameras: one full-resolution camera per view.
        config: cascade parameters.
        workers: thread count for the data-parallel kernels.
        pyramids: precomputed feature pyramids, one per view, to skip extraction.

    Returns:
        One :class:`StageOutput` per enabled stage, coarse to fine.
    """
    if len(views) != len(cameras) or len(views) < 2:
        raise InputError(f"need >= 2 views with matching cameras, got {len(views)} views, {len(cameras)} cameras")
    W, H = cameras[0].image_size
    for i, (img, cam) in enumerate(zip(views, cameras)):
        if img.shape[:2] != (cam.height, cam.width):
            raise InputError(f"view {i}: image {img.shape[:2]} does not match camera size {cam.image_size}")
    if pyramids is None:
        pyramids = pmap(lambda a: build_feature_pyramid(a[1], config.features, a[0]), list(enumerate(views)), workers)

    outputs: list[StageOutput] = []
    for stage in range(1, config.n_stages + 1):
        size = scale_size(W, H, stage)
        D = config.planes[stage - 1]
        if stage == 1:
            hyps = uniform_hypotheses(config.d_min, config.d_max, D, size, 1)
            span = IntervalMap(np.full(size[::-1], config.d_min), np.full(size[::-1], config.d_max), config.lam)
        else:
            span = upsample_intervals(outputs[-1].intervals, size)
            hyps = atv_hypotheses(span, D, stage)
        feats = [p[stage - 1] for p in pyramids]
        out = run_stage(stage, feats, scaled_cameras(cameras, stage), hyps, config, workers, span)
        logger.debug("stage %d: %dx%d, %d planes", stage, size[0], size[1], D)
        outputs.append(out)
    return outputs

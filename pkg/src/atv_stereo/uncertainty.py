"""Variance-based confidence intervals, adaptive thin volumes, and interval statistics."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .costvol import HypothesisVolume, cell_centered
from .errors import InputError, StatisticsError
from .probability import DepthEstimate


@dataclass(eq=False)
class IntervalMap:
    lower: np.ndarray
    upper: np.ndarray
    lambda_used: float = 1.5

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower


@dataclass
class UncertaintyStats:
    coverage_ratio: float
    mean_width: float
    median_width: float
    planes: int
    unit_distance: float
    valid_pixels: int
    histogram: list[tuple[float, float, int]] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["histogram"] = [list(b) for b in self.histogram]
        return d

    def csv_row(self, stage: int) -> list:
        return [stage, self.coverage_ratio, self.mean_width, self.median_width, self.planes, self.unit_distance]


STATS_CSV_HEADER = ["stage", "coverage", "mean_width", "median_width", "D", "unit_distance"]


def confidence_interval(
    est: DepthEstimate,
    lam: float,
    min_width: float,
    clamp: tuple[float, float] | None = None,
) -> IntervalMap:
    """``[depth - lam*sigma, depth + lam*sigma]`` with a width floor and range clamp.

    Intervals narrower than ``min_width`` are widened symmetrically. Clamping
    to ``clamp = (d_min, d_max)`` happens last; an interval clipped below
    ``min_width`` is pushed back inside the range to regain the floor.
    """
    if not lam > 0:
        raise InputError(f"lambda must be positive, got {lam}")
    if not min_width > 0:
        raise InputError(f"min_width must be positive, got {min_width}")
    half = np.maximum(lam * np.asarray(est.sigma, dtype=np.float64), 0.5 * min_width)
    lower = est.depth - half
    upper = est.depth + half
    if clamp is not None:
        d_min, d_max = clamp
        if not d_min < d_max:
            raise InputError(f"clamp range must satisfy d_min < d_max, got {clamp}")
        floor = min(min_width, d_max - d_min)
        below = lower < d_min
        above = upper > d_max
        lower = np.clip(lower, d_min, d_max)
        upper = np.clip(upper, d_min, d_max)
        # only clipping can shrink an interval below the floor; unclipped
        # intervals may sit a rounding error under it and stay put
        short = (below | above) & (upper - lower < floor)
        upper = np.where(short & below, d_min + floor, upper)
        lower = np.where(short & ~below, d_max - floor, lower)
    return IntervalMap(lower, upper, lam)


def atv_hypotheses(intervals: IntervalMap, D: int, stage_index: int = 2) -> HypothesisVolume:
    """``D`` cell-centered samples per pixel inside each interval."""
    if D < 1:
        raise InputError(f"need D >= 1, got {D}")
    return HypothesisVolume(cell_centered(intervals.lower, intervals.upper, D), "adaptive", stage_index)


def width_histogram(widths: np.ndarray, bin_width: float = 0.5) -> list[tuple[float, float, int]]:
    """Counts of ``widths`` in half-open bins ``[k*bin_width, (k+1)*bin_width)``."""
    if widths.size == 0:
        return []
    idx = np.floor(widths / bin_width).astype(np.int64)
    idx = np.maximum(idx, 0)
    counts = np.bincount(idx)
    return [(k * bin_width, (k + 1) * bin_width, int(c)) for k, c in enumerate(counts)]


def covered(intervals: IntervalMap, gt_depth: np.ndarray) -> np.ndarray:
    return (intervals.lower <= gt_depth) & (gt_depth <= intervals.upper)


def uncertainty_stats(
    intervals: IntervalMap,
    gt_depth: np.ndarray | None,
    valid_mask: np.ndarray,
    D_next: int,
    bin_width: float = 0.5,
) -> UncertaintyStats:
    """Coverage, width statistics and histogram over ``valid_mask`` pixels.

    ``gt_depth`` may be None, in which case coverage is reported as NaN.

    Raises:
        StatisticsError: if no pixel is valid.
    """
    valid_mask = np.asarray(valid_mask, dtype=bool)
    if valid_mask.shape != intervals.lower.shape or (gt_depth is not None and np.shape(gt_depth) != valid_mask.shape):
        raise InputError("interval, ground-truth and mask shapes differ")
    n = int(valid_mask.sum())
    if n == 0:
        raise StatisticsError("no valid pixels")
    widths = intervals.width[valid_mask]
    if gt_depth is None:
        coverage = math.nan
    else:
        coverage = int(covered(intervals, gt_depth)[valid_mask].sum()) / n
    mean_width = math.fsum(widths.tolist()) / n
    return UncertaintyStats(
        coverage_ratio=coverage,
        mean_width=mean_width,
        median_width=float(np.median(widths)),
        planes=int(D_next),
        unit_distance=mean_width / D_next,
        valid_pixels=n,
        histogram=width_histogram(widths, bin_width),
    )


def bound_maps(intervals: IntervalMap, gt_depth: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(gt - lower, upper - gt)``; both nonnegative exactly where the interval covers gt."""
    if np.shape(gt_depth) != intervals.lower.shape:
        raise InputError("ground-truth shape differs from interval shape")
    return gt_depth - intervals.lower, intervals.upper - gt_depth


def stats_csv(rows: list[tuple[int, UncertaintyStats]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STATS_CSV_HEADER)
    for stage, s in rows:
        w.writerow(s.csv_row(stage))
    return buf.getvalue()


def histogram_csv(stats: UncertaintyStats) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bin_lower", "bin_upper", "count"])
    for lo, hi, c in stats.histogram:
        w.writerow([lo, hi, c])
    return buf.getvalue()

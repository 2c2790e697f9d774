"""Deterministic multi-scale filter-bank features.

Stands in for a learned feature extractor: three maps per view at 1/4, 1/2
and full resolution with 32, 16 and 8 channels by default. Each channel is
standardized per image so the variance cost is scale-free.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy import ndimage

from .errors import InputError

SCALE_FACTORS = {1: 4, 2: 2, 3: 1}


@dataclass(frozen=True)
class FeatureConfig:
    channels: tuple[int, int, int] = (32, 16, 8)
    gaussian_radii: tuple[float, ...] = (1.0, 2.0, 4.0)
    window_radii: tuple[int, ...] = (2, 4)
    # scipy.ndimage boundary mode; "wrap" makes features exactly shift-equivariant
    boundary: str = "reflect"

    def __post_init__(self):
        if len(self.channels) != 3 or any(c < 1 for c in self.channels):
            raise InputError(f"channels must be three positive counts, got {self.channels}")
        if not self.gaussian_radii or not self.window_radii:
            raise InputError("need at least one gaussian and one window radius")
        if self.boundary not in ("reflect", "nearest", "mirror", "wrap"):
            raise InputError(f"unsupported boundary mode {self.boundary!r}")


@dataclass(eq=False)
class FeatureMap:
    values: np.ndarray  # H_s x W_s x C, float32
    scale_index: int
    source_view: int = 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape[:2]

    @property
    def channels(self) -> int:
        return self.values.shape[2]


def scale_size(width: int, height: int, scale_index: int) -> tuple[int, int]:
    """``(width, height)`` of the feature map at ``scale_index`` (1, 2 or 3)."""
    f = SCALE_FACTORS[scale_index]
    return -(-width // f), -(-height // f)


def area_downsample(image: np.ndarray, factor: int) -> np.ndarray:
    """Average ``factor`` x ``factor`` blocks; trailing partial blocks average what exists."""
    if factor == 1:
        return np.asarray(image, dtype=np.float64)
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape[:2]
    rows = np.arange(0, h, factor)
    cols = np.arange(0, w, factor)
    sums = np.add.reduceat(np.add.reduceat(img, rows, axis=0), cols, axis=1)
    rc = np.minimum(rows + factor, h) - rows
    cc = np.minimum(cols + factor, w) - cols
    counts = np.outer(rc, cc).astype(np.float64)
    if img.ndim == 3:
        counts = counts[..., None]
    return sums / counts


def _sources(image: np.ndarray) -> list[np.ndarray]:
    if image.ndim == 2:
        return [image]
    gray = image.mean(axis=2)
    return [gray] + [image[..., c] for c in range(image.shape[2])]


def _descriptors(src: np.ndarray, level: int, cfg: FeatureConfig) -> Iterator[np.ndarray]:
    m = 2.0**level
    mode = cfg.boundary
    if level == 0:
        yield src
    else:
        yield ndimage.gaussian_filter(src, m, mode=mode)
    for r in cfg.gaussian_radii:
        s = r * m
        yield ndimage.gaussian_filter(src, s, order=(0, 1), mode=mode)
        yield ndimage.gaussian_filter(src, s, order=(1, 0), mode=mode)
    for r in cfg.window_radii:
        size = int(2 * r * m + 1)
        c = src - src.mean()
        mean = ndimage.uniform_filter(c, size, mode=mode)
        var = ndimage.uniform_filter(c * c, size, mode=mode) - mean * mean
        yield np.sqrt(np.maximum(var, 0.0))
        yield mean


def _channel_stream(image: np.ndarray, cfg: FeatureConfig) -> Iterator[np.ndarray]:
    level = 0
    while True:
        for src in _sources(image):
            yield from _descriptors(src, level, cfg)
        level += 1


def standardize(channel: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Zero mean, unit variance over the image; near-constant channels become zero."""
    mu = channel.mean()
    centered = channel - mu
    sd = np.sqrt(np.mean(centered**2))
    scale = max(1.0, float(np.abs(channel).max()))
    if sd <= eps * scale:
        return np.zeros_like(channel)
    return centered / sd


def extract_features(image: np.ndarray, channels: int, cfg: FeatureConfig) -> np.ndarray:
    """Filter bank of ``channels`` standardized channels on ``image`` at its own resolution."""
    out = []
    for ch in _channel_stream(image, cfg):
        out.append(standardize(ch))
        if len(out) == channels:
            break
    return np.stack(out, axis=-1).astype(np.float32)


def build_feature_pyramid(
    image: np.ndarray, config: FeatureConfig | None = None, view_id: int = 0
) -> tuple[FeatureMap, FeatureMap, FeatureMap]:
    """Features at scales 1, 2, 3 (1/4, 1/2 and full resolution).

    Args:
        image: H x W x C (or H x W) float image.
        config: channel counts and filter radii.
        view_id: stored on each returned map.

    Raises:
        InputError: if the image is smaller than 8 x 8.
    """
    cfg = config or FeatureConfig()
    img = np.asarray(image, dtype=np.float64)
    if img.ndim not in (2, 3) or img.shape[0] < 8 or img.shape[1] < 8:
        raise InputError(f"image must be at least 8x8, got shape {img.shape}")
    maps = []
    for k in (1, 2, 3):
        small = area_downsample(img, SCALE_FACTORS[k])
        maps.append(FeatureMap(extract_features(small, cfg.channels[k - 1], cfg), k, view_id))
    return tuple(maps)

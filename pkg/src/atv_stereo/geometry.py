"""Pinhole camera algebra: warp matrices, pixel warping and bilinear sampling.

Pixel centers sit at integer coordinates, so an image of width ``W`` spans
``[0, W-1]`` horizontally. All geometry is carried in float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError

PROJ_EPS = 1e-12
# sampling slack in pixels, so round-off at the image edge does not invalidate a sample
SAMPLE_EPS = 1e-9


class GeometryError(InputError):
    """Raised for invalid cameras or singular transforms."""


class InvalidProjection(ArithmeticError):
    """Raised when a warped point lands on (or behind) the camera plane."""


@dataclass(frozen=True, eq=False)
class CameraModel:
    """Intrinsics plus world-to-camera rigid transform for one view.

    Attributes:
        intrinsics: 3x3 upper-triangular ``K`` in pixel units.
        rotation: 3x3 world-to-camera rotation ``R``.
        translation: world-to-camera translation ``t`` (``X_cam = R X + t``).
        image_size: ``(width, height)`` in pixels.
    """

    intrinsics: np.ndarray
    rotation: np.ndarray
    translation: np.ndarray
    image_size: tuple[int, int]

    def __post_init__(self):
        K = np.array(self.intrinsics, dtype=np.float64).reshape(3, 3)
        R = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        w, h = (int(v) for v in self.image_size)
        object.__setattr__(self, "intrinsics", K)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "image_size", (w, h))
        if not (np.all(np.isfinite(K)) and np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise GeometryError("camera contains non-finite entries")
        if np.abs(R.T @ R - np.eye(3)).max() >= 1e-9:
            raise GeometryError("rotation is not orthonormal")
        if K[0, 0] <= 0 or K[1, 1] <= 0 or K[2, 2] != 1.0:
            raise GeometryError(f"intrinsics need positive focal lengths and K[2,2]=1, got\n{K}")
        if np.abs(np.tril(K, -1)).max() != 0.0:
            raise GeometryError("intrinsics must be upper-triangular")
        if w < 1 or h < 1:
            raise GeometryError(f"image size must be >= 1, got {self.image_size}")

    @property
    def width(self) -> int:
        return self.image_size[0]

    @property
    def height(self) -> int:
        return self.image_size[1]

    @property
    def extrinsic(self) -> np.ndarray:
        """4x4 world-to-camera matrix."""
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    def scaled(self, factor: int) -> "CameraModel":
        """Camera for an image downsampled by ``factor`` with area averaging.

        A block of ``factor`` pixels collapses onto one pixel whose center is
        the block center, so ``x_s = (x + 0.5) / factor - 0.5``.
        """
        if factor == 1:
            return self
        K = self.intrinsics.copy()
        K[0, 0] /= factor
        K[0, 1] /= factor
        K[1, 1] /= factor
        K[0, 2] = (K[0, 2] + 0.5) / factor - 0.5
        K[1, 2] = (K[1, 2] + 0.5) / factor - 0.5
        w, h = self.image_size
        size = (-(-w // factor), -(-h // factor))
        return CameraModel(K, self.rotation, self.translation, size)

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Project world points ``(..., 3)`` to pixel ``x``, ``y`` and depth."""
        cam = points @ self.rotation.T + self.translation
        z = cam[..., 2]
        uvw = cam @ self.intrinsics.T
        with np.errstate(divide="ignore", invalid="ignore"):
            return uvw[..., 0] / z, uvw[..., 1] / z, z

    def unproject(self, x, y, depth) -> np.ndarray:
        """World points for pixels ``(x, y)`` at camera-frame ``depth``."""
        x, y, depth = np.broadcast_arrays(
            np.asarray(x, dtype=np.float64),
            np.asarray(y, dtype=np.float64),
            np.asarray(depth, dtype=np.float64),
        )
        pix = np.stack([x * depth, y * depth, depth], axis=-1)
        cam = pix @ np.linalg.inv(self.intrinsics).T
        return (cam - self.translation) @ self.rotation


def _embed(K: np.ndarray) -> np.ndarray:
    M = np.eye(4)
    M[:3, :3] = K
    return M


def compose_warp(src: CameraModel, ref: CameraModel) -> np.ndarray:
    """4x4 matrix mapping ``(x d, y d, d, 1)`` in ``ref`` to homogeneous ``src`` pixels.

    Returns ``K_src T_src T_ref^-1 K_ref^-1`` with the intrinsics embedded as
    4x4 blocks. Depth does not appear here; it enters through the vector.
    """
    for cam in (src, ref):
        if abs(np.linalg.det(cam.intrinsics)) < PROJ_EPS:
            raise GeometryError("singular intrinsics")
    K_ref_inv = np.linalg.inv(_embed(ref.intrinsics))
    T_ref_inv = np.linalg.inv(ref.extrinsic)
    return _embed(src.intrinsics) @ src.extrinsic @ T_ref_inv @ K_ref_inv


def warp_pixel(H: np.ndarray, x: float, y: float, d: float) -> tuple[float, float]:
    """Warp one reference pixel at depth ``d`` through ``H``.

    Raises:
        InvalidProjection: if the projected depth is within 1e-12 of zero.
    """
    if not d > 0:
        raise ValueError(f"depth must be positive, got {d}")
    p = H @ np.array([x * d, y * d, d, 1.0])
    if abs(p[2]) < PROJ_EPS:
        raise InvalidProjection(f"projected depth {p[2]!r} at ({x}, {y}, {d})")
    return float(p[0] / p[2]), float(p[1] / p[2])


def warp_points(H: np.ndarray, x: np.ndarray, y: np.ndarray, d: np.ndarray):
    """Vectorized :func:`warp_pixel`.

    Returns:
        ``(x', y', valid)`` where ``valid`` is false when the projected depth
        is not strictly in front of the source camera.
    """
    A = H[:3, :3]
    b = H[:3, 3]
    xd = x * d
    yd = y * d
    p0 = A[0, 0] * xd + A[0, 1] * yd + A[0, 2] * d + b[0]
    p1 = A[1, 0] * xd + A[1, 1] * yd + A[1, 2] * d + b[1]
    p2 = A[2, 0] * xd + A[2, 1] * yd + A[2, 2] * d + b[2]
    valid = p2 > PROJ_EPS
    safe = np.where(valid, p2, 1.0)
    return p0 / safe, p1 / safe, valid


@dataclass(frozen=True, eq=False)
class SampleResult:
    value: np.ndarray
    valid: bool


def bilinear_sample(image: np.ndarray, x: float, y: float) -> SampleResult:
    """Bilinearly interpolate ``image`` (H x W x C or H x W) at ``(x, y)``."""
    img = np.asarray(image)
    if img.size == 0:
        raise ValueError("image is empty")
    vals, valid = bilinear_sample_many(img, np.array([x], dtype=np.float64), np.array([y], dtype=np.float64))
    return SampleResult(vals[0], bool(valid[0]))


def bilinear_sample_many(image: np.ndarray, x: np.ndarray, y: np.ndarray):
    """Sample ``image`` at arrays of coordinates.

    A sample is valid only if its whole footprint lies in ``[0, W-1] x [0, H-1]``
    (up to ``SAMPLE_EPS`` of round-off); invalid samples come back as zeros.

    Returns:
        ``(values, valid)`` with ``values`` shaped ``x.shape + (C,)`` (or
        ``x.shape`` for a 2D image).
    """
    img = np.asarray(image)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[..., None]
    Hh, Ww, C = img.shape
    shape = np.shape(x)
    xs = np.asarray(x, dtype=np.float64).ravel()
    ys = np.asarray(y, dtype=np.float64).ravel()
    e = SAMPLE_EPS
    valid = (xs >= -e) & (xs <= Ww - 1 + e) & (ys >= -e) & (ys <= Hh - 1 + e)
    xs = np.where(valid, np.clip(xs, 0, Ww - 1), 0.0)
    ys = np.where(valid, np.clip(ys, 0, Hh - 1), 0.0)
    x0 = np.minimum(np.floor(xs).astype(np.intp), max(Ww - 2, 0))
    y0 = np.minimum(np.floor(ys).astype(np.intp), max(Hh - 2, 0))
    fx = xs - x0
    fy = ys - y0
    x1 = np.minimum(x0 + 1, Ww - 1)
    y1 = np.minimum(y0 + 1, Hh - 1)
    flat = img.reshape(Hh * Ww, C)
    out = (
        flat[y0 * Ww + x0] * ((1 - fx) * (1 - fy))[:, None]
        + flat[y0 * Ww + x1] * (fx * (1 - fy))[:, None]
        + flat[y1 * Ww + x0] * ((1 - fx) * fy)[:, None]
        + flat[y1 * Ww + x1] * (fx * fy)[:, None]
    )
    out[~valid] = 0
    out = out.reshape(shape + (C,))
    if squeeze:
        out = out[..., 0]
    return out, valid.reshape(shape)


def look_at(center, target, up=(0.0, -1.0, 0.0)) -> tuple[np.ndarray, np.ndarray]:
    """World-to-camera ``(R, t)`` for a camera at ``center`` looking at ``target``.

    Camera axes follow the usual vision convention: +z forward, +x right,
    +y down.
    """
    c = np.asarray(center, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - c
    z /= np.linalg.norm(z)
    x = np.cross(z, np.asarray(up, dtype=np.float64))
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.stack([x, y, z])
    return R, -R @ c

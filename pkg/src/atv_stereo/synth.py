"""Procedural ray-cast scenes with exact ground-truth depth.

Surfaces carry a world-anchored albedo texture (smoothed checkerboard mixed
with seeded value noise), so every camera sees the same color at the same
surface point. There is no shading.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import InputError
from .geometry import CameraModel, look_at
from .parallel import pmap

# Fixed permutation of 0..63 used to hash value-noise lattice points.
PERM = np.array(
    [
        41, 17, 62, 3, 28, 55, 10, 47, 33, 0, 58, 21, 14, 39, 6, 52,
        25, 60, 12, 44, 31, 8, 49, 19, 36, 2, 57, 27, 63, 15, 42, 5,
        50, 23, 38, 11, 59, 29, 1, 46, 18, 54, 34, 9, 61, 24, 43, 13,
        37, 4, 53, 30, 20, 45, 7, 56, 26, 40, 16, 48, 32, 22, 51, 35,
    ],
    dtype=np.int64,
)


@dataclass
class Plane:
    point: Sequence[float]
    normal: Sequence[float]
    seed: int = 0
    albedo: float = 1.0
    # optional half-space clip: keep hits with (X - clip_point) . clip_normal <= 0
    clip_point: Sequence[float] | None = None
    clip_normal: Sequence[float] | None = None


@dataclass
class Sphere:
    center: Sequence[float]
    radius: float
    seed: int = 0
    albedo: float = 1.0


Primitive = Union[Plane, Sphere]


@dataclass
class TextureParams:
    noise_cell: float = 0.32
    octaves: int = 4
    checker_period: float = 0.4
    checker_sharpness: float = 3.0
    checker_mix: float = 0.4


@dataclass
class SceneSpec:
    primitives: list[Primitive]
    cameras: list[CameraModel]
    d_min: float
    d_max: float
    texture: TextureParams = field(default_factory=TextureParams)
    name: str = "custom"

    def __post_init__(self):
        if not self.primitives:
            raise InputError("scene needs at least one primitive")
        if not 0 < self.d_min < self.d_max:
            raise InputError(f"bad depth range ({self.d_min}, {self.d_max})")

    def to_dict(self) -> dict:
        prims = []
        for p in self.primitives:
            if isinstance(p, Plane):
                d = {"type": "plane", "point": list(map(float, p.point)), "normal": list(map(float, p.normal)),
                     "seed": p.seed, "albedo": p.albedo}
                if p.clip_point is not None:
                    d["clip_point"] = list(map(float, p.clip_point))
                    d["clip_normal"] = list(map(float, p.clip_normal))
            else:
                d = {"type": "sphere", "center": list(map(float, p.center)), "radius": float(p.radius),
                     "seed": p.seed, "albedo": p.albedo}
            prims.append(d)
        cams = [
            {"intrinsics": c.intrinsics.tolist(), "rotation": c.rotation.tolist(),
             "translation": c.translation.tolist(), "image_size": list(c.image_size)}
            for c in self.cameras
        ]
        return {"name": self.name, "primitives": prims, "cameras": cams, "d_min": self.d_min,
                "d_max": self.d_max, "texture": vars(self.texture).copy()}

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        prims: list[Primitive] = []
        for p in d["primitives"]:
            p = dict(p)
            kind = p.pop("type")
            if kind == "plane":
                prims.append(Plane(**p))
            elif kind == "sphere":
                prims.append(Sphere(**p))
            else:
                raise InputError(f"unknown primitive type {kind!r}")
        cams = [CameraModel(c["intrinsics"], c["rotation"], c["translation"], tuple(c["image_size"]))
                for c in d["cameras"]]
        tex = TextureParams(**d.get("texture", {}))
        return cls(prims, cams, float(d["d_min"]), float(d["d_max"]), tex, d.get("name", "custom"))


def _fade(t):
    return t * t * t * (t * (t * 6 - 15) + 10)


def value_noise(p: np.ndarray, seed: int) -> np.ndarray:
    """Trilinear value noise in [0, 1] on the unit lattice; ``p`` is ``(..., 3)``."""
    base = np.floor(p)
    f = p - base
    i = base.astype(np.int64)
    u = _fade(f)
    out = np.zeros(p.shape[:-1])
    for dx in (0, 1):
        wx = u[..., 0] if dx else 1 - u[..., 0]
        hx = PERM[(i[..., 0] + dx + seed) & 63]
        for dy in (0, 1):
            wy = u[..., 1] if dy else 1 - u[..., 1]
            hy = PERM[(hx + i[..., 1] + dy) & 63]
            for dz in (0, 1):
                wz = u[..., 2] if dz else 1 - u[..., 2]
                h = PERM[(hy + i[..., 2] + dz) & 63]
                out += wx * wy * wz * (h / 63.0)
    return out


def fbm(p: np.ndarray, seed: int, octaves: int) -> np.ndarray:
    total = np.zeros(p.shape[:-1])
    amp, norm = 1.0, 0.0
    for o in range(octaves):
        total += amp * value_noise(p * (2.0**o), seed + 11 * o)
        norm += amp
        amp *= 0.6
    return total / norm


def _plane_basis(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.array([1.0, 0.0, 0.0]) if abs(normal[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(normal, helper)
    u /= np.linalg.norm(u)
    return u, np.cross(normal, u)


def _texture_coords(prim: Primitive, X: np.ndarray) -> np.ndarray:
    if isinstance(prim, Plane):
        n = np.asarray(prim.normal, dtype=np.float64)
        n = n / np.linalg.norm(n)
        u, v = _plane_basis(n)
        rel = X - np.asarray(prim.point, dtype=np.float64)
        return np.stack([rel @ u, rel @ v, np.zeros(X.shape[:-1])], axis=-1)
    return X - np.asarray(prim.center, dtype=np.float64)


def albedo(prim: Primitive, X: np.ndarray, tex: TextureParams) -> np.ndarray:
    """RGB albedo in [0, 1] at world points ``X`` on ``prim``."""
    q = _texture_coords(prim, X)
    w = 2 * np.pi / tex.checker_period
    if isinstance(prim, Plane):
        pattern = np.sin(w * q[..., 0]) * np.sin(w * q[..., 1])
    else:
        pattern = np.sin(w * q[..., 0]) * np.sin(w * q[..., 1]) * np.sin(w * q[..., 2] + 0.7)
    checker = 0.5 + 0.5 * np.tanh(tex.checker_sharpness * pattern)
    # keep lattice coordinates positive so the integer hash is well defined
    lattice = q / tex.noise_cell + 1000.0
    chans = []
    for c in range(3):
        noise = fbm(lattice, prim.seed * 7 + 23 * c, tex.octaves)
        t = tex.checker_mix * checker + (1 - tex.checker_mix) * noise
        chans.append(prim.albedo * (0.08 + 0.84 * t))
    return np.stack(chans, axis=-1)


def _intersect(prim: Primitive, C: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Ray parameter (= camera-frame depth for z-normalized rays) of the nearest hit, inf if none."""
    eps = 1e-9
    if isinstance(prim, Plane):
        n = np.asarray(prim.normal, dtype=np.float64)
        p0 = np.asarray(prim.point, dtype=np.float64)
        denom = w @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(np.abs(denom) > eps, (p0 - C) @ n / denom, np.inf)
        s = np.where(s > eps, s, np.inf)
        if prim.clip_point is not None:
            X = C + s[..., None] * w
            side = (X - np.asarray(prim.clip_point, dtype=np.float64)) @ np.asarray(prim.clip_normal, dtype=np.float64)
            s = np.where(np.isfinite(s) & (side <= 0), s, np.inf)
        return s
    c = np.asarray(prim.center, dtype=np.float64)
    oc = C - c
    a = np.einsum("...i,...i->...", w, w)
    b = 2 * (w @ oc)
    cc = oc @ oc - prim.radius**2
    disc = b * b - 4 * a * cc
    root = np.sqrt(np.maximum(disc, 0.0))
    s_near = (-b - root) / (2 * a)
    s_far = (-b + root) / (2 * a)
    s = np.where(s_near > eps, s_near, np.where(s_far > eps, s_far, np.inf))
    return np.where(disc >= 0, s, np.inf)


def render_camera(scene: SceneSpec, cam: CameraModel, rows: slice | None = None):
    """Ray-cast one camera.

    Returns:
        ``(image, depth, mask)``: float32 H x W x 3 image, float64 depth
        (0 where nothing is hit) and boolean hit mask.
    """
    K = cam.intrinsics
    if abs(np.linalg.det(K)) < 1e-12:
        raise InputError("degenerate camera intrinsics")
    w_, h_ = cam.image_size
    rows = rows or slice(0, h_)
    ys, xs = np.mgrid[rows, 0:w_].astype(np.float64)
    pix = np.stack([xs, ys, np.ones_like(xs)], axis=-1)
    rays_cam = pix @ np.linalg.inv(K).T  # z component is 1
    rays = rays_cam @ cam.rotation  # R^T applied row-wise
    C = cam.center
    best = np.full(xs.shape, np.inf)
    which = np.full(xs.shape, -1, dtype=np.int64)
    for k, prim in enumerate(scene.primitives):
        s = _intersect(prim, C, rays)
        closer = s < best
        best = np.where(closer, s, best)
        which = np.where(closer, k, which)
    mask = np.isfinite(best)
    depth = np.where(mask, best, 0.0)
    image = np.zeros(xs.shape + (3,))
    X = C + depth[..., None] * rays
    for k, prim in enumerate(scene.primitives):
        sel = which == k
        if sel.any():
            image[sel] = albedo(prim, X[sel], scene.texture)
    return image.astype(np.float32), depth, mask


def render_views(scene: SceneSpec, workers: int | None = None):
    """Render every camera of ``scene``.

    Returns:
        ``(images, depths, masks)`` lists, one entry per camera.
    """
    out = pmap(lambda cam: render_camera(scene, cam), scene.cameras, workers)
    images, depths, masks = zip(*out) if out else ((), (), ())
    return list(images), list(depths), list(masks)


def check_scene(scene: SceneSpec) -> None:
    """Raise if some camera's optical axis misses every primitive."""
    for i, cam in enumerate(scene.cameras):
        C = cam.center
        fwd = cam.rotation[2]
        hits = [_intersect(p, C, fwd[None, :])[0] for p in scene.primitives]
        if not np.isfinite(min(hits)):
            raise InputError(f"camera {i}: optical axis hits no primitive")


# ---------------------------------------------------------------------------
# Builtin scenes
# ---------------------------------------------------------------------------

WIDTH, HEIGHT = 320, 256
FOCAL = 280.0
ARC_STEP_DEG = 8.0
TARGET_DEPTH = 4.0


def arc_cameras(
    target_depth: float = TARGET_DEPTH,
    step_deg: float = ARC_STEP_DEG,
    size: tuple[int, int] = (WIDTH, HEIGHT),
    focal: float = FOCAL,
) -> list[CameraModel]:
    """Reference camera at the origin looking down +z, then four more on a small arc.

    The arc swings around the point ``(0, 0, target_depth)`` with yaw steps of
    ``step_deg`` and a small alternating pitch, all cameras verging on that point.
    """
    w, h = size
    K = np.array([[focal, 0.0, (w - 1) / 2], [0.0, focal, (h - 1) / 2], [0.0, 0.0, 1.0]])
    target = np.array([0.0, 0.0, target_depth])
    # (yaw, pitch) in units of step_deg; reference first
    offsets = [(0.0, 0.0), (-1.0, 0.35), (1.0, -0.35), (-2.0, -0.35), (2.0, 0.35)]
    cams = []
    for yaw, pitch in offsets:
        a = np.deg2rad(yaw * step_deg)
        b = np.deg2rad(pitch * step_deg)
        d = np.array([np.sin(a) * np.cos(b), np.sin(b), np.cos(a) * np.cos(b)])
        center = target - target_depth * d
        R, t = look_at(center, target)
        cams.append(CameraModel(K, R, t, (w, h)))
    return cams


def _fit_range(scene: SceneSpec, margin: float = 0.25) -> SceneSpec:
    depths = [render_camera(scene, cam.scaled(4))[1] for cam in scene.cameras]
    hit = np.concatenate([d[d > 0] for d in depths])
    lo, hi = float(hit.min()), float(hit.max())
    scene.d_min = float(np.floor(lo * (1 - margin) * 10) / 10)
    scene.d_max = float(np.ceil(hi * (1 + margin) * 10) / 10)
    return scene


def flat_scene() -> SceneSpec:
    prims = [Plane((0.0, 0.0, 4.0), (0.0, 0.0, -1.0), seed=1)]
    return _fit_range(SceneSpec(prims, arc_cameras(), 1.0, 2.0, name="flat"))


def two_plane_scene() -> SceneSpec:
    prims = [
        Plane((0.0, 0.0, 3.5), (0.0, 0.0, -1.0), seed=2, clip_point=(0.05, 0.0, 3.5), clip_normal=(1.0, 0.0, 0.0)),
        Plane((0.0, 0.0, 4.4), (0.0, 0.0, -1.0), seed=3, albedo=0.9),
    ]
    return _fit_range(SceneSpec(prims, arc_cameras(), 1.0, 2.0, name="two-plane"))


def sphere_on_plane_scene() -> SceneSpec:
    prims = [
        Sphere((0.1, 0.05, 4.0), 0.7, seed=4),
        Plane((0.0, 0.0, 4.5), (0.0, 0.0, -1.0), seed=5, albedo=0.9),
    ]
    return _fit_range(SceneSpec(prims, arc_cameras(), 1.0, 2.0, name="sphere-on-plane"))


BUILTIN_SCENES = {
    "flat": flat_scene,
    "two-plane": two_plane_scene,
    "sphere-on-plane": sphere_on_plane_scene,
}


def builtin_scenes() -> dict[str, SceneSpec]:
    """Fresh instances of every builtin scene keyed by name."""
    return {name: make() for name, make in BUILTIN_SCENES.items()}


def get_scene(name: str) -> SceneSpec:
    try:
        return BUILTIN_SCENES[name]()
    except KeyError:
        raise InputError(f"unknown scene {name!r}; choose from {sorted(BUILTIN_SCENES)}") from None

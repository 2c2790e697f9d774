"""File formats: PFM float maps, PPM (P6) images, MVS camera text files, ASCII PLY."""

from __future__ import annotations

import math
import re
from pathlib import Path

import numpy as np

from .errors import ParseError
from .geometry import CameraModel, GeometryError


# ---------------------------------------------------------------------------
# PFM
# ---------------------------------------------------------------------------


def write_pfm(path, data: np.ndarray) -> None:
    """Write an H x W (``Pf``) or H x W x 3 (``PF``) map, little-endian float32.

    Rows are stored bottom-to-top as the format requires.
    """
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[..., 0]
    if arr.ndim == 2:
        header = "Pf"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        header = "PF"
    else:
        raise ValueError(f"PFM holds 1 or 3 channels, got shape {arr.shape}")
    h, w = arr.shape[:2]
    with open(path, "wb") as f:
        f.write(f"{header}\n{w} {h}\n-1.0\n".encode("ascii"))
        f.write(np.ascontiguousarray(np.flipud(arr)).astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    """Read a PFM file into a float32 array in top-to-bottom row order."""
    with open(path, "rb") as f:
        header = f.readline().decode("latin-1").rstrip()
        if header == "PF":
            channels = 3
        elif header == "Pf":
            channels = 1
        else:
            raise ParseError("not a PFM file", path, 1)
        dims = re.match(r"^\s*(\d+)\s+(\d+)\s*$", f.readline().decode("latin-1"))
        if not dims:
            raise ParseError("malformed PFM dimensions", path, 2)
        w, h = map(int, dims.groups())
        try:
            scale = float(f.readline().decode("latin-1").strip())
        except ValueError:
            raise ParseError("malformed PFM scale", path, 3) from None
        endian = "<" if scale < 0 else ">"
        data = np.frombuffer(f.read(), dtype=endian + "f4")
    expected = w * h * channels
    if data.size != expected:
        raise ParseError(f"expected {expected} floats, found {data.size}", path)
    shape = (h, w, 3) if channels == 3 else (h, w)
    return np.flipud(data.reshape(shape)).astype(np.float32)


def dump_slices(volume: np.ndarray, out_dir, prefix: str) -> list[Path]:
    """Write each D-axis slice of a D x H x W volume as ``<prefix>_<j>.pfm`` (debug aid)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for j, sl in enumerate(np.asarray(volume)):
        p = out / f"{prefix}_{j:03d}.pfm"
        write_pfm(p, sl)
        paths.append(p)
    return paths


# ---------------------------------------------------------------------------
# PPM
# ---------------------------------------------------------------------------


def quantize8(image: np.ndarray) -> np.ndarray:
    """[0, 1] floats to uint8 by rounding."""
    return np.clip(np.rint(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_ppm(path, image: np.ndarray) -> None:
    img = np.asarray(image)
    if img.dtype != np.uint8:
        img = quantize8(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"PPM needs H x W x 3, got {img.shape}")
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(img).tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a binary P6 image as float32 in [0, 1]."""
    raw = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        m = re.compile(rb"\s*(#[^\n]*\n\s*)*(\S+)").match(raw, pos)
        if not m:
            raise ParseError("truncated PPM header", path)
        tokens.append(m.group(2))
        pos = m.end()
    if tokens[0] != b"P6":
        raise ParseError("not a P6 PPM", path, 1)
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise ParseError(f"unsupported maxval {maxval}", path)
    pos += 1  # single whitespace after maxval
    if len(raw) - pos < w * h * 3:
        raise ParseError(f"expected {w * h * 3} bytes of pixels, found {len(raw) - pos}", path)
    data = np.frombuffer(raw, dtype=np.uint8, count=w * h * 3, offset=pos)
    return (data.reshape(h, w, 3).astype(np.float32)) / np.float32(255.0)


# ---------------------------------------------------------------------------
# Camera files
# ---------------------------------------------------------------------------


def write_camera(path, cam: CameraModel, d_min: float, d_max: float, d_count: int = 64) -> None:
    """MVS-style camera text: extrinsic 4x4, intrinsic 3x3, then the depth range line.

    The image size is not part of the format and must come from the image.
    """
    fmt = lambda row: " ".join(repr(float(v)) for v in row)  # noqa: E731
    lines = ["extrinsic"]
    lines += [fmt(r) for r in cam.extrinsic]
    lines += ["", "intrinsic"]
    lines += [fmt(r) for r in cam.intrinsics]
    lines += ["", f"{float(d_min)!r} {(d_max - d_min) / d_count!r} {int(d_count)} {float(d_max)!r}"]
    Path(path).write_text("\n".join(lines) + "\n")


def read_camera(path, image_size: tuple[int, int]) -> tuple[CameraModel, dict]:
    """Parse an MVS camera file.

    Returns:
        The camera and a dict with ``d_min``, ``d_interval``, ``d_count``
        and ``d_max`` (the last two may be None when the file omits them).
    """
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(Path(path).read_text().splitlines())]
    lines = [(i, ln) for i, ln in lines if ln]

    def floats(idx):
        n, text = lines[idx]
        try:
            return [float(v) for v in text.split()]
        except ValueError:
            raise ParseError(f"expected numbers, got {text!r}", path, n) from None

    if len(lines) < 9 or lines[0][1] != "extrinsic":
        raise ParseError("missing 'extrinsic' header", path, lines[0][0] if lines else 1)
    E = np.array([floats(i) for i in range(1, 5)])
    if E.shape != (4, 4):
        raise ParseError("extrinsic must be 4x4", path, lines[1][0])
    if lines[5][1] != "intrinsic":
        raise ParseError("missing 'intrinsic' header", path, lines[5][0])
    K = np.array([floats(i) for i in range(6, 9)])
    if K.shape != (3, 3):
        raise ParseError("intrinsic must be 3x3", path, lines[6][0])
    depth = {"d_min": None, "d_interval": None, "d_count": None, "d_max": None}
    if len(lines) > 9:
        vals = floats(9)
        if len(vals) < 2:
            raise ParseError("depth line needs at least d_min and d_interval", path, lines[9][0])
        depth["d_min"], depth["d_interval"] = vals[0], vals[1]
        if len(vals) >= 3:
            depth["d_count"] = int(vals[2])
        if len(vals) >= 4:
            depth["d_max"] = vals[3]
    try:
        cam = CameraModel(K, E[:3, :3], E[:3, 3], image_size)
    except GeometryError as e:
        raise ParseError(str(e), path) from None
    return cam, depth


# ---------------------------------------------------------------------------
# PLY
# ---------------------------------------------------------------------------


def quantize_color(colors: np.ndarray) -> np.ndarray:
    """[0, 1] floats to 0..255 by flooring (0.5 -> 127)."""
    return np.clip(np.floor(np.asarray(colors, dtype=np.float64) * 255.0), 0, 255).astype(np.int64)


def write_ply(path, points: np.ndarray, colors: np.ndarray) -> None:
    """ASCII PLY with ``x y z red green blue`` vertices.

    Coordinates use the shortest repr that round-trips exactly.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    cols = quantize_color(np.asarray(colors).reshape(-1, 3))
    head = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(pts)}",
        "property double x",
        "property double y",
        "property double z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "end_header",
    ]
    body = [
        f"{_num(p[0])} {_num(p[1])} {_num(p[2])} {c[0]} {c[1]} {c[2]}"
        for p, c in zip(pts.tolist(), cols.tolist())
    ]
    Path(path).write_text("\n".join(head + body) + "\n")


def _num(v: float) -> str:
    if math.isfinite(v) and v == int(v) and abs(v) < 1e15:
        if v == 0:
            return "-0" if math.copysign(1.0, v) < 0 else "0"
        return str(int(v))
    return repr(v)


def read_ply(path) -> tuple[np.ndarray, np.ndarray]:
    """Read an ASCII PLY written by :func:`write_ply` (or compatible).

    Returns:
        ``(points, colors)`` with colors rescaled to [0, 1].
    """
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError("missing 'ply' magic", path, 1)
    n = None
    props: list[str] = []
    end = None
    for i, ln in enumerate(lines[1:], start=2):
        parts = ln.split()
        if not parts:
            continue
        if parts[0] == "format" and parts[1:2] != ["ascii"]:
            raise ParseError(f"only ascii PLY supported, got {ln!r}", path, i)
        if parts[0] == "element":
            if parts[1] != "vertex":
                raise ParseError(f"unsupported element {parts[1]!r}", path, i)
            n = int(parts[2])
        elif parts[0] == "property":
            props.append(parts[-1])
        elif parts[0] == "end_header":
            end = i
            break
    if n is None or end is None:
        raise ParseError("incomplete header", path, len(lines))
    try:
        ix = [props.index(k) for k in ("x", "y", "z")]
    except ValueError:
        raise ParseError("vertex needs x, y, z properties", path) from None
    ic = [props.index(k) for k in ("red", "green", "blue")] if "red" in props else None
    pts = np.empty((n, 3))
    cols = np.zeros((n, 3))
    for k in range(n):
        line_no = end + 1 + k
        if line_no - 1 >= len(lines):
            raise ParseError(f"expected {n} vertices, file ends after {k}", path, line_no)
        parts = lines[line_no - 1].split()
        if len(parts) != len(props):
            raise ParseError(f"expected {len(props)} values, got {len(parts)}", path, line_no)
        try:
            pts[k] = [float(parts[j]) for j in ix]
            if ic:
                cols[k] = [int(parts[j]) for j in ic]
        except ValueError:
            raise ParseError(f"bad vertex {lines[line_no - 1]!r}", path, line_no) from None
    return pts, cols / 255.0

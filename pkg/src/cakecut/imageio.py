"""Raster I/O: PGM (P2/P5) by hand, PNG through Pillow.

Images come back as float64 arrays on the 0-255 scale, ``(p, q)`` for gray
and ``(p, q, 3)`` for color.
"""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from PIL import Image

from .hadamard import is_power_of_two


class ImageFormatError(ValueError):
    pass


_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _pgm_header(data: bytes):
    """Return (magic, width, height, maxval, offset of the first raster byte)."""
    fields = []
    pos = 0
    for _ in range(4):
        match = _TOKEN.match(data, pos)
        if match is None:
            raise ImageFormatError("truncated PGM header")
        fields.append(match.group(1))
        pos = match.end()
    magic = fields[0].decode("ascii", "replace")
    if magic not in ("P2", "P5"):
        raise ImageFormatError(f"unsupported PNM magic {magic!r} (only P2/P5 gray maps)")
    try:
        width, height, maxval = (int(f) for f in fields[1:])
    except ValueError as exc:
        raise ImageFormatError("malformed PGM header") from exc
    if width <= 0 or height <= 0:
        raise ImageFormatError("PGM dimensions must be positive")
    if not 0 < maxval < 65536:
        raise ImageFormatError(f"unsupported PGM maxval {maxval}")
    # exactly one whitespace byte separates the header from binary data
    return magic, width, height, maxval, pos + 1


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    magic, width, height, maxval, offset = _pgm_header(data)
    count = width * height
    if magic == "P2":
        try:
            values = np.array(data[offset:].split(), dtype=np.int64)
        except ValueError as exc:
            raise ImageFormatError("non-numeric sample in plain PGM") from exc
        if values.size < count:
            raise ImageFormatError("plain PGM raster is truncated")
        values = values[:count]
    else:
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
        raster = data[offset: offset + count * dtype.itemsize]
        if len(raster) < count * dtype.itemsize:
            raise ImageFormatError("binary PGM raster is truncated")
        values = np.frombuffer(raster, dtype=dtype).astype(np.int64)
    if values.min() < 0 or values.max() > maxval:
        raise ImageFormatError("PGM sample outside [0, maxval]")
    img = values.reshape(height, width).astype(np.float64)
    if maxval != 255:
        img *= 255.0 / maxval
    return img


def write_pgm(path, img, plain: bool = False) -> None:
    px = to_bytes(img)
    if px.ndim != 2:
        raise ImageFormatError("PGM holds gray images only")
    height, width = px.shape
    if plain:
        rows = "\n".join(" ".join(str(v) for v in row) for row in px)
        Path(path).write_text(f"P2\n{width} {height}\n255\n{rows}\n")
    else:
        Path(path).write_bytes(f"P5\n{width} {height}\n255\n".encode() + px.tobytes())


def read_png(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode in ("L", "LA", "P", "1"):
            return np.asarray(im.convert("L"), dtype=np.float64)
        if im.mode in ("RGB", "RGBA"):
            return np.asarray(im.convert("RGB"), dtype=np.float64)
        raise ImageFormatError(f"unsupported PNG bit depth / mode {im.mode!r}")


def read_image(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such image: {path}")
    suffix = path.suffix.lower()
    if suffix in (".pgm", ".pnm"):
        return read_pgm(path)
    if suffix == ".png":
        return read_png(path)
    raise ImageFormatError(f"unsupported image type {suffix!r} (use .pgm or .png)")


def to_bytes(img) -> np.ndarray:
    """Round and clip to uint8."""
    return np.clip(np.rint(np.asarray(img, dtype=np.float64)), 0, 255).astype(np.uint8)


def write_image(path, img, plain: bool = False) -> None:
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix in (".pgm", ".pnm"):
        write_pgm(path, img, plain)
    elif suffix == ".png":
        Image.fromarray(to_bytes(img)).save(path)
    else:
        raise ImageFormatError(f"unsupported image type {suffix!r} (use .pgm or .png)")


def to_gray(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    return img @ np.array([0.299, 0.587, 0.114])


def split_channels(img) -> list[np.ndarray]:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return [img]
    return [img[..., c] for c in range(img.shape[2])]


def conform(img, shape: tuple[int, int] | None = None, resize: bool = False) -> np.ndarray:
    """Check (or, with ``resize``, force) a power-of-two raster size.

    Without a target ``shape`` a resize goes to the largest power-of-two size
    that fits in each dimension.
    """
    img = np.asarray(img, dtype=np.float64)
    p, q = img.shape[:2]
    if shape is None:
        if is_power_of_two(p) and is_power_of_two(q):
            return img
        shape = (1 << (p.bit_length() - 1), 1 << (q.bit_length() - 1))
    shape = tuple(shape)
    if (p, q) == shape:
        return img
    if not resize:
        raise ImageFormatError(
            f"image is {p}x{q} but {shape[0]}x{shape[1]} is required; pass resize to rescale it"
        )
    channels = [
        np.asarray(Image.fromarray(c.astype(np.float32)).resize((shape[1], shape[0]), Image.Resampling.BILINEAR))
        for c in split_channels(img)
    ]
    out = channels[0] if img.ndim == 2 else np.stack(channels, axis=-1)
    return out.astype(np.float64)

"""Binary PGM (P5) / PPM (P6) reading and writing, 8-bit, values in [0, 1]."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _tokens(data: bytes, count: int) -> tuple[list[int], int]:
    """Read ``count`` whitespace-separated header integers, skipping comments."""
    vals, pos = [], 0
    while len(vals) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PNM header")
        vals.append(int(data[start:pos]))
    return vals, pos + 1  # exactly one whitespace byte before the raster


def read_pnm(path: str | Path) -> np.ndarray:
    """Return ``(H, W)`` for P5 or ``(H, W, 3)`` for P6, scaled to [0, 1]."""
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"{path}: not a binary PGM/PPM file (magic {magic!r})")
    (w, h, maxval), pos = _tokens(data[2:], 3)
    pos += 2
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.uint8
    count = w * h * channels
    raster = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    img = raster.reshape(h, w, channels).astype(float) / maxval
    return img[:, :, 0] if channels == 1 else img


def _to_bytes(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(img, dtype=float) * 255.0), 0, 255).astype(np.uint8)


def write_pgm(path: str | Path, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError("PGM needs a 2-D array")
    h, w = img.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + _to_bytes(img).tobytes())


def write_ppm(path: str | Path, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("PPM needs an (H, W, 3) array")
    h, w, _ = img.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + _to_bytes(img).tobytes())


def label_image(labels: np.ndarray, l: int) -> np.ndarray:
    """Spread label indices ``0..l-1`` over gray levels in [0, 1]."""
    return np.asarray(labels, dtype=float) / max(l - 1, 1)

"""Readers and writers: PGM (P2/P5), 8-bit grayscale PNG, Middlebury .flo."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

FLO_TAG = 202021.25


def _pgm_tokens(data: bytes, count: int):
    """Return the first ``count`` header tokens and the offset after them."""
    tokens = []
    pos = 0
    while len(tokens) < count:
        m = re.compile(rb"\s*(#[^\n]*\n\s*)*").match(data, pos)
        pos = m.end()
        m = re.compile(rb"\S+").match(data, pos)
        if m is None:
            raise ValueError("truncated PGM header")
        tokens.append(m.group(0))
        pos = m.end()
    return tokens, pos


def read_pgm_raw(path) -> np.ndarray:
    """Read a P2 or P5 file and return its integer samples."""
    data = Path(path).read_bytes()
    (magic, w, h, maxval), pos = _pgm_tokens(data, 4)
    w, h, maxval = int(w), int(h), int(maxval)
    if magic == b"P5":
        pos += 1  # single whitespace byte before the raster
        dtype = np.dtype(">u2") if maxval > 255 else np.uint8
        raw = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos)
        return raw.reshape(h, w).astype(np.int64)
    if magic == b"P2":
        vals = np.array(data[pos:].split()[: w * h], dtype=np.int64)
        if vals.size != w * h:
            raise ValueError("truncated P2 raster")
        return vals.reshape(h, w)
    raise ValueError(f"unsupported PGM magic {magic!r}")


def read_image(path) -> np.ndarray:
    """Load an 8-bit grayscale PGM or PNG; byte ``b`` maps to ``b / 255``."""
    path = Path(path)
    if path.suffix.lower() == ".png":
        from PIL import Image

        with Image.open(path) as im:
            if im.mode != "L":
                raise ValueError(f"expected 8-bit grayscale PNG, got mode {im.mode}")
            raw = np.asarray(im, dtype=np.int64)
    else:
        raw = read_pgm_raw(path)
        if raw.max(initial=0) > 255:
            raise ValueError("only 8-bit PGM images are accepted as intensity input")
    return raw.astype(np.float64) / 255.0


def to_bytes(img) -> np.ndarray:
    return np.clip(np.rint(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)


def write_pgm(path, values, maxval: int = 255, plain: bool = False) -> None:
    """Write integer samples (8- or 16-bit) as P5, or P2 when ``plain``."""
    values = np.asarray(values)
    h, w = values.shape
    if values.min(initial=0) < 0 or values.max(initial=0) > maxval:
        raise ValueError("sample outside [0, maxval]")
    header = f"{'P2' if plain else 'P5'}\n{w} {h}\n{maxval}\n".encode()
    if plain:
        body = "\n".join(" ".join(str(int(v)) for v in row) for row in values).encode() + b"\n"
    else:
        dtype = np.dtype(">u2") if maxval > 255 else np.uint8
        body = values.astype(dtype).tobytes()
    Path(path).write_bytes(header + body)


def write_image(path, img) -> None:
    path = Path(path)
    if path.suffix.lower() == ".png":
        from PIL import Image

        Image.fromarray(to_bytes(img), mode="L").save(path)
    else:
        write_pgm(path, to_bytes(img))


def write_mask(path, mask) -> None:
    """Binary mask as PGM, 255 = set."""
    write_pgm(path, np.where(np.asarray(mask, dtype=bool), 255, 0))


def write_labels(path, labels) -> None:
    """Label image as 16-bit PGM."""
    write_pgm(path, np.asarray(labels, dtype=np.int64), maxval=65535)


def write_flo(path, flow) -> None:
    """Middlebury .flo: float32 tag, int32 width, int32 height, then (u, v)
    interleaved row-major, all little-endian.  ``flow`` has shape (2, H, W)."""
    flow = np.asarray(flow)
    _, h, w = flow.shape
    with open(path, "wb") as f:
        np.array([FLO_TAG], dtype="<f4").tofile(f)
        np.array([w, h], dtype="<i4").tofile(f)
        np.stack([flow[0], flow[1]], axis=-1).astype("<f4").tofile(f)


def read_flo(path) -> np.ndarray:
    with open(path, "rb") as f:
        tag = np.fromfile(f, "<f4", count=1)
        if tag.size != 1 or tag[0] != np.float32(FLO_TAG):
            raise ValueError(f"{path}: bad .flo tag")
        w, h = (int(v) for v in np.fromfile(f, "<i4", count=2))
        data = np.fromfile(f, "<f4", count=2 * w * h)
    if data.size != 2 * w * h:
        raise ValueError(f"{path}: truncated .flo payload")
    data = data.reshape(h, w, 2)
    return np.stack([data[..., 0], data[..., 1]]).astype(np.float64)

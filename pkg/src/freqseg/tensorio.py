"""FQT1 tensor files and 8-bit grayscale image I/O.

FQT1 layout (little endian)::

    b"FQT1" | u32 rank | u32 dim_0 ... dim_{rank-1} | float64 data, row-major
"""
from __future__ import annotations

import io
import struct
from pathlib import Path
from typing import BinaryIO, Union

import numpy as np

from .errors import ValidationError

MAGIC = b"FQT1"
PathLike = Union[str, Path]


def write_tensor(fh: BinaryIO, arr) -> None:
    # asarray, not ascontiguousarray: the latter promotes 0-d scalars to shape (1,)
    arr = np.asarray(arr, dtype="<f8")
    fh.write(MAGIC)
    fh.write(struct.pack("<I", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(arr.tobytes(order="C"))


def read_tensor(fh: BinaryIO) -> np.ndarray:
    magic = fh.read(4)
    if magic != MAGIC:
        raise ValidationError(f"not an FQT1 tensor (magic {magic!r})")
    (rank,) = struct.unpack("<I", fh.read(4))
    dims = struct.unpack(f"<{rank}I", fh.read(4 * rank)) if rank else ()
    count = int(np.prod(dims)) if rank else 1
    raw = fh.read(8 * count)
    if len(raw) != 8 * count:
        raise ValidationError("truncated FQT1 tensor")
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(dims)


def save_tensor(path: PathLike, arr) -> None:
    with open(path, "wb") as fh:
        write_tensor(fh, arr)


def load_tensor(path: PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_tensor(fh)


def tensor_bytes(arr) -> bytes:
    buf = io.BytesIO()
    write_tensor(buf, arr)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# images
# ---------------------------------------------------------------------------

def _pgm_tokens(data: bytes):
    """Yield header tokens and the offset just past the last one."""
    pos = 0
    tokens = []
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while data[pos:pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos + 1


def write_pgm(path: PathLike, img: np.ndarray) -> None:
    """Write a 2D array with values in [0, 1] as 8-bit binary PGM."""
    img = np.asarray(img, dtype=np.float64)
    u8 = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    h, w = u8.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(u8.tobytes())


def read_pgm(path: PathLike) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, offset = _pgm_tokens(data)
    if tokens[0] != b"P5":
        raise ValidationError(f"{path}: only binary (P5) PGM is supported")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval > 255:
        raise ValidationError(f"{path}: 16-bit PGM not supported")
    pix = np.frombuffer(data[offset:offset + w * h], dtype=np.uint8)
    if pix.size != w * h:
        raise ValidationError(f"{path}: truncated pixel data")
    return pix.reshape(h, w).astype(np.float64) / maxval


def read_image(path: PathLike) -> np.ndarray:
    """Read a grayscale image as float64 in [0, 1]; PNG needs Pillow."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if path.suffix.lower() in (".pgm", ".pnm"):
        return read_pgm(path)
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover
        raise ValidationError(f"{path}: reading {path.suffix} files requires Pillow") from exc
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.float64) / 255.0


def write_image(path: PathLike, img: np.ndarray) -> None:
    path = Path(path)
    if path.suffix.lower() == ".png":
        from PIL import Image
        u8 = np.clip(np.rint(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(u8).save(path)
    else:
        write_pgm(path, img)


def normalize_for_display(x: np.ndarray) -> np.ndarray:
    lo, hi = float(x.min()), float(x.max())
    if hi - lo < 1e-12:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)

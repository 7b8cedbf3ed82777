"""Self-describing binary container for volumes, masks and measurements.

Layout (all little-endian):

    bytes 0..3   magic "MSRD"
    bytes 4..5   format version, u16
    bytes 6..9   header length, u32
    header       UTF-8 JSON: {"dtype": "c128"|"f64"|"u8",
                              "shape": [..], "labels": [..]}
    payload      raw row-major data, innermost axis contiguous;
                 c128 is interleaved (re, im) float64 pairs

Round trips are bit-exact.  Also holds the 8-bit PGM export used for
figure-style grayscale output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .errors import DataError

MAGIC = b"MSRD"
VERSION = 1

_DTYPES = {
    "c128": np.dtype("<c16"),
    "f64": np.dtype("<f8"),
    "u8": np.dtype("u1"),
}
_DTYPE_NAMES = {v: k for k, v in _DTYPES.items()}


class ContainerError(DataError):
    """Base for malformed container files."""


class BadMagicError(ContainerError):
    pass


class VersionMismatchError(ContainerError):
    pass


class TruncatedPayloadError(ContainerError):
    pass


class HeaderError(ContainerError):
    """Malformed header or dtype/shape/payload inconsistency."""


@dataclass(frozen=True)
class ContainerHeader:
    dtype: str
    shape: tuple[int, ...]
    labels: tuple[str, ...]

    @property
    def payload_bytes(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64)) * _DTYPES[self.dtype].itemsize


def _dtype_name(array: np.ndarray) -> str:
    canonical = array.dtype.newbyteorder("<")
    name = _DTYPE_NAMES.get(canonical)
    if name is None:
        raise DataError(f"unsupported dtype {array.dtype}; use c128, f64 or u8")
    return name


def write_stream(f: BinaryIO, array: np.ndarray, labels: tuple[str, ...] | list[str] = ()) -> None:
    arr = np.ascontiguousarray(array)
    name = _dtype_name(arr)
    header = json.dumps(
        {"dtype": name, "shape": list(arr.shape), "labels": list(labels)}
    ).encode("utf-8")
    f.write(MAGIC)
    f.write(VERSION.to_bytes(2, "little"))
    f.write(len(header).to_bytes(4, "little"))
    f.write(header)
    f.write(arr.astype(_DTYPES[name], copy=False).tobytes())
    f.flush()


def _read_exact(f: BinaryIO, n: int, what: str) -> bytes:
    buf = f.read(n)
    if buf is None or len(buf) < n:
        raise TruncatedPayloadError(f"container ended while reading {what}")
    return buf


def read_header_stream(f: BinaryIO) -> ContainerHeader:
    magic = _read_exact(f, 4, "magic")
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version = int.from_bytes(_read_exact(f, 2, "version"), "little")
    if version != VERSION:
        raise VersionMismatchError(f"unsupported container version {version}")
    header_len = int.from_bytes(_read_exact(f, 4, "header length"), "little")
    raw = _read_exact(f, header_len, "header")
    try:
        meta = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HeaderError(f"header is not valid UTF-8 JSON: {exc}") from exc
    dtype = meta.get("dtype")
    shape = meta.get("shape")
    labels = meta.get("labels", [])
    if dtype not in _DTYPES:
        raise HeaderError(f"unknown dtype {dtype!r}")
    if not isinstance(shape, list) or not all(isinstance(n, int) and n >= 0 for n in shape):
        raise HeaderError(f"invalid shape {shape!r}")
    if not isinstance(labels, list) or not all(isinstance(s, str) for s in labels):
        raise HeaderError("labels must be a list of strings")
    return ContainerHeader(dtype, tuple(int(n) for n in shape), tuple(labels))


def read_stream(f: BinaryIO) -> np.ndarray:
    header = read_header_stream(f)
    payload = _read_exact(f, header.payload_bytes, "payload")
    return np.frombuffer(payload, dtype=_DTYPES[header.dtype]).reshape(header.shape).copy()


def write_container(path: str | Path, array: np.ndarray, labels: tuple[str, ...] | list[str] = ()) -> None:
    with open(path, "wb") as f:
        write_stream(f, array, labels)


def read_container(path: str | Path) -> np.ndarray:
    with open(path, "rb") as f:
        header = read_header_stream(f)
        payload = f.read()
    if len(payload) < header.payload_bytes:
        raise TruncatedPayloadError(
            f"payload has {len(payload)} bytes, header promises {header.payload_bytes}"
        )
    if len(payload) > header.payload_bytes:
        raise HeaderError(
            f"payload has {len(payload)} bytes, header promises {header.payload_bytes}"
        )
    return np.frombuffer(payload, dtype=_DTYPES[header.dtype]).reshape(header.shape).copy()


def read_container_header(path: str | Path) -> ContainerHeader:
    with open(path, "rb") as f:
        return read_header_stream(f)


def container_bytes(array: np.ndarray, labels: tuple[str, ...] | list[str] = ()) -> bytes:
    import io

    buf = io.BytesIO()
    write_stream(buf, array, labels)
    return buf.getvalue()


def array_from_bytes(blob: bytes) -> np.ndarray:
    import io

    buf = io.BytesIO(blob)
    arr = read_stream(buf)
    rest = buf.read()
    if rest:
        raise HeaderError(f"{len(rest)} trailing bytes after payload")
    return arr


# ---------------------------------------------------------------------------
# PGM export

def pgm_bytes(image: np.ndarray, value_range: tuple[float, float] | None = None) -> bytes:
    """Binary 8-bit PGM; min-max scaled unless a fixed range is given."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise DataError("PGM export needs a non-empty 2-D image")
    if not np.all(np.isfinite(img)):
        raise DataError("PGM export needs finite values")
    if value_range is not None:
        lo, hi = float(value_range[0]), float(value_range[1])
        if not hi > lo:
            raise DataError("value range must have max > min")
    else:
        lo, hi = float(img.min()), float(img.max())
    if hi > lo:
        scaled = np.clip((img - lo) / (hi - lo), 0.0, 1.0) * 255.0
    else:
        scaled = np.zeros_like(img)  # constant image without an explicit range
    pixels = np.rint(scaled).astype(np.uint8)
    height, width = img.shape
    return f"P5\n{width} {height}\n255\n".encode("ascii") + pixels.tobytes()


def export_pgm(
    image: np.ndarray,
    path: str | Path,
    value_range: tuple[float, float] | None = None,
) -> None:
    with open(path, "wb") as f:
        f.write(pgm_bytes(image, value_range))

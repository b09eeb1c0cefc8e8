"""Standalone .dpyr writer and verifying parser.

Deliberately independent of the matcher package so that the two
implementations of the format cross-check each other. Layout
(little-endian):

    magic "DPYR" | version u32=1 | image_width u32 | image_height u32 |
    level_count u32 | reserved u32=0
    per level: name (16 bytes zero-padded ASCII) | stride u32 | width u32 |
    height u32 | channels u32 | f32 data (height*width*channels, row-major)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO

import numpy as np

MAGIC = b"DPYR"
VERSION = 1
ALLOWED_STRIDES = (1, 2, 4, 8, 16)

_HEADER = struct.Struct("<4sIIIII")
_LEVEL = struct.Struct("<16sIIII")


class FormatError(ValueError):
    """Base for everything a malformed .dpyr file can raise."""


class BadMagicError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


class NonFiniteDataError(FormatError):
    pass


class StrideChainError(FormatError):
    pass


@dataclass
class LevelSummary:
    name: str
    stride: int
    width: int
    height: int
    channels: int


@dataclass
class VerifyReport:
    """Outcome of re-parsing one pyramid file."""

    path: str
    ok: bool
    image_width: int = 0
    image_height: int = 0
    levels: list[LevelSummary] = field(default_factory=list)
    error_kind: str = ""
    error: str = ""


def write_pyramid_file(
    path: str | Path,
    image_width: int,
    image_height: int,
    levels: list[tuple[str, int, np.ndarray]],
) -> int:
    """Write levels given as (name, stride, array(height, width, channels))."""
    written = 0
    with open(path, "wb") as sink:
        written += sink.write(
            _HEADER.pack(MAGIC, VERSION, image_width, image_height, len(levels), 0)
        )
        for name, stride, data in levels:
            raw_name = name.encode("ascii")
            if len(raw_name) > 16:
                raise FormatError(f"level name {name!r} longer than 16 bytes")
            h, w, c = data.shape
            written += sink.write(_LEVEL.pack(raw_name.ljust(16, b"\0"), stride, w, h, c))
            written += sink.write(np.ascontiguousarray(data, dtype="<f4").tobytes())
    return written


def _read_exact(stream: BinaryIO, count: int, what: str) -> bytes:
    raw = stream.read(count)
    if len(raw) != count:
        raise TruncatedFileError(f"file ended while reading {what}")
    return raw


def _parse(stream: BinaryIO) -> tuple[int, int, list[LevelSummary]]:
    magic, version, image_w, image_h, count, _ = _HEADER.unpack(
        _read_exact(stream, _HEADER.size, "header")
    )
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if image_w <= 0 or image_h <= 0:
        raise FormatError(f"non-positive image size {image_w}x{image_h}")

    summaries = []
    for index in range(count):
        raw = _read_exact(stream, _LEVEL.size, f"level {index} header")
        name_raw, stride, w, h, c = _LEVEL.unpack(raw)
        name = name_raw.rstrip(b"\0").decode("ascii")
        if stride not in ALLOWED_STRIDES:
            raise StrideChainError(f"level {name!r}: stride {stride} not allowed")
        want_w = -(-image_w // stride)
        want_h = -(-image_h // stride)
        if (w, h) != (want_w, want_h):
            raise FormatError(
                f"level {name!r}: grid {w}x{h} does not match image at stride "
                f"{stride} (expected {want_w}x{want_h})"
            )
        if c == 0:
            raise FormatError(f"level {name!r} has zero channels")
        payload = _read_exact(stream, 4 * w * h * c, f"level {name!r} data")
        values = np.frombuffer(payload, dtype="<f4")
        if not np.isfinite(values).all():
            raise NonFiniteDataError(f"level {name!r} contains NaN or infinity")
        summaries.append(LevelSummary(name=name, stride=stride, width=w, height=h, channels=c))

    strides = [level.stride for level in summaries]
    if not strides or strides[-1] != 1:
        raise StrideChainError(f"stride chain {strides} does not end at 1")
    for coarse, fine in zip(strides, strides[1:]):
        if coarse != 2 * fine:
            raise StrideChainError(f"stride chain {strides} does not halve")
    if stream.read(1):
        raise FormatError("trailing bytes after the last level")
    return image_w, image_h, summaries


def verify_file(path: str | Path) -> VerifyReport:
    """Re-read a pyramid with this parser, checking magic, shapes, finiteness."""
    path = Path(path)
    try:
        with open(path, "rb") as stream:
            image_w, image_h, summaries = _parse(stream)
    except FormatError as exc:
        return VerifyReport(
            path=str(path), ok=False, error_kind=type(exc).__name__, error=str(exc)
        )
    return VerifyReport(
        path=str(path), ok=True, image_width=image_w, image_height=image_h, levels=summaries
    )

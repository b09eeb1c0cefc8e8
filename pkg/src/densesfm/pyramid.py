"""Feature-pyramid data model and the ``.dpyr`` binary file format.

A pyramid holds dense descriptor grids for one image, ordered coarsest to
finest. Strides halve from level to level and the finest level has stride 1,
so its cells correspond one-to-one with image pixels. Grid shapes follow
ceil division: a level at stride ``s`` for a ``W x H`` image is
``ceil(W/s) x ceil(H/s)`` cells.

File layout (little-endian):

    magic "DPYR" | version u32=1 | image_width u32 | image_height u32 |
    level_count u32 | reserved u32=0
    per level: name (16 bytes, zero-padded ASCII) | stride u32 | width u32 |
    height u32 | channels u32 | f32 data block (height*width*channels,
    row-major y, x, channel)

Pyramids are immutable after load and safe to share across workers.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Sequence

import numpy as np

from .exceptions import (
    BadMagicError,
    BoundsError,
    NonFiniteDataError,
    PyramidFormatError,
    PyramidStructureError,
    StrideChainError,
    TruncatedFileError,
)

MAGIC = b"DPYR"
FORMAT_VERSION = 1
FILE_EXTENSION = ".dpyr"
ALLOWED_STRIDES = (1, 2, 4, 8, 16)

_HEADER = struct.Struct("<4sIIIII")
_LEVEL_HEADER = struct.Struct("<16sIIII")
_NAME_BYTES = 16


def grid_size(image_extent: int, stride: int) -> int:
    """Cells needed to cover ``image_extent`` pixels at ``stride`` (ceil division)."""
    return -(-image_extent // stride)


@dataclass(frozen=True)
class CellCoord:
    """Integer grid-cell coordinate on the level with the given stride."""

    x: int
    y: int
    stride: int


@dataclass(frozen=True)
class ImageCoord:
    """Continuous pixel coordinate in the source image."""

    u: float
    v: float


@dataclass(frozen=True, eq=False)
class FeatureLevel:
    """One dense descriptor grid; ``data[y, x]`` is the descriptor of cell (x, y)."""

    name: str
    stride: int
    data: np.ndarray  # float32, shape (height, width, channels), C-order

    def __post_init__(self) -> None:
        if self.stride not in ALLOWED_STRIDES:
            raise StrideChainError(
                f"level {self.name!r}: stride {self.stride} not in {ALLOWED_STRIDES}"
            )
        arr = np.asarray(self.data)
        if arr.ndim != 3:
            raise PyramidFormatError(
                f"level {self.name!r}: data must have shape (height, width, channels), "
                f"got {arr.shape}"
            )
        if arr.dtype != np.float32 or not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr, dtype=np.float32)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def cell_count(self) -> int:
        return self.height * self.width

    def contains(self, c: CellCoord) -> bool:
        return 0 <= c.x < self.width and 0 <= c.y < self.height


@dataclass(frozen=True, eq=False)
class FeaturePyramid:
    """Per-image stack of descriptor grids, coarsest (largest stride) first."""

    image_id: str
    image_width: int
    image_height: int
    levels: tuple[FeatureLevel, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "levels", tuple(self.levels))

    def level_with_stride(self, stride: int) -> FeatureLevel:
        for level in self.levels:
            if level.stride == stride:
                return level
        raise PyramidStructureError(
            f"pyramid {self.image_id!r} has no level with stride {stride}"
        )

    def level_named(self, name: str) -> FeatureLevel:
        for level in self.levels:
            if level.name == name:
                return level
        raise PyramidStructureError(
            f"pyramid {self.image_id!r} has no level named {name!r}"
        )

    @property
    def finest(self) -> FeatureLevel:
        return self.levels[-1]

    def validate(self) -> None:
        """Check every pyramid invariant, raising a format error on violation."""
        if self.image_width <= 0 or self.image_height <= 0:
            raise PyramidFormatError(
                f"pyramid {self.image_id!r}: non-positive image size "
                f"{self.image_width}x{self.image_height}"
            )
        if not self.levels:
            raise PyramidFormatError(f"pyramid {self.image_id!r} has no levels")
        strides = [level.stride for level in self.levels]
        if strides[-1] != 1:
            raise StrideChainError(
                f"pyramid {self.image_id!r}: finest level has stride {strides[-1]}, "
                "expected 1"
            )
        for coarse, fine in zip(strides, strides[1:]):
            if coarse != 2 * fine:
                raise StrideChainError(
                    f"pyramid {self.image_id!r}: stride chain {strides} does not "
                    "halve between consecutive levels"
                )
        for level in self.levels:
            if level.channels == 0:
                raise PyramidFormatError(f"level {level.name!r} has zero channels")
            want_w = grid_size(self.image_width, level.stride)
            want_h = grid_size(self.image_height, level.stride)
            if level.width != want_w or level.height != want_h:
                raise PyramidFormatError(
                    f"level {level.name!r}: grid {level.width}x{level.height} does "
                    f"not match image {self.image_width}x{self.image_height} at "
                    f"stride {level.stride} (expected {want_w}x{want_h})"
                )
            if not np.isfinite(level.data).all():
                raise NonFiniteDataError(
                    f"level {level.name!r} contains NaN or infinite descriptors"
                )


def cell_to_image(c: CellCoord, level: FeatureLevel | None = None) -> ImageCoord:
    """Map a grid cell to the image coordinate of its pixel-center.

    Uses the cell-center convention ``u = (x + 0.5) * stride - 0.5`` so that
    stride-1 cells map to integer pixel positions identically.
    """
    if c.x < 0 or c.y < 0:
        raise BoundsError(f"cell ({c.x}, {c.y}) has negative index")
    if level is not None:
        if level.stride != c.stride:
            raise ValueError(
                f"cell stride {c.stride} does not match level stride {level.stride}"
            )
        if not level.contains(c):
            raise BoundsError(
                f"cell ({c.x}, {c.y}) outside level {level.name!r} "
                f"({level.width}x{level.height})"
            )
    return ImageCoord(
        u=(c.x + 0.5) * c.stride - 0.5,
        v=(c.y + 0.5) * c.stride - 0.5,
    )


def descriptor_at(level: FeatureLevel, c: CellCoord) -> np.ndarray:
    """Return the descriptor vector of one cell (a view, not a copy)."""
    if level.stride != c.stride:
        raise ValueError(
            f"cell stride {c.stride} does not match level stride {level.stride}"
        )
    if not level.contains(c):
        raise BoundsError(
            f"cell ({c.x}, {c.y}) outside level {level.name!r} "
            f"({level.width}x{level.height})"
        )
    return level.data[c.y, c.x]


def _encode_name(name: str) -> bytes:
    try:
        raw = name.encode("ascii")
    except UnicodeEncodeError as exc:
        raise PyramidFormatError(f"level name {name!r} is not ASCII") from exc
    if len(raw) > _NAME_BYTES:
        raise PyramidFormatError(
            f"level name {name!r} longer than {_NAME_BYTES} bytes"
        )
    return raw.ljust(_NAME_BYTES, b"\0")


def write_pyramid(pyramid: FeaturePyramid, destination: BinaryIO | str | Path) -> int:
    """Serialize a pyramid to the binary format, returning the bytes written.

    The pyramid is validated first; violations raise a format error naming
    the failing level.
    """
    pyramid.validate()
    if isinstance(destination, (str, Path)):
        with open(destination, "wb") as sink:
            return write_pyramid(pyramid, sink)
    written = destination.write(
        _HEADER.pack(
            MAGIC,
            FORMAT_VERSION,
            pyramid.image_width,
            pyramid.image_height,
            len(pyramid.levels),
            0,
        )
    )
    for level in pyramid.levels:
        written += destination.write(
            _LEVEL_HEADER.pack(
                _encode_name(level.name),
                level.stride,
                level.width,
                level.height,
                level.channels,
            )
        )
        payload = np.ascontiguousarray(level.data, dtype="<f4").tobytes()
        written += destination.write(payload)
    return written


def _read_exact(source: BinaryIO, count: int, what: str) -> bytes:
    raw = source.read(count)
    if len(raw) != count:
        raise TruncatedFileError(
            f"file ended while reading {what} (wanted {count} bytes, got {len(raw)})"
        )
    return raw


def read_pyramid(source: BinaryIO | str | Path, image_id: str | None = None) -> FeaturePyramid:
    """Parse and validate a pyramid from the binary format.

    ``image_id`` defaults to the file stem when a path is given, otherwise "".
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        if image_id is None:
            image_id = path.stem
        with open(path, "rb") as stream:
            return read_pyramid(stream, image_id=image_id)

    header = _read_exact(source, _HEADER.size, "header")
    magic, version, image_width, image_height, level_count, _reserved = _HEADER.unpack(header)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise PyramidFormatError(
            f"unsupported format version {version}, expected {FORMAT_VERSION}"
        )

    levels = []
    for index in range(level_count):
        raw = _read_exact(source, _LEVEL_HEADER.size, f"level {index} header")
        name_raw, stride, width, height, channels = _LEVEL_HEADER.unpack(raw)
        try:
            name = name_raw.rstrip(b"\0").decode("ascii")
        except UnicodeDecodeError as exc:
            raise PyramidFormatError(f"level {index} name is not ASCII") from exc
        count = height * width * channels
        payload = _read_exact(source, 4 * count, f"level {name!r} data")
        data = np.frombuffer(payload, dtype="<f4").reshape(height, width, channels)
        levels.append(FeatureLevel(name=name, stride=stride, data=data))

    if source.read(1):
        raise PyramidFormatError("trailing bytes after the last level")

    pyramid = FeaturePyramid(
        image_id=image_id or "",
        image_width=image_width,
        image_height=image_height,
        levels=tuple(levels),
    )
    pyramid.validate()
    return pyramid


def make_level_names(strides: Sequence[int]) -> list[str]:
    """Conventional VGG-flavored level names for a stride chain."""
    by_stride = {16: "conv4_pool", 8: "conv3_pool", 4: "conv2_pool", 2: "conv1_pool", 1: "conv1_2"}
    return [by_stride.get(s, f"stride{s}") for s in strides]

"""Versioned binary container for per-pair match results ("DMAR").

The archive decouples the pipeline stages: matching writes it once, export
and analysis re-read it without touching pyramids again. Layout
(little-endian):

    magic "DMAR" | version u32=1 | record_count u32
    per record:
        image_a: u16 length + UTF-8 bytes     image_b: likewise
        tentative_count u32
        n u32 | n * 4 f64 (u_a v_a u_b v_b)   relocalized correspondences
        model_count u32
        per model: 9 f64 (H row-major) | inlier_count u32 | inlier u32s
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .exceptions import ArchiveFormatError
from .verify import HomographyModel, VerifiedPair

MAGIC = b"DMAR"
FORMAT_VERSION = 1
FILE_EXTENSION = ".dmar"

_HEADER = struct.Struct("<4sII")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")


@dataclass(frozen=True, eq=False)
class PairRecord:
    """One image pair's verified result plus its tentative-match count."""

    pair: VerifiedPair
    tentative_count: int


@dataclass(frozen=True, eq=False)
class MatchArchive:
    records: tuple[PairRecord, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))

    def __len__(self) -> int:
        return len(self.records)


def _write_name(sink: BinaryIO, name: str) -> int:
    raw = name.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ArchiveFormatError(f"image name too long ({len(raw)} bytes)")
    return sink.write(_U16.pack(len(raw))) + sink.write(raw)


def write_archive(archive: MatchArchive, destination: BinaryIO | str | Path) -> int:
    """Serialize the archive, returning the bytes written."""
    if isinstance(destination, (str, Path)):
        with open(destination, "wb") as sink:
            return write_archive(archive, sink)
    sink = destination
    written = sink.write(_HEADER.pack(MAGIC, FORMAT_VERSION, len(archive.records)))
    for record in archive.records:
        pair = record.pair
        written += _write_name(sink, pair.image_a)
        written += _write_name(sink, pair.image_b)
        written += sink.write(_U32.pack(record.tentative_count))
        n = len(pair.points_a)
        written += sink.write(_U32.pack(n))
        coords = np.empty((n, 4), dtype="<f8")
        coords[:, :2] = pair.points_a
        coords[:, 2:] = pair.points_b
        written += sink.write(coords.tobytes())
        written += sink.write(_U32.pack(len(pair.models)))
        for model in pair.models:
            written += sink.write(np.ascontiguousarray(model.H, dtype="<f8").tobytes())
            written += sink.write(_U32.pack(len(model.inlier_indices)))
            written += sink.write(
                np.asarray(model.inlier_indices, dtype="<u4").tobytes()
            )
    return written


def _read_exact(source: BinaryIO, count: int, what: str) -> bytes:
    raw = source.read(count)
    if len(raw) != count:
        raise ArchiveFormatError(
            f"archive truncated while reading {what} "
            f"(wanted {count} bytes, got {len(raw)})"
        )
    return raw


def _read_name(source: BinaryIO, what: str) -> str:
    (length,) = _U16.unpack(_read_exact(source, _U16.size, f"{what} length"))
    return _read_exact(source, length, what).decode("utf-8")


def read_archive(source: BinaryIO | str | Path) -> MatchArchive:
    if isinstance(source, (str, Path)):
        with open(source, "rb") as stream:
            return read_archive(stream)

    magic, version, count = _HEADER.unpack(_read_exact(source, _HEADER.size, "header"))
    if magic != MAGIC:
        raise ArchiveFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise ArchiveFormatError(
            f"unsupported archive version {version}, expected {FORMAT_VERSION}"
        )

    records = []
    for _ in range(count):
        image_a = _read_name(source, "image_a name")
        image_b = _read_name(source, "image_b name")
        (tentative,) = _U32.unpack(_read_exact(source, 4, "tentative count"))
        (n,) = _U32.unpack(_read_exact(source, 4, "correspondence count"))
        coords = np.frombuffer(
            _read_exact(source, 32 * n, "correspondences"), dtype="<f8"
        ).reshape(n, 4)
        (model_count,) = _U32.unpack(_read_exact(source, 4, "model count"))
        models = []
        for _ in range(model_count):
            H = np.frombuffer(_read_exact(source, 72, "homography"), dtype="<f8").reshape(3, 3)
            (inlier_count,) = _U32.unpack(_read_exact(source, 4, "inlier count"))
            indices = np.frombuffer(
                _read_exact(source, 4 * inlier_count, "inlier indices"), dtype="<u4"
            )
            models.append(HomographyModel(H=H, inlier_indices=tuple(int(i) for i in indices)))
        pair = VerifiedPair(
            image_a=image_a,
            image_b=image_b,
            points_a=coords[:, :2],
            points_b=coords[:, 2:],
            models=tuple(models),
        )
        records.append(PairRecord(pair=pair, tentative_count=tentative))

    if source.read(1):
        raise ArchiveFormatError("trailing bytes after the last record")
    return MatchArchive(records=tuple(records))

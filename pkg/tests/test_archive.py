"""Match archive (DMAR) round-trip and corruption tests."""

import io

import numpy as np
import pytest

from densesfm.archive import MatchArchive, PairRecord, read_archive, write_archive
from densesfm.exceptions import ArchiveFormatError
from densesfm.verify import HomographyModel, VerifiedPair


def sample_archive() -> MatchArchive:
    rng = np.random.default_rng(0)
    records = []
    for k, (a, b) in enumerate([("img00", "img01"), ("img00", "img02")]):
        n = 8 + k
        pts_a = rng.uniform(0, 100, size=(n, 2))
        pts_b = rng.uniform(0, 100, size=(n, 2))
        H = np.eye(3)
        H[0, 2] = 2.0 + k
        models = (HomographyModel(H=H, inlier_indices=tuple(range(0, n, 2))),)
        pair = VerifiedPair(image_a=a, image_b=b, points_a=pts_a, points_b=pts_b, models=models)
        records.append(PairRecord(pair=pair, tentative_count=n + 3))
    return MatchArchive(records=tuple(records))


def test_round_trip_bit_identical():
    archive = sample_archive()
    buf = io.BytesIO()
    write_archive(archive, buf)
    buf.seek(0)
    loaded = read_archive(buf)
    out = io.BytesIO()
    write_archive(loaded, out)
    assert out.getvalue() == buf.getvalue()


def test_round_trip_preserves_content(tmp_path):
    archive = sample_archive()
    path = tmp_path / "m.dmar"
    write_archive(archive, path)
    loaded = read_archive(path)
    assert len(loaded) == len(archive)
    for got, want in zip(loaded.records, archive.records):
        assert got.tentative_count == want.tentative_count
        assert got.pair.image_a == want.pair.image_a
        assert np.array_equal(got.pair.points_a, want.pair.points_a)
        assert np.array_equal(got.pair.points_b, want.pair.points_b)
        assert len(got.pair.models) == len(want.pair.models)
        for gm, wm in zip(got.pair.models, want.pair.models):
            assert np.array_equal(gm.H, wm.H)
            assert gm.inlier_indices == wm.inlier_indices


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "m.dmar"
    write_archive(sample_archive(), path)
    raw = bytearray(path.read_bytes())
    raw[0] = ord(b"Z")
    path.write_bytes(raw)
    with pytest.raises(ArchiveFormatError, match="magic"):
        read_archive(path)


def test_truncation_rejected(tmp_path):
    path = tmp_path / "m.dmar"
    write_archive(sample_archive(), path)
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(ArchiveFormatError, match="truncated"):
        read_archive(path)


def test_trailing_bytes_rejected(tmp_path):
    path = tmp_path / "m.dmar"
    write_archive(sample_archive(), path)
    path.write_bytes(path.read_bytes() + b"x")
    with pytest.raises(ArchiveFormatError, match="trailing"):
        read_archive(path)


def test_empty_archive_round_trips():
    buf = io.BytesIO()
    write_archive(MatchArchive(records=()), buf)
    buf.seek(0)
    assert len(read_archive(buf)) == 0

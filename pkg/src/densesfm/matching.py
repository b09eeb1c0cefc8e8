"""Tentative correspondence search between two feature pyramids.

Matching runs at a coarse level first (mutual nearest neighbors over the
whole grid), then refines one level down by searching only among the child
cells of each coarse match. No ratio test is applied anywhere: neighboring
cells on a dense grid are similar by construction and a ratio test would
discard most true matches.

Descriptors are L2-normalized on internal copies before distances are
computed, so reported distances are monotone in cosine similarity. The
levels themselves are never modified (the relocalizer needs raw norms).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import StrideChainError
from .pyramid import CellCoord, FeatureLevel


@dataclass(frozen=True)
class TentativeMatch:
    """A matched cell pair with its L2 distance in normalized-descriptor space."""

    cell_a: CellCoord
    cell_b: CellCoord
    distance: float


@dataclass(frozen=True)
class MatchSet:
    """Bijective set of tentative matches between two images at one level."""

    image_a: str
    image_b: str
    level: str
    matches: tuple[TentativeMatch, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "matches", tuple(self.matches))
        seen_a = {(m.cell_a.x, m.cell_a.y) for m in self.matches}
        seen_b = {(m.cell_b.x, m.cell_b.y) for m in self.matches}
        if len(seen_a) != len(self.matches) or len(seen_b) != len(self.matches):
            raise ValueError("match set is not bijective: a cell appears twice")

    def __len__(self) -> int:
        return len(self.matches)


def match_distance(d_a: np.ndarray, d_b: np.ndarray) -> float:
    """Euclidean distance between two descriptor vectors of equal length."""
    a = np.asarray(d_a, dtype=np.float64)
    b = np.asarray(d_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"descriptor length mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def _normalized_flat(level: FeatureLevel) -> np.ndarray:
    """Cells flattened row-major to (cells, channels), each row L2-normalized."""
    flat = level.data.reshape(-1, level.channels).astype(np.float64)
    norms = np.linalg.norm(flat, axis=1, keepdims=True)
    np.copyto(norms, 1.0, where=norms == 0.0)
    return flat / norms


def _pairwise_sqdist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # |a|^2 + |b|^2 - 2 a.b; cheaper than broadcasting differences at grid scale
    sq_a = np.einsum("ic,ic->i", a, a)
    sq_b = np.einsum("jc,jc->j", b, b)
    d2 = sq_a[:, None] + sq_b[None, :] - 2.0 * (a @ b.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def _check_level_pair(level_a: FeatureLevel, level_b: FeatureLevel) -> None:
    if level_a.channels != level_b.channels:
        raise ValueError(
            f"channel mismatch: {level_a.name!r} has {level_a.channels}, "
            f"{level_b.name!r} has {level_b.channels}"
        )
    if level_a.name != level_b.name or level_a.stride != level_b.stride:
        raise ValueError(
            f"levels disagree: {level_a.name!r}@{level_a.stride} vs "
            f"{level_b.name!r}@{level_b.stride}"
        )
    if level_a.cell_count == 0 or level_b.cell_count == 0:
        raise ValueError("cannot match an empty level")


def mutual_nn_match(
    level_a: FeatureLevel,
    level_b: FeatureLevel,
    *,
    image_a: str = "",
    image_b: str = "",
) -> MatchSet:
    """Mutual-nearest-neighbor matching between two grids of the same level.

    A pair (i, j) is kept iff j is i's nearest neighbor and i is j's.
    Distance ties are broken toward the lowest row-major cell index, which
    makes the result deterministic.
    """
    _check_level_pair(level_a, level_b)
    flat_a = _normalized_flat(level_a)
    flat_b = _normalized_flat(level_b)
    d2 = _pairwise_sqdist(flat_a, flat_b)
    nn_ab = d2.argmin(axis=1)
    nn_ba = d2.argmin(axis=0)
    idx_a = np.flatnonzero(nn_ba[nn_ab] == np.arange(len(nn_ab)))

    width = level_a.width
    matches = []
    for i in idx_a:
        j = int(nn_ab[i])
        cell_a = CellCoord(int(i) % width, int(i) // width, level_a.stride)
        cell_b = CellCoord(j % level_b.width, j // level_b.width, level_b.stride)
        matches.append(
            TentativeMatch(cell_a, cell_b, float(np.linalg.norm(flat_a[i] - flat_b[j])))
        )
    return MatchSet(image_a=image_a, image_b=image_b, level=level_a.name, matches=tuple(matches))


def _children(c: CellCoord, width: int, height: int) -> list[tuple[int, int]]:
    """Child cells of ``c`` one level down, row-major, clipped to the grid."""
    cells = []
    for cy in (2 * c.y, 2 * c.y + 1):
        if cy >= height:
            continue
        for cx in (2 * c.x, 2 * c.x + 1):
            if cx < width:
                cells.append((cx, cy))
    return cells


def coarse_to_fine_match(
    coarse: MatchSet,
    fine_a: FeatureLevel,
    fine_b: FeatureLevel,
) -> MatchSet:
    """Refine coarse matches one level down.

    For every coarse match the candidate set is the cross product of the two
    cells' child blocks (at most 2x2 each side); mutually nearest pairs within
    each candidate set are emitted. Merged results are de-duplicated to keep
    the output bijective, preferring the smallest distance.
    """
    _check_level_pair(fine_a, fine_b)
    for m in coarse.matches:
        if m.cell_a.stride != 2 * fine_a.stride:
            raise StrideChainError(
                f"fine stride {fine_a.stride} is not half of coarse stride "
                f"{m.cell_a.stride}"
            )
        break

    flat_a = _normalized_flat(fine_a)
    flat_b = _normalized_flat(fine_b)
    width_a, width_b = fine_a.width, fine_b.width

    candidates: list[tuple[float, int, int]] = []
    for m in coarse.matches:
        kids_a = _children(m.cell_a, width_a, fine_a.height)
        kids_b = _children(m.cell_b, width_b, fine_b.height)
        rows = np.array([cy * width_a + cx for cx, cy in kids_a])
        cols = np.array([cy * width_b + cx for cx, cy in kids_b])
        d2 = _pairwise_sqdist(flat_a[rows], flat_b[cols])
        nn_ab = d2.argmin(axis=1)
        nn_ba = d2.argmin(axis=0)
        for i in range(len(rows)):
            j = int(nn_ab[i])
            if int(nn_ba[j]) != i:
                continue
            gi, gj = int(rows[i]), int(cols[j])
            candidates.append((float(np.linalg.norm(flat_a[gi] - flat_b[gj])), gi, gj))

    # With 2x2 child blocks the merged set is already bijective (blocks of
    # distinct parents are disjoint); the dedup pass guards window overlaps.
    candidates.sort()
    used_a: set[int] = set()
    used_b: set[int] = set()
    kept: list[tuple[int, int, float]] = []
    for dist, gi, gj in candidates:
        if gi in used_a or gj in used_b:
            continue
        used_a.add(gi)
        used_b.add(gj)
        kept.append((gi, gj, dist))

    kept.sort()
    matches = tuple(
        TentativeMatch(
            CellCoord(gi % width_a, gi // width_a, fine_a.stride),
            CellCoord(gj % width_b, gj // width_b, fine_b.stride),
            dist,
        )
        for gi, gj, dist in kept
    )
    return MatchSet(image_a=coarse.image_a, image_b=coarse.image_b, level=fine_a.name, matches=matches)

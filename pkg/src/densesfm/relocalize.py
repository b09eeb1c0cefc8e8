"""Coarse-to-pixel keypoint relocalization via descriptor-norm argmax.

A matched cell is pushed down the pyramid one level at a time: at each step
the keypoint moves to whichever of its child cells (a K x K window, K=2)
has the largest raw descriptor L2 norm, until it reaches the stride-1 level.
The norm map is the signal here, so descriptors are used un-normalized.
Match quantity is preserved exactly: relocalization never creates or drops
matches, and collisions onto the same pixel are kept.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import BoundsError, PyramidStructureError, StrideChainError
from .matching import MatchSet
from .pyramid import CellCoord, FeatureLevel, FeaturePyramid, ImageCoord, cell_to_image

DEFAULT_WINDOW = 2  # child-window side length used throughout the experiments


@dataclass(frozen=True, eq=False)
class NormMap:
    """Per-cell raw descriptor L2 norms for one level."""

    name: str
    stride: int
    norms: np.ndarray  # (height, width) float64

    @property
    def height(self) -> int:
        return self.norms.shape[0]

    @property
    def width(self) -> int:
        return self.norms.shape[1]


@dataclass(frozen=True)
class RelocalizedKeypoint:
    """Descent record from a matched cell down to a stride-1 pixel.

    ``path`` starts at the origin cell and ends at the stride-1 cell; each
    entry is a child of its predecessor.
    """

    origin: CellCoord
    final: ImageCoord
    path: tuple[CellCoord, ...]


def compute_norm_map(level: FeatureLevel) -> NormMap:
    """L2 norm of every cell descriptor, computed on raw activations."""
    sq = np.einsum("hwc,hwc->hw", level.data, level.data, dtype=np.float64)
    return NormMap(name=level.name, stride=level.stride, norms=np.sqrt(sq))


def relocate_one_step(c: CellCoord, child_norms: NormMap, k: int = DEFAULT_WINDOW) -> CellCoord:
    """Move one cell down a level, to the max-norm child in its k x k window.

    The window is clipped at grid borders (down to 1x1); ties resolve to the
    lowest row-major child index.
    """
    if k < 1:
        raise ValueError(f"window size must be >= 1, got {k}")
    if child_norms.stride * 2 != c.stride:
        raise StrideChainError(
            f"child level stride {child_norms.stride} is not half of {c.stride}"
        )
    y0, x0 = 2 * c.y, 2 * c.x
    window = child_norms.norms[y0 : min(y0 + k, child_norms.height), x0 : min(x0 + k, child_norms.width)]
    if window.size == 0:
        # unreachable for valid pyramids: ceil division guarantees a first child
        raise RuntimeError(f"cell ({c.x}, {c.y}) has no children in bounds")
    flat = int(np.argmax(window))
    dy, dx = divmod(flat, window.shape[1])
    return CellCoord(x0 + dx, y0 + dy, child_norms.stride)


def _norm_maps_below(pyramid: FeaturePyramid, stride: int) -> dict[int, NormMap]:
    maps: dict[int, NormMap] = {}
    s = stride // 2
    while s >= 1:
        maps[s] = compute_norm_map(pyramid.level_with_stride(s))
        s //= 2
    return maps


def relocalize(
    c: CellCoord,
    pyramid: FeaturePyramid,
    k: int = DEFAULT_WINDOW,
    norm_maps: dict[int, NormMap] | None = None,
) -> RelocalizedKeypoint:
    """Descend a cell to stride 1, recording the full path.

    ``norm_maps`` may carry precomputed maps keyed by stride; missing levels
    raise a pyramid-structure error.
    """
    level = pyramid.level_with_stride(c.stride)
    if not level.contains(c):
        raise BoundsError(
            f"cell ({c.x}, {c.y}) outside level {level.name!r} "
            f"({level.width}x{level.height})"
        )
    if norm_maps is None:
        norm_maps = _norm_maps_below(pyramid, c.stride)

    path = [c]
    current = c
    while current.stride > 1:
        child_stride = current.stride // 2
        child_map = norm_maps.get(child_stride)
        if child_map is None:
            # keeps the precomputed-map path honest about missing levels
            child_map = compute_norm_map(pyramid.level_with_stride(child_stride))
            norm_maps[child_stride] = child_map
        current = relocate_one_step(current, child_map, k)
        path.append(current)
    return RelocalizedKeypoint(origin=c, final=cell_to_image(current), path=tuple(path))


def relocalize_matchset(
    m: MatchSet,
    pyr_a: FeaturePyramid,
    pyr_b: FeaturePyramid,
    k: int = DEFAULT_WINDOW,
) -> list[tuple[ImageCoord, ImageCoord]]:
    """Relocalize both sides of every match; output order mirrors the input.

    Exactly one coordinate pair is produced per match, so quantity is
    preserved; distinct matches may land on the same pixel and are kept.
    """
    if not m.matches:
        return []
    stride = m.matches[0].cell_a.stride
    maps_a = _norm_maps_below(pyr_a, stride)
    maps_b = _norm_maps_below(pyr_b, stride)
    pairs = []
    for match in m.matches:
        ka = relocalize(match.cell_a, pyr_a, k, maps_a)
        kb = relocalize(match.cell_b, pyr_b, k, maps_b)
        pairs.append((ka.final, kb.final))
    return pairs

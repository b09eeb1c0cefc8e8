"""Text export of verified matches for an external incremental SfM backend.

Emits, into one directory:

* ``<image>.txt``      one per image: header line ``N 128`` then one
                       ``u v 1.0 0.0`` line per keypoint (dense grid features
                       have no scale or orientation, so placeholders).
* ``matches.txt``      blank-line-separated blocks: ``imageA imageB`` header
                       then ``idA idB`` index lines.
* ``pairs.txt``        the retained image pairs, one ``imageA imageB`` line each.
* ``config.json``      the pipeline parameters used, fixed-intrinsics flag
                       included.

Everything is UTF-8 with LF endings and fully deterministic: images
lexicographic, keypoints by first appearance, match lines by (idA, idB).
Keypoints landing on the same 1/100-pixel grid point share one id.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .config import PipelineConfig
from .pyramid import ImageCoord
from .verify import VerifiedPair

DEDUP_GRID = 100  # ids merge below 1/100 px; guards float formatting only


@dataclass(frozen=True)
class ImageFeatureFile:
    """Keypoints of one image; the list index is the keypoint id."""

    image: str
    keypoints: tuple[ImageCoord, ...]


@dataclass(frozen=True)
class ExportManifest:
    """Relative names of everything written by one export run."""

    feature_files: tuple[str, ...]
    matches_file: str
    pairs_file: str
    config_file: str
    keypoint_total: int
    match_total: int


def _grid_key(coord: ImageCoord) -> tuple[int, int]:
    return (
        int(round(float(coord.u) * DEDUP_GRID)),
        int(round(float(coord.v) * DEDUP_GRID)),
    )


def dedupe_keypoints(
    image: str, coords: Sequence[ImageCoord]
) -> tuple[ImageFeatureFile, list[int]]:
    """Assign one keypoint id per distinct 1/100-px grid point.

    Returns the deduplicated feature list plus a remap table: entry i is the
    keypoint id of input coordinate i. Stored coordinates are the quantized
    grid values, so printed output is exact.
    """
    ids: dict[tuple[int, int], int] = {}
    keypoints: list[ImageCoord] = []
    remap: list[int] = []
    for coord in coords:
        key = _grid_key(coord)
        kp_id = ids.get(key)
        if kp_id is None:
            kp_id = len(keypoints)
            ids[key] = kp_id
            keypoints.append(ImageCoord(key[0] / DEDUP_GRID, key[1] / DEDUP_GRID))
        remap.append(kp_id)
    return ImageFeatureFile(image=image, keypoints=tuple(keypoints)), remap


def write_feature_and_match_files(
    graph: Sequence[VerifiedPair],
    out_dir: str | Path,
    config: PipelineConfig | None = None,
) -> ExportManifest:
    """Write the full export for a set of verified pairs.

    Only inlier (verified) correspondences are exported. Every image that
    appears in a pair gets a feature file, even with zero keypoints.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    ordered = sorted(graph, key=lambda p: (p.image_a, p.image_b))
    images = sorted({name for pair in ordered for name in (pair.image_a, pair.image_b)})

    # keypoint ids per image, in first-appearance order over ordered pairs
    kp_ids: dict[str, dict[tuple[int, int], int]] = {name: {} for name in images}
    kp_lists: dict[str, list[ImageCoord]] = {name: [] for name in images}

    def intern(image: str, coord: ImageCoord) -> int:
        key = _grid_key(coord)
        table = kp_ids[image]
        kp_id = table.get(key)
        if kp_id is None:
            kp_id = len(kp_lists[image])
            table[key] = kp_id
            kp_lists[image].append(ImageCoord(key[0] / DEDUP_GRID, key[1] / DEDUP_GRID))
        return kp_id

    match_blocks: list[tuple[str, str, list[tuple[int, int]]]] = []
    for pair in ordered:
        entries = set()
        for i in pair.verified_indices:
            id_a = intern(pair.image_a, ImageCoord(*pair.points_a[i]))
            id_b = intern(pair.image_b, ImageCoord(*pair.points_b[i]))
            entries.add((id_a, id_b))
        if entries:
            match_blocks.append((pair.image_a, pair.image_b, sorted(entries)))

    feature_files = []
    for name in images:
        keypoints = kp_lists[name]
        lines = [f"{len(keypoints)} 128"]
        lines += [f"{kp.u:.2f} {kp.v:.2f} 1.0 0.0" for kp in keypoints]
        file_name = f"{name}.txt"
        (out / file_name).write_text("\n".join(lines) + "\n", encoding="utf-8")
        feature_files.append(file_name)

    blocks = []
    for image_a, image_b, entries in match_blocks:
        for id_a, id_b in entries:
            if id_a >= len(kp_lists[image_a]) or id_b >= len(kp_lists[image_b]):
                raise RuntimeError(
                    f"dangling match index in pair ({image_a}, {image_b})"
                )
        body = "\n".join(f"{id_a} {id_b}" for id_a, id_b in entries)
        blocks.append(f"{image_a} {image_b}\n{body}\n")
    (out / "matches.txt").write_text(
        "\n".join(blocks) if blocks else "", encoding="utf-8"
    )

    pair_lines = [f"{pair.image_a} {pair.image_b}" for pair in ordered]
    (out / "pairs.txt").write_text(
        "\n".join(pair_lines) + ("\n" if pair_lines else ""), encoding="utf-8"
    )

    config_payload = (config or PipelineConfig()).to_dict()
    (out / "config.json").write_text(
        json.dumps(config_payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    return ExportManifest(
        feature_files=tuple(feature_files),
        matches_file="matches.txt",
        pairs_file="pairs.txt",
        config_file="config.json",
        keypoint_total=sum(len(v) for v in kp_lists.values()),
        match_total=sum(len(entries) for _, _, entries in match_blocks),
    )

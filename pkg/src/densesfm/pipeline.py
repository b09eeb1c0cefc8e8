"""Stage orchestration: pyramids in, verified match archive out.

One image pair flows through mutual-NN matching at the coarse level,
constrained refinement one level down, keypoint relocalization to pixel
accuracy, and multi-homography verification. Pairs are independent jobs;
failures are isolated per pair and reported at the end of the run. Per-pair
RANSAC seeds derive from the global seed and the pair's image names, so
results do not depend on scheduling or worker count.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .archive import MatchArchive, PairRecord
from .config import PipelineConfig
from .matching import coarse_to_fine_match, mutual_nn_match
from .pyramid import FILE_EXTENSION, FeaturePyramid, read_pyramid
from .relocalize import relocalize_matchset
from .verify import multi_homography_ransac


@dataclass(frozen=True)
class PairOutcome:
    image_a: str
    image_b: str
    record: PairRecord | None
    error: str | None


def pair_seed(base_seed: int, image_a: str, image_b: str) -> int:
    """Deterministic per-pair RANSAC seed, independent of pair order."""
    digest = hashlib.sha256(f"{image_a}\0{image_b}".encode("utf-8")).digest()
    return (base_seed + int.from_bytes(digest[:8], "little")) % (2**63)


def discover_pyramids(directory: str | Path) -> dict[str, Path]:
    """Map image ids to pyramid files, sorted by id."""
    directory = Path(directory)
    files = sorted(directory.glob(f"*{FILE_EXTENSION}"))
    return {path.stem: path for path in files}


def default_pairs(image_ids: list[str]) -> list[tuple[str, str]]:
    """All unordered pairs, each ordered lexicographically."""
    ids = sorted(image_ids)
    return [(a, b) for i, a in enumerate(ids) for b in ids[i + 1 :]]


def load_pair_list(path: str | Path, known_ids: set[str]) -> list[tuple[str, str]]:
    """Parse an ``imageA imageB`` pair list; unknown ids are an error."""
    pairs = []
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{line_no}: expected two image ids")
        a, b = parts
        if a == b:
            raise ValueError(f"{path}:{line_no}: image paired with itself")
        for name in (a, b):
            if name not in known_ids:
                raise ValueError(f"{path}:{line_no}: unknown image id {name!r}")
        pairs.append((a, b))
    return pairs


def match_pair(
    pyr_a: FeaturePyramid,
    pyr_b: FeaturePyramid,
    config: PipelineConfig,
    seed: int,
) -> PairRecord:
    """Run the full per-pair pipeline and bundle the result for the archive."""
    coarse = mutual_nn_match(
        pyr_a.level_named(config.coarse_level),
        pyr_b.level_named(config.coarse_level),
        image_a=pyr_a.image_id,
        image_b=pyr_b.image_id,
    )
    fine = coarse_to_fine_match(
        coarse,
        pyr_a.level_named(config.fine_level),
        pyr_b.level_named(config.fine_level),
    )
    coords = relocalize_matchset(fine, pyr_a, pyr_b, k=config.k_window)
    points_a = np.array([(p.u, p.v) for p, _ in coords], dtype=np.float64).reshape(-1, 2)
    points_b = np.array([(q.u, q.v) for _, q in coords], dtype=np.float64).reshape(-1, 2)
    pair = multi_homography_ransac(
        points_a,
        points_b,
        threshold=config.ransac_threshold_px,
        max_models=config.max_homographies,
        min_inliers=config.min_inliers_per_model,
        max_iters=config.max_ransac_iters,
        seed=seed,
        image_a=pyr_a.image_id,
        image_b=pyr_b.image_id,
    )
    return PairRecord(pair=pair, tentative_count=len(fine))


def _match_pair_job(args: tuple[str, str, Path, Path, dict, int]) -> PairOutcome:
    image_a, image_b, path_a, path_b, config_dict, seed = args
    config = PipelineConfig.from_dict(config_dict)
    try:
        record = match_pair(read_pyramid(path_a), read_pyramid(path_b), config, seed)
        return PairOutcome(image_a, image_b, record, None)
    except Exception as exc:  # per-pair isolation: one bad file must not abort the run
        return PairOutcome(image_a, image_b, None, f"{type(exc).__name__}: {exc}")


def run_matching(
    pyramid_dir: str | Path,
    config: PipelineConfig,
    pairs: list[tuple[str, str]] | None = None,
    jobs: int = 1,
) -> tuple[MatchArchive, list[PairOutcome]]:
    """Match every pair, returning the archive and all per-pair outcomes.

    The archive holds successful pairs sorted by image-name pair, so its
    bytes do not depend on worker scheduling.
    """
    config.validate()
    pyramids = discover_pyramids(pyramid_dir)
    if pairs is None:
        if config.pair_list is not None:
            pairs = load_pair_list(config.pair_list, set(pyramids))
        else:
            pairs = default_pairs(list(pyramids))

    job_args = [
        (a, b, pyramids[a], pyramids[b], config.to_dict(), pair_seed(config.rng_seed, a, b))
        for a, b in pairs
    ]

    if jobs <= 1:
        outcomes = [_match_pair_job(args) for args in job_args]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_match_pair_job, job_args))

    good = sorted(
        (o.record for o in outcomes if o.record is not None),
        key=lambda r: (r.pair.image_a, r.pair.image_b),
    )
    return MatchArchive(records=tuple(good)), outcomes


def summary_lines(outcomes: list[PairOutcome]) -> list[str]:
    """Human-readable per-pair summary: tentative, verified, model counts."""
    lines = ["pair_a\tpair_b\ttentative\tverified\tmodels\tstatus"]
    for o in sorted(outcomes, key=lambda o: (o.image_a, o.image_b)):
        if o.record is None:
            lines.append(f"{o.image_a}\t{o.image_b}\t-\t-\t-\tFAILED: {o.error}")
        else:
            pair = o.record.pair
            lines.append(
                f"{o.image_a}\t{o.image_b}\t{o.record.tentative_count}"
                f"\t{pair.total_inliers}\t{len(pair.models)}\tok"
            )
    return lines

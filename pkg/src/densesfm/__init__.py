"""Dense-feature SfM matching frontend.

Turns per-image dense descriptor pyramids into pixel-accurate, geometrically
verified correspondences ready for an external incremental SfM backend, and
evaluates reconstructed camera poses against reference poses.
"""

from .config import PipelineConfig
from .matching import MatchSet, TentativeMatch, coarse_to_fine_match, match_distance, mutual_nn_match
from .pyramid import (
    CellCoord,
    FeatureLevel,
    FeaturePyramid,
    ImageCoord,
    cell_to_image,
    descriptor_at,
    read_pyramid,
    write_pyramid,
)
from .relocalize import (
    NormMap,
    RelocalizedKeypoint,
    compute_norm_map,
    relocalize,
    relocalize_matchset,
    relocate_one_step,
)
from .verify import (
    HomographyModel,
    VerifiedPair,
    estimate_homography_dlt,
    homography_ransac,
    multi_homography_ransac,
    rank_pairs,
    symmetric_transfer_error,
)

__all__ = [
    "PipelineConfig",
    "MatchSet",
    "TentativeMatch",
    "coarse_to_fine_match",
    "match_distance",
    "mutual_nn_match",
    "CellCoord",
    "FeatureLevel",
    "FeaturePyramid",
    "ImageCoord",
    "cell_to_image",
    "descriptor_at",
    "read_pyramid",
    "write_pyramid",
    "NormMap",
    "RelocalizedKeypoint",
    "compute_norm_map",
    "relocalize",
    "relocalize_matchset",
    "relocate_one_step",
    "HomographyModel",
    "VerifiedPair",
    "estimate_homography_dlt",
    "homography_ransac",
    "multi_homography_ransac",
    "rank_pairs",
    "symmetric_transfer_error",
]

__version__ = "0.1.0"

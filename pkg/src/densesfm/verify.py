"""Geometric verification: repeated homography RANSAC and best-N pair ranking.

Outlier rejection runs a vanilla 4-point homography RANSAC, then repeats it
on the remaining correspondences after removing the inliers of the best
hypothesis, up to ``max_models`` planes. Inlier classification uses the
symmetric transfer error so neither image of the pair is privileged. All
randomness flows through an explicit seed; identical inputs and seed give
bit-identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import DegeneracyError, NoModelError

DEFAULT_THRESHOLD_PX = 10.0
DEFAULT_MAX_MODELS = 5
DEFAULT_MIN_INLIERS = 15
DEFAULT_MAX_ITERS = 2000
_RANSAC_CONFIDENCE = 0.99


@dataclass(frozen=True, eq=False)
class HomographyModel:
    """A 3x3 projective transform together with the matches it explains."""

    H: np.ndarray  # (3, 3) float64, H[2,2] == 1 where possible
    inlier_indices: tuple[int, ...]  # sorted indices into the correspondence list

    def __post_init__(self) -> None:
        H = np.ascontiguousarray(np.asarray(self.H, dtype=np.float64))
        if H.shape != (3, 3):
            raise ValueError(f"homography must be 3x3, got {H.shape}")
        if abs(np.linalg.det(H)) <= 1e-12:
            raise DegeneracyError("homography is singular (|det| <= 1e-12)")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "inlier_indices", tuple(sorted(int(i) for i in self.inlier_indices)))

    @property
    def score(self) -> int:
        return len(self.inlier_indices)


@dataclass(frozen=True, eq=False)
class VerifiedPair:
    """All correspondences of one image pair plus the homographies found.

    ``points_a``/``points_b`` hold every input correspondence (row i of each
    is one pair); model inlier indices point into those rows and are pairwise
    disjoint across models.
    """

    image_a: str
    image_b: str
    points_a: np.ndarray  # (N, 2) float64 pixel coordinates
    points_b: np.ndarray  # (N, 2)
    models: tuple[HomographyModel, ...]

    def __post_init__(self) -> None:
        pa = np.ascontiguousarray(np.asarray(self.points_a, dtype=np.float64).reshape(-1, 2))
        pb = np.ascontiguousarray(np.asarray(self.points_b, dtype=np.float64).reshape(-1, 2))
        if pa.shape != pb.shape:
            raise ValueError("correspondence arrays disagree in length")
        object.__setattr__(self, "points_a", pa)
        object.__setattr__(self, "points_b", pb)
        object.__setattr__(self, "models", tuple(self.models))
        seen: set[int] = set()
        for model in self.models:
            overlap = seen.intersection(model.inlier_indices)
            if overlap:
                raise ValueError(f"model inlier sets overlap at indices {sorted(overlap)}")
            seen.update(model.inlier_indices)

    @property
    def total_inliers(self) -> int:
        return sum(model.score for model in self.models)

    @property
    def verified_indices(self) -> tuple[int, ...]:
        merged: list[int] = []
        for model in self.models:
            merged.extend(model.inlier_indices)
        return tuple(sorted(merged))

    @property
    def pair_key(self) -> tuple[str, str]:
        return (self.image_a, self.image_b)


def _as_points(points: Sequence | np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"expected (N, 2) point array, got shape {pts.shape}")
    return pts


def _hartley_normalization(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Similarity transform taking points to centroid 0, mean distance sqrt(2)."""
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    mean_dist = np.mean(np.linalg.norm(centered, axis=1))
    if mean_dist <= 1e-12:
        raise DegeneracyError("all points coincide; homography is undetermined")
    scale = math.sqrt(2.0) / mean_dist
    T = np.array(
        [
            [scale, 0.0, -scale * centroid[0]],
            [0.0, scale, -scale * centroid[1]],
            [0.0, 0.0, 1.0],
        ]
    )
    return centered * scale, T


def _has_collinear_triple(pts: np.ndarray, tol: float = 1e-8) -> bool:
    n = len(pts)
    for i in range(n - 2):
        for j in range(i + 1, n - 1):
            d1 = pts[j] - pts[i]
            for k in range(j + 1, n):
                d2 = pts[k] - pts[i]
                if abs(d1[0] * d2[1] - d1[1] * d2[0]) <= tol:
                    return True
    return False


def estimate_homography_dlt(points_a, points_b) -> np.ndarray:
    """Fit the homography mapping a to b with the normalized DLT.

    Both point sets are Hartley-normalized, the 2Nx9 system is solved by SVD
    null-vector extraction, and the result is de-normalized and scaled to
    H[2,2] = 1 where that entry is not vanishing. Degenerate configurations
    (a collinear triple in a minimal sample, a rank-deficient system) raise
    a degeneracy error.
    """
    pa = _as_points(points_a)
    pb = _as_points(points_b)
    if pa.shape != pb.shape:
        raise ValueError("point arrays disagree in length")
    n = len(pa)
    if n < 4:
        raise DegeneracyError(f"need at least 4 correspondences, got {n}")

    na, Ta = _hartley_normalization(pa)
    nb, Tb = _hartley_normalization(pb)
    if n == 4 and (_has_collinear_triple(na) or _has_collinear_triple(nb)):
        raise DegeneracyError("three of the four sample points are collinear")

    A = np.zeros((2 * n, 9))
    x, y = na[:, 0], na[:, 1]
    u, v = nb[:, 0], nb[:, 1]
    A[0::2, 3] = -x
    A[0::2, 4] = -y
    A[0::2, 5] = -1.0
    A[0::2, 6] = v * x
    A[0::2, 7] = v * y
    A[0::2, 8] = v
    A[1::2, 0] = x
    A[1::2, 1] = y
    A[1::2, 2] = 1.0
    A[1::2, 6] = -u * x
    A[1::2, 7] = -u * y
    A[1::2, 8] = -u

    # economy SVD keeps all 9 right singular vectors once 2N >= 9; the
    # minimal 8x9 case needs the full V for the null vector
    _, s, vt = np.linalg.svd(A, full_matrices=A.shape[0] < 9)
    if s[7] <= 1e-9 * s[0]:
        raise DegeneracyError("DLT system is rank deficient")
    Hn = vt[-1].reshape(3, 3)
    H = np.linalg.inv(Tb) @ Hn @ Ta
    if abs(H[2, 2]) > 1e-8 * np.linalg.norm(H):
        H = H / H[2, 2]
    if abs(np.linalg.det(H)) <= 1e-12:
        raise DegeneracyError("estimated homography is singular")
    return H


def _minimal_sample_h(pa: np.ndarray, pb: np.ndarray) -> np.ndarray | None:
    """Fast 4-point solver for RANSAC hypothesis generation, H[2,2] = 1 gauge.

    Hypotheses only need to rank inliers, so this skips Hartley
    normalization and solves the 8x8 linear system directly; the winning
    hypothesis is re-estimated with the full normalized DLT afterwards.
    Degenerate samples (collinear triples included) make the system
    singular and are discarded, as are samples demanding H[2,2] = 0.
    """
    A = np.zeros((8, 8))
    rhs = np.empty(8)
    x, y = pa[:, 0], pa[:, 1]
    u, v = pb[:, 0], pb[:, 1]
    A[0::2, 0] = x
    A[0::2, 1] = y
    A[0::2, 2] = 1.0
    A[0::2, 6] = -u * x
    A[0::2, 7] = -u * y
    A[1::2, 3] = x
    A[1::2, 4] = y
    A[1::2, 5] = 1.0
    A[1::2, 6] = -v * x
    A[1::2, 7] = -v * y
    rhs[0::2] = u
    rhs[1::2] = v
    try:
        h = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        return None
    H = np.append(h, 1.0).reshape(3, 3)
    if not np.isfinite(H).all() or abs(np.linalg.det(H)) <= 1e-12:
        return None
    return H


def _transfer_errors(H: np.ndarray, pts_a: np.ndarray, pts_b: np.ndarray) -> np.ndarray:
    """Symmetric transfer error per correspondence; points near infinity get inf."""
    H_inv = np.linalg.inv(H)

    def one_way(M: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
        proj = src @ M[:, :2].T
        proj += M[:, 2]
        w = proj[:, 2]
        bad = np.abs(w) < 1e-12
        w[bad] = 1.0
        err = np.hypot(proj[:, 0] / w - dst[:, 0], proj[:, 1] / w - dst[:, 1])
        err[bad] = np.inf
        return err

    return one_way(H, pts_a, pts_b) + one_way(H_inv, pts_b, pts_a)


def _as_xy(p) -> tuple[float, float]:
    if hasattr(p, "u"):
        return (float(p.u), float(p.v))
    x, y = p
    return (float(x), float(y))


def symmetric_transfer_error(H: np.ndarray, p_a, p_b) -> float:
    """Forward plus backward reprojection distance in pixels for one pair.

    Accepts ImageCoord or any (u, v) pair. A point mapping to infinity
    (|w| below 1e-12) yields +inf rather than an exception.
    """
    H = np.asarray(H, dtype=np.float64)
    a = np.asarray([_as_xy(p_a)])
    b = np.asarray([_as_xy(p_b)])
    return float(_transfer_errors(H, a, b)[0])


def homography_ransac(
    points_a,
    points_b,
    threshold: float = DEFAULT_THRESHOLD_PX,
    max_iters: int = DEFAULT_MAX_ITERS,
    seed: int | np.random.Generator | None = None,
) -> HomographyModel:
    """Vanilla 4-point homography RANSAC with adaptive iteration count.

    The iteration budget shrinks as better models appear, following the
    standard 1 - (1 - w^4)^k confidence bound at 99%, capped at
    ``max_iters``. The winning model is re-estimated by DLT on its inliers
    and the inlier set recomputed against the refit, so every reported
    inlier satisfies the threshold against the returned matrix.
    """
    pa = _as_points(points_a)
    pb = _as_points(points_b)
    if pa.shape != pb.shape:
        raise ValueError("point arrays disagree in length")
    n = len(pa)
    if n < 4:
        raise NoModelError(f"need at least 4 correspondences, got {n}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    best_H: np.ndarray | None = None
    best_mask: np.ndarray | None = None
    best_count = 0
    needed = max_iters
    iteration = 0
    while iteration < min(needed, max_iters):
        iteration += 1
        sample = rng.choice(n, size=4, replace=False)
        H = _minimal_sample_h(pa[sample], pb[sample])
        if H is None:
            continue
        mask = _transfer_errors(H, pa, pb) <= threshold
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_H = H
            best_mask = mask
            w = count / n
            if w >= 1.0:
                needed = iteration
            else:
                needed = math.ceil(
                    math.log(1.0 - _RANSAC_CONFIDENCE) / math.log(1.0 - w**4)
                )

    if best_H is None or best_mask is None or best_count < 4:
        raise NoModelError(
            f"no homography with >= 4 inliers at threshold {threshold} px"
        )

    # Refit on all inliers; keep the sampled hypothesis if the refit is
    # degenerate or loses minimal support. Either way the reported inliers
    # are consistent with the returned matrix.
    H_final, final_mask = best_H, best_mask
    try:
        H_refit = estimate_homography_dlt(pa[best_mask], pb[best_mask])
        refit_mask = _transfer_errors(H_refit, pa, pb) <= threshold
        if int(refit_mask.sum()) >= 4:
            H_final, final_mask = H_refit, refit_mask
    except DegeneracyError:
        pass
    return HomographyModel(H=H_final, inlier_indices=tuple(np.flatnonzero(final_mask)))


def multi_homography_ransac(
    points_a,
    points_b,
    *,
    threshold: float = DEFAULT_THRESHOLD_PX,
    max_models: int = DEFAULT_MAX_MODELS,
    min_inliers: int = DEFAULT_MIN_INLIERS,
    max_iters: int = DEFAULT_MAX_ITERS,
    seed: int | np.random.Generator | None = None,
    image_a: str = "",
    image_b: str = "",
) -> VerifiedPair:
    """Repeat homography RANSAC, excluding each found model's inliers.

    Stops at ``max_models``, when a round finds fewer than ``min_inliers``
    supporters, or when too few correspondences remain. Zero models is a
    valid outcome (total_inliers == 0).
    """
    pa = _as_points(points_a)
    pb = _as_points(points_b)
    if pa.shape != pb.shape:
        raise ValueError("point arrays disagree in length")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    remaining = np.arange(len(pa))
    models: list[HomographyModel] = []
    while len(models) < max_models and len(remaining) >= max(4, min_inliers):
        try:
            model = homography_ransac(pa[remaining], pb[remaining], threshold, max_iters, rng)
        except NoModelError:
            break
        if model.score < min_inliers:
            break
        global_inliers = remaining[list(model.inlier_indices)]
        models.append(HomographyModel(H=model.H, inlier_indices=tuple(global_inliers)))
        remaining = np.setdiff1d(remaining, global_inliers)

    return VerifiedPair(
        image_a=image_a,
        image_b=image_b,
        points_a=pa,
        points_b=pb,
        models=tuple(models),
    )


def rank_pairs(all_pairs: Sequence[VerifiedPair], n: int) -> list[VerifiedPair]:
    """Keep, per image, its n pairs with the most verified inliers.

    A pair survives when either endpoint retains it (union semantics), which
    keeps the match graph connected for weakly linked images. Input order is
    preserved in the result.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    by_image: dict[str, list[VerifiedPair]] = {}
    for pair in all_pairs:
        by_image.setdefault(pair.image_a, []).append(pair)
        by_image.setdefault(pair.image_b, []).append(pair)

    retained: set[tuple[str, str]] = set()
    for image in sorted(by_image):
        ranked = sorted(
            by_image[image],
            key=lambda p: (-p.total_inliers, p.image_a, p.image_b),
        )
        retained.update(p.pair_key for p in ranked[:n])
    return [pair for pair in all_pairs if pair.pair_key in retained]

"""Camera-pose evaluation: similarity registration and error statistics.

A reconstruction lives in its own gauge, so before comparing poses it is
registered to the reference frame with a 7-DoF similarity transform fitted
in closed form (least squares over shared camera centers). Errors are then
positional (L2 between centers, in reference units) and angular (rotation
angle between world-to-camera rotations, in degrees). Sweep tables count
unreconstructed target images as failures: their error entries are +inf.

Pose text format, one line per image, whitespace-delimited:

    name qw qx qy qz cx cy cz

with a world-to-camera quaternion and the camera center in world units.
Lines starting with '#' and blank lines are ignored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exceptions import DegeneracyError, InvalidRotationError

_ROTATION_TOL = 1e-9


def _require_rotation(R: np.ndarray, what: str = "matrix") -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3):
        raise InvalidRotationError(f"{what} must be 3x3, got {R.shape}")
    if not np.allclose(R.T @ R, np.eye(3), atol=_ROTATION_TOL, rtol=0.0):
        raise InvalidRotationError(f"{what} is not orthonormal within {_ROTATION_TOL}")
    if abs(np.linalg.det(R) - 1.0) > _ROTATION_TOL:
        raise InvalidRotationError(f"{what} has det != +1 within {_ROTATION_TOL}")
    return R


@dataclass(frozen=True, eq=False)
class PoseRecord:
    """World-to-camera rotation and camera center for one image."""

    name: str
    R: np.ndarray  # (3, 3)
    C: np.ndarray  # (3,)

    def __post_init__(self) -> None:
        object.__setattr__(self, "R", _require_rotation(self.R, f"pose {self.name!r} rotation"))
        C = np.asarray(self.C, dtype=np.float64).reshape(3)
        object.__setattr__(self, "C", C)


@dataclass(frozen=True, eq=False)
class SimilarityTransform:
    """x -> scale * Q @ x + t with Q a proper rotation and scale > 0."""

    scale: float
    Q: np.ndarray  # (3, 3)
    t: np.ndarray  # (3,)

    def __post_init__(self) -> None:
        if not (math.isfinite(self.scale) and self.scale > 0.0):
            raise ValueError(f"scale must be finite and positive, got {self.scale}")
        object.__setattr__(self, "Q", _require_rotation(self.Q, "similarity rotation"))
        object.__setattr__(self, "t", np.asarray(self.t, dtype=np.float64).reshape(3))

    def apply_point(self, p: np.ndarray) -> np.ndarray:
        return self.scale * (self.Q @ np.asarray(p, dtype=np.float64)) + self.t


def fit_similarity(source_centers, target_centers) -> SimilarityTransform:
    """Least-squares similarity aligning source points onto target points.

    Closed-form solution via the SVD of the centered covariance with
    determinant sign correction, minimizing sum ||s Q x_i + t - y_i||^2.
    Needs at least 3 pairs that are neither coincident nor collinear.
    """
    src = np.asarray(source_centers, dtype=np.float64).reshape(-1, 3)
    dst = np.asarray(target_centers, dtype=np.float64).reshape(-1, 3)
    if src.shape != dst.shape:
        raise ValueError("point sets disagree in length")
    n = len(src)
    if n < 3:
        raise DegeneracyError(f"need at least 3 point pairs, got {n}")

    mu_src = src.mean(axis=0)
    mu_dst = dst.mean(axis=0)
    x = src - mu_src
    y = dst - mu_dst

    var_src = float(np.einsum("ij,ij->", x, x)) / n
    if var_src <= 1e-18:
        raise DegeneracyError("source points coincide; similarity is undetermined")
    spread = np.linalg.svd(x, compute_uv=False)
    if spread[1] <= 1e-9 * spread[0]:
        raise DegeneracyError("source points are collinear; rotation is undetermined")

    cov = (y.T @ x) / n
    U, d, Vt = np.linalg.svd(cov)
    sign = np.ones(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0.0:
        sign[2] = -1.0
    Q = U @ np.diag(sign) @ Vt
    scale = float(np.dot(d, sign)) / var_src
    t = mu_dst - scale * (Q @ mu_src)
    return SimilarityTransform(scale=scale, Q=Q, t=t)


def apply_to_pose(T: SimilarityTransform, p: PoseRecord) -> PoseRecord:
    """Re-express a pose after the world mapping x -> s Q x + t.

    Centers map directly; world-to-camera rotations pick up Q^T on the right
    so that camera-frame observations are preserved.
    """
    return PoseRecord(name=p.name, R=p.R @ T.Q.T, C=T.apply_point(p.C))


def positional_error(p_est: PoseRecord, p_ref: PoseRecord) -> float:
    """L2 distance between camera centers, in reference units."""
    return float(np.linalg.norm(p_est.C - p_ref.C))


def angular_error(R_est: np.ndarray, R_ref: np.ndarray) -> float:
    """Rotation angle between two world-to-camera rotations, in degrees.

    The acos argument is clamped to [-1, 1] so float noise near identity
    yields 0 instead of NaN.
    """
    Re = _require_rotation(R_est, "estimated rotation")
    Rr = _require_rotation(R_ref, "reference rotation")
    cos_angle = (float(np.trace(Rr @ Re.T)) - 1.0) / 2.0
    cos_angle = min(1.0, max(-1.0, cos_angle))
    return math.degrees(math.acos(cos_angle))


def threshold_sweep(
    errors: Sequence[tuple[float, float]],
    pos_thresholds: Sequence[float],
    ang_threshold: float,
) -> list[tuple[float, float]]:
    """Percentage of images within each positional threshold at a fixed angle.

    ``errors`` holds one (position, angle) entry per target image;
    unreconstructed images carry +inf and therefore never pass, which keeps
    them in the denominator.
    """
    thresholds = [float(t) for t in pos_thresholds]
    if sorted(thresholds) != thresholds:
        raise ValueError("positional thresholds must be sorted ascending")
    total = len(errors)
    table = []
    for tau in thresholds:
        if total == 0:
            table.append((tau, 0.0))
            continue
        hits = sum(1 for pos, ang in errors if pos <= tau and ang <= ang_threshold)
        table.append((tau, 100.0 * hits / total))
    return table


def _quat_to_rotmat(qw: float, qx: float, qy: float, qz: float) -> np.ndarray:
    norm = math.sqrt(qw * qw + qx * qx + qy * qy + qz * qz)
    if norm == 0.0:
        raise ValueError("zero quaternion")
    w, x, y, z = qw / norm, qx / norm, qy / norm, qz / norm
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def _rotmat_to_quat(R: np.ndarray) -> tuple[float, float, float, float]:
    Rxx, Ryx, Rzx, Rxy, Ryy, Rzy, Rxz, Ryz, Rzz = R.flat
    K = np.array(
        [
            [Rxx - Ryy - Rzz, 0, 0, 0],
            [Ryx + Rxy, Ryy - Rxx - Rzz, 0, 0],
            [Rzx + Rxz, Rzy + Ryz, Rzz - Rxx - Ryy, 0],
            [Ryz - Rzy, Rzx - Rxz, Rxy - Ryx, Rxx + Ryy + Rzz],
        ]
    ) / 3.0
    eigvals, eigvecs = np.linalg.eigh(K)
    q = eigvecs[[3, 0, 1, 2], np.argmax(eigvals)]
    if q[0] < 0:
        q = -q
    return (float(q[0]), float(q[1]), float(q[2]), float(q[3]))


def read_pose_file(path: str | Path) -> dict[str, PoseRecord]:
    """Parse poses, keyed by image name in file order."""
    poses: dict[str, PoseRecord] = {}
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 8:
            raise ValueError(f"{path}:{line_no}: expected 8 fields, got {len(parts)}")
        name = parts[0]
        try:
            values = [float(v) for v in parts[1:]]
        except ValueError as exc:
            raise ValueError(f"{path}:{line_no}: non-numeric pose field") from exc
        if name in poses:
            raise ValueError(f"{path}:{line_no}: duplicate image {name!r}")
        R = _quat_to_rotmat(*values[:4])
        poses[name] = PoseRecord(name=name, R=R, C=np.array(values[4:]))
    return poses


def write_pose_file(path: str | Path, poses: Iterable[PoseRecord]) -> None:
    lines = []
    for pose in poses:
        qw, qx, qy, qz = _rotmat_to_quat(pose.R)
        cx, cy, cz = (float(v) for v in pose.C)
        lines.append(f"{pose.name} {qw!r} {qx!r} {qy!r} {qz!r} {cx!r} {cy!r} {cz!r}")
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def write_sweep_csv(path: str | Path, table: Sequence[tuple[float, float]]) -> None:
    lines = ["threshold_m,percent"]
    lines += [f"{tau:g},{percent:.2f}" for tau, percent in table]
    Path(path).write_text("\n".join(lines) + "\n")


def write_pose_error_csv(
    path: str | Path, rows: Sequence[tuple[str, float, float]]
) -> None:
    lines = ["name,position_error_m,angular_error_deg"]
    lines += [f"{name},{pos:.6g},{ang:.6g}" for name, pos, ang in rows]
    Path(path).write_text("\n".join(lines) + "\n")

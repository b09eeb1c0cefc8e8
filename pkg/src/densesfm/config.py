"""Pipeline configuration: one JSON file controls every tuning parameter."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path


@dataclass
class PipelineConfig:
    """Parameters for matching, relocalization, verification, and export.

    Defaults follow the reference operating point: conv4/conv3 max-pooling
    matching layers, a 2x2 relocalization window, 10 px RANSAC threshold,
    at most 5 homographies per pair, and best-5 pair retention only when
    explicitly enabled for repetitive scenes.
    """

    coarse_level: str = "conv4_pool"
    fine_level: str = "conv3_pool"
    k_window: int = 2
    ransac_threshold_px: float = 10.0
    max_homographies: int = 5
    min_inliers_per_model: int = 15
    max_ransac_iters: int = 2000
    best_n_pairs: int | None = None
    fixed_intrinsics: bool = False
    rng_seed: int = 0
    pair_list: str | None = None

    def validate(self) -> None:
        if not self.coarse_level or not self.fine_level:
            raise ValueError("matching level names must be non-empty")
        if self.k_window < 1:
            raise ValueError(f"k_window must be >= 1, got {self.k_window}")
        if self.ransac_threshold_px <= 0:
            raise ValueError(
                f"ransac_threshold_px must be positive, got {self.ransac_threshold_px}"
            )
        if self.max_homographies < 1:
            raise ValueError(f"max_homographies must be >= 1, got {self.max_homographies}")
        if self.min_inliers_per_model < 4:
            raise ValueError(
                f"min_inliers_per_model must be >= 4, got {self.min_inliers_per_model}"
            )
        if self.max_ransac_iters < 1:
            raise ValueError(f"max_ransac_iters must be >= 1, got {self.max_ransac_iters}")
        if self.best_n_pairs is not None and self.best_n_pairs < 1:
            raise ValueError(f"best_n_pairs must be >= 1, got {self.best_n_pairs}")
        if self.rng_seed < 0:
            raise ValueError(f"rng_seed must be >= 0, got {self.rng_seed}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        config = cls(**payload)
        config.validate()
        return config

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as stream:
            payload = json.load(stream)
        if not isinstance(payload, dict):
            raise ValueError(f"{path}: config must be a JSON object")
        return cls.from_dict(payload)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

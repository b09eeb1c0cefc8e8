"""Shared builders for synthetic pyramids and planted two-plane scenes."""

from __future__ import annotations

import numpy as np

from densesfm.pyramid import FeatureLevel, FeaturePyramid, make_level_names


def pool_half(data: np.ndarray) -> np.ndarray:
    """Mean-pool 2x2 child blocks with ceil-division edge handling."""
    h, w, c = data.shape
    out_h, out_w = -(-h // 2), -(-w // 2)
    acc = np.zeros((out_h, out_w, c), dtype=np.float64)
    cnt = np.zeros((out_h, out_w, 1), dtype=np.float64)
    for dy in (0, 1):
        for dx in (0, 1):
            sub = data[dy::2, dx::2]
            acc[: sub.shape[0], : sub.shape[1]] += sub
            cnt[: sub.shape[0], : sub.shape[1]] += 1.0
    return (acc / cnt).astype(np.float32)


def build_pyramid(image_id: str, base: np.ndarray, num_levels: int) -> FeaturePyramid:
    """Pyramid whose coarser levels are mean-pooled from the stride-1 base."""
    h, w, _ = base.shape
    datas = [np.ascontiguousarray(base, dtype=np.float32)]
    for _ in range(num_levels - 1):
        datas.append(pool_half(datas[-1]))
    datas.reverse()  # coarsest first
    strides = [2**i for i in range(num_levels - 1, -1, -1)]
    names = make_level_names(strides)
    levels = tuple(
        FeatureLevel(name=name, stride=stride, data=data)
        for name, stride, data in zip(names, strides, datas)
    )
    pyramid = FeaturePyramid(image_id=image_id, image_width=w, image_height=h, levels=levels)
    pyramid.validate()
    return pyramid


def random_pyramid(
    rng: np.random.Generator,
    image_width: int,
    image_height: int,
    channels: int,
    num_levels: int,
    image_id: str = "rand",
) -> FeaturePyramid:
    """Pyramid with independent random data per level (not pooled)."""
    strides = [2**i for i in range(num_levels - 1, -1, -1)]
    names = make_level_names(strides)
    levels = []
    for name, stride in zip(names, strides):
        h = -(-image_height // stride)
        w = -(-image_width // stride)
        data = rng.normal(size=(h, w, channels)).astype(np.float32)
        levels.append(FeatureLevel(name=name, stride=stride, data=data))
    pyramid = FeaturePyramid(
        image_id=image_id, image_width=image_width, image_height=image_height, levels=tuple(levels)
    )
    pyramid.validate()
    return pyramid


def translation_h(dx: float, dy: float) -> np.ndarray:
    H = np.eye(3)
    H[0, 2] = dx
    H[1, 2] = dy
    return H


class TwoPlaneScene:
    """Multi-image scene of two textured patches under integer translations.

    Patch k in image i sits at ``offsets_k[i]``; offsets are multiples of
    the coarsest stride so every pyramid level of one image is an exact
    translate of the others where the patches overlap. The ground-truth
    homography taking image i to image j on plane k is the translation
    ``offsets_k[j] - offsets_k[i]``.
    """

    def __init__(
        self,
        num_images: int = 5,
        width: int = 512,
        height: int = 448,
        channels: int = 8,
        num_levels: int = 5,
        seed: int = 7,
    ):
        rng = np.random.default_rng(seed)
        self.num_images = num_images
        self.width = width
        self.height = height
        # per-image motion of 2 coarse cells; the two planes move along
        # different axes so no single homography can explain both within a
        # 10 px threshold
        step = 2 * 2 ** (num_levels - 1)
        self.tex1 = rng.normal(size=(96, 128, channels))
        self.tex2 = rng.normal(size=(96, 128, channels))
        self.offsets1 = [(32 + step * i, 32) for i in range(num_images)]
        self.offsets2 = [(width // 2, 192 + step * i) for i in range(num_images)]
        self.pyramids = []
        for i in range(num_images):
            field = rng.normal(scale=0.05, size=(height, width, channels))
            for tex, (ox, oy) in ((self.tex1, self.offsets1[i]), (self.tex2, self.offsets2[i])):
                th, tw, _ = tex.shape
                field[oy : oy + th, ox : ox + tw] = tex
            self.pyramids.append(build_pyramid(f"img{i:02d}", field.astype(np.float32), num_levels))

    def planted_homographies(self, i: int, j: int) -> list[np.ndarray]:
        """Ground-truth plane homographies mapping image i pixels to image j."""
        out = []
        for offsets in (self.offsets1, self.offsets2):
            dx = offsets[j][0] - offsets[i][0]
            dy = offsets[j][1] - offsets[i][1]
            out.append(translation_h(dx, dy))
        return out

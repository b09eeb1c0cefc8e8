"""Run VGG-16 over images and write dense-feature pyramids.

The five tapped activations are the conv1..conv4 max-pooling outputs plus
conv1_2 (post-ReLU), giving strides 16/8/4/2/1 with 512/256/128/64/64
channels. Pooling layers are switched to ceil mode so grid shapes satisfy
ceil(extent / stride) for any input size. Images are taken at native
resolution unless ``max_dim`` caps the longer side.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .dpyrfile import write_pyramid_file

# name -> (features index of the tapped output, stride, channels)
LAYER_TAPS = {
    "conv4_pool": (23, 16, 512),
    "conv3_pool": (16, 8, 256),
    "conv2_pool": (9, 4, 128),
    "conv1_pool": (4, 2, 64),
    "conv1_2": (3, 1, 64),
}
DEFAULT_LAYERS = ("conv4_pool", "conv3_pool", "conv2_pool", "conv1_pool", "conv1_2")

_IMAGENET_MEAN = (0.485, 0.456, 0.406)
_IMAGENET_STD = (0.229, 0.224, 0.225)


class WeightsUnavailableError(RuntimeError):
    """Pretrained weights could not be loaded or downloaded."""


@dataclass
class ExtractionSpec:
    """What to extract: layer set, inputs, destination, resize policy."""

    images: list[Path]
    out_dir: Path
    layers: tuple[str, ...] = DEFAULT_LAYERS
    max_dim: int | None = None
    weights: str = "pretrained"  # "pretrained", "random", or a state-dict path
    seed: int = 0  # initialization seed for random weights

    def __post_init__(self) -> None:
        unknown = [name for name in self.layers if name not in LAYER_TAPS]
        if unknown:
            raise ValueError(f"unknown layers {unknown}; choose from {sorted(LAYER_TAPS)}")
        strides = sorted((LAYER_TAPS[name][1] for name in self.layers), reverse=True)
        if not strides or strides[-1] != 1:
            raise ValueError(f"layer strides {strides} must end at stride 1")
        for coarse, fine in zip(strides, strides[1:]):
            if coarse != 2 * fine:
                raise ValueError(f"layer strides {strides} must halve step by step")
        if self.max_dim is not None and self.max_dim < 1:
            raise ValueError(f"max_dim must be positive, got {self.max_dim}")


def load_backbone(weights: str = "pretrained", seed: int = 0) -> torch.nn.Module:
    """VGG-16 feature stack with ceil-mode pooling, in eval mode on CPU."""
    import torchvision

    if weights == "pretrained":
        try:
            model = torchvision.models.vgg16(
                weights=torchvision.models.VGG16_Weights.IMAGENET1K_V1
            )
        except Exception as exc:
            raise WeightsUnavailableError(
                "could not obtain ImageNet VGG-16 weights (offline?); pass "
                "--weights <state_dict.pth> or --weights random"
            ) from exc
    elif weights == "random":
        torch.manual_seed(seed)
        model = torchvision.models.vgg16(weights=None)
    else:
        model = torchvision.models.vgg16(weights=None)
        try:
            state = torch.load(weights, map_location="cpu", weights_only=True)
        except Exception as exc:
            raise WeightsUnavailableError(f"could not load weights from {weights!r}") from exc
        model.load_state_dict(state)

    for module in model.features:
        if isinstance(module, torch.nn.MaxPool2d):
            module.ceil_mode = True
    model.eval()
    return model


def preprocess(path: str | Path, max_dim: int | None = None) -> tuple[torch.Tensor, int, int]:
    """Load an image as a normalized NCHW tensor; returns (tensor, width, height)."""
    image = Image.open(path).convert("RGB")
    if max_dim is not None and max(image.size) > max_dim:
        scale = max_dim / max(image.size)
        new_size = (max(1, round(image.width * scale)), max(1, round(image.height * scale)))
        image = image.resize(new_size, Image.LANCZOS)
    array = np.asarray(image, dtype=np.float32) / 255.0
    array = (array - np.array(_IMAGENET_MEAN, np.float32)) / np.array(_IMAGENET_STD, np.float32)
    tensor = torch.from_numpy(np.ascontiguousarray(array.transpose(2, 0, 1)))[None]
    return tensor, image.width, image.height


def extract_levels(
    model: torch.nn.Module, tensor: torch.Tensor, layers: tuple[str, ...]
) -> list[tuple[str, int, np.ndarray]]:
    """Tapped activations as (name, stride, HWC float32 array), coarsest first."""
    wanted = {LAYER_TAPS[name][0]: name for name in layers}
    last_tap = max(wanted)
    captured: dict[str, torch.Tensor] = {}
    with torch.no_grad():
        out = tensor
        for index, module in enumerate(model.features):
            out = module(out)
            if index in wanted:
                captured[wanted[index]] = out
            if index >= last_tap:
                break
    levels = []
    for name in sorted(layers, key=lambda n: -LAYER_TAPS[n][1]):
        stride = LAYER_TAPS[name][1]
        data = captured[name][0].permute(1, 2, 0).contiguous().numpy()
        levels.append((name, stride, data))
    return levels


def extract_image(model: torch.nn.Module, image_path: Path, spec: ExtractionSpec) -> Path:
    """Extract one image to ``<out_dir>/<stem>.dpyr``; returns the file path."""
    tensor, width, height = preprocess(image_path, spec.max_dim)
    levels = extract_levels(model, tensor, spec.layers)
    spec.out_dir.mkdir(parents=True, exist_ok=True)
    out_path = spec.out_dir / f"{image_path.stem}.dpyr"
    write_pyramid_file(out_path, width, height, levels)
    return out_path


def run_extraction(spec: ExtractionSpec) -> list[Path]:
    model = load_backbone(spec.weights, spec.seed)
    return [extract_image(model, Path(p), spec) for p in spec.images]

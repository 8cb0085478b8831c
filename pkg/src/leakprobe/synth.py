"""Synthetic datasets with capture bias injected by construction.

Every image is a centred elliptical "leaf" on a flat background. The leaf's
shape and intensity distribution is the same for all classes, so any accuracy
above chance has to come from the injected bias: a class-dependent background
level, or a class-dependent box blur over the whole frame.
"""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass

import numpy as np

from .dataset import ImageRecord, LabeledImageSet
from .rng import LaneXoshiro256, substream_seed

BASE_LEVEL = 120.0
LEVEL_SPREAD = 60.0
AXIS_RANGE = (0.2, 0.35)
LEAF_INTENSITY = (50.0, 70.0)


class BiasChannel(str, enum.Enum):
    BACKGROUND_LEVEL = "bg"
    BLUR = "blur"


@dataclass(frozen=True)
class SynthConfig:
    n_classes: int = 5
    n_per_class: int = 200
    width: int = 64
    height: int = 64
    bias_strength: float = 1.0
    bias_channel: BiasChannel = BiasChannel.BACKGROUND_LEVEL
    background_noise_sd: float = 5.0
    seed: int = 42

    def __post_init__(self):
        object.__setattr__(self, "bias_channel", BiasChannel(self.bias_channel))
        if self.n_classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.n_classes}")
        if self.n_per_class < 1:
            raise ValueError(f"n_per_class must be >= 1, got {self.n_per_class}")
        if self.width < 16 or self.height < 16:
            raise ValueError(f"synthetic images must be at least 16x16, got {self.width}x{self.height}")
        if not 0.0 <= self.bias_strength <= 1.0:
            raise ValueError(f"bias_strength must lie in [0, 1], got {self.bias_strength}")
        if self.background_noise_sd < 0:
            raise ValueError("background_noise_sd must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bias_channel"] = self.bias_channel.value
        return d


def class_names(n_classes: int) -> list[str]:
    width = len(str(n_classes - 1))
    return [f"class_{k:0{width}d}" for k in range(n_classes)]


def level_offset(k: int, config: SynthConfig) -> float:
    """Background offset of class ``k`` (zero unless the bias is on background level)."""
    if config.bias_channel is not BiasChannel.BACKGROUND_LEVEL:
        return 0.0
    K = config.n_classes
    return config.bias_strength * (k - (K - 1) / 2.0) * (LEVEL_SPREAD / K)


def blur_radius(k: int, config: SynthConfig) -> int:
    if config.bias_channel is not BiasChannel.BLUR:
        return 0
    return int(math.floor(config.bias_strength * k + 0.5))


def box_blur(image: np.ndarray, radius: int) -> np.ndarray:
    """Mean over a ``(2r+1)^2`` window with edge replication; float in, float out."""
    if radius <= 0:
        return image.astype(np.float64, copy=True)
    size = 2 * radius + 1
    padded = np.pad(image.astype(np.float64), radius, mode="edge")
    # summed-area table
    sat = np.zeros((padded.shape[0] + 1, padded.shape[1] + 1))
    sat[1:, 1:] = padded.cumsum(0).cumsum(1)
    h, w = image.shape
    total = sat[size:size + h, size:size + w] - sat[:h, size:size + w] - sat[size:size + h, :w] + sat[:h, :w]
    return total / (size * size)


def _quantize(x: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(x + 0.5), 0, 255).astype(np.uint8)


def _render_chunk(config: SynthConfig, first: int, stop: int):
    per = config.n_per_class
    w, h = config.width, config.height
    n = stop - first
    lanes = LaneXoshiro256([substream_seed(config.seed, i) for i in range(first, stop)])
    params = lanes.uniform_block(4)
    noise = lanes.normal_block(w * h).reshape(n, h, w)

    short = min(w, h)
    lo, hi = AXIS_RANGE
    semi_a = (lo + (hi - lo) * params[:, 0]) * short
    semi_b = (lo + (hi - lo) * params[:, 1]) * short
    angle = math.pi * params[:, 2]
    leaf_level = LEAF_INTENSITY[0] + (LEAF_INTENSITY[1] - LEAF_INTENSITY[0]) * params[:, 3]

    ys, xs = np.mgrid[0:h, 0:w]
    dx = (xs + 0.5 - w / 2.0)[None]
    dy = (ys + 0.5 - h / 2.0)[None]
    c, s = np.cos(angle)[:, None, None], np.sin(angle)[:, None, None]
    u = (dx * c + dy * s) / semi_a[:, None, None]
    v = (-dx * s + dy * c) / semi_b[:, None, None]
    masks = u * u + v * v <= 1.0

    labels = np.arange(first, stop) // per
    offsets = np.array([level_offset(int(k), config) for k in labels])
    frames = np.where(masks, leaf_level[:, None, None], (BASE_LEVEL + offsets)[:, None, None])
    frames += config.background_noise_sd * noise
    for i in range(n):
        r = blur_radius(int(labels[i]), config)
        if r:
            frames[i] = box_blur(frames[i], r)
    return frames, masks, labels


def _render(config: SynthConfig, chunk: int = 128):
    """Quantised frames, leaf masks and labels for every image, class-major.

    Image ``i`` draws from substream ``i`` of the seed: four uniforms for the
    leaf (two semi-axes, orientation, intensity), then one normal per pixel in
    row-major order. Chunking only bounds memory; it never changes a pixel.
    """
    n = config.n_classes * config.n_per_class
    frames = np.empty((n, config.height, config.width), dtype=np.uint8)
    masks = np.empty((n, config.height, config.width), dtype=bool)
    labels = np.empty(n, dtype=np.int64)
    for first in range(0, n, chunk):
        stop = min(n, first + chunk)
        f, m, lab = _render_chunk(config, first, stop)
        frames[first:stop] = _quantize(f)
        masks[first:stop] = m
        labels[first:stop] = lab
    return frames, masks, labels


def _as_set(name, frames, labels, names, per) -> LabeledImageSet:
    records = [
        ImageRecord(f"synthetic/{names[k]}/{i % per:05d}.png", names[k], frames[i])
        for i, k in enumerate(labels)
    ]
    return LabeledImageSet(name, records, {nm: k for k, nm in enumerate(names)})


def generate(config: SynthConfig, name: str = "synthetic") -> LabeledImageSet:
    return generate_with_foreground(config, name)[0]


def generate_with_foreground(config: SynthConfig, name: str = "synthetic"):
    """The full images plus their foreground-only counterparts.

    The foreground copy keeps leaf pixels (after any blur, so capture bias
    carries over) and paints everything else pure black; leaf pixels are
    floored at 1 so they never read as background.
    """
    full, masks, labels = _render(config)
    fg = np.where(masks, np.maximum(full, 1), 0).astype(np.uint8)
    names = class_names(config.n_classes)
    per = config.n_per_class
    return _as_set(name, full, labels, names, per), _as_set(f"{name}_fg", fg, labels, names, per)

"""Label-uninformative image probes: the 8-pixel border sample and a blur score."""
from __future__ import annotations

import csv
import enum
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dataset import ImageRecord, LabeledImageSet
from .errors import ProbeError

LUMA_WEIGHTS = (0.299, 0.587, 0.114)
LAPLACIAN_KERNEL = ((0, 1, 0), (1, -4, 1), (0, 1, 0))
BLUR_METRIC_NAME = "variance_of_laplacian_3x3_valid"


class ProbeId(str, enum.Enum):
    EIGHT_PIXEL = "8px"
    BLUR = "blur"

    @classmethod
    def parse(cls, value) -> "ProbeId":
        if isinstance(value, ProbeId):
            return value
        aliases = {"8px": cls.EIGHT_PIXEL, "eightpixel": cls.EIGHT_PIXEL, "blur": cls.BLUR}
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"unknown probe {value!r}; valid probes: 8px, blur") from None


@dataclass(frozen=True)
class ProbeVector:
    probe_id: ProbeId
    features: np.ndarray


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    values: np.ndarray  # (N, D) float64
    labels: np.ndarray  # (N,) int64 dense class indices
    probe_id: ProbeId
    n_classes: int
    paths: tuple[str, ...] = ()

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ValueError(f"feature values must be 2-D, got shape {self.values.shape}")
        if self.labels.shape != (self.values.shape[0],):
            raise ValueError("one label per row required")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValueError(f"labels must lie in [0, {self.n_classes})")

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def take(self, indices) -> "FeatureMatrix":
        idx = np.asarray(indices, dtype=np.int64)
        paths = tuple(self.paths[i] for i in idx) if self.paths else ()
        return FeatureMatrix(self.values[idx], self.labels[idx], self.probe_id, self.n_classes, paths)


def eight_pixel_coordinates(width: int, height: int) -> list[tuple[int, int]]:
    """(x, y) of the four corners then the four side centres."""
    cx, cy = width // 2, height // 2
    return [
        (0, 0), (width - 1, 0), (0, height - 1), (width - 1, height - 1),
        (cx, 0), (cx, height - 1), (0, cy), (width - 1, cy),
    ]


def eight_pixel_probe(image: ImageRecord) -> ProbeVector:
    if image.width < 2 or image.height < 2:
        raise ProbeError(
            f"8-pixel probe needs at least 2x2 pixels, image is {image.width}x{image.height}",
            image.source_path,
        )
    coords = eight_pixel_coordinates(image.width, image.height)
    xs = [x for x, _ in coords]
    ys = [y for _, y in coords]
    feats = image.pixels[ys, xs, :].reshape(-1).astype(np.float64)
    return ProbeVector(ProbeId.EIGHT_PIXEL, feats)


def luma(pixels: np.ndarray) -> np.ndarray:
    """Rec. 601 luma as float64; identity for single-channel input."""
    px = np.asarray(pixels, dtype=np.float64)
    if px.ndim == 2:
        return px
    if px.shape[2] == 1:
        return px[:, :, 0]
    return px[:, :, 0] * LUMA_WEIGHTS[0] + px[:, :, 1] * LUMA_WEIGHTS[1] + px[:, :, 2] * LUMA_WEIGHTS[2]


def laplacian_valid(gray: np.ndarray) -> np.ndarray:
    """4-neighbour Laplacian over interior pixels only (output is (H-2, W-2))."""
    return (
        gray[:-2, 1:-1] + gray[2:, 1:-1] + gray[1:-1, :-2] + gray[1:-1, 2:]
        - 4.0 * gray[1:-1, 1:-1]
    )


def blur_metric(image: ImageRecord) -> float:
    """Population variance of the Laplacian response; lower means blurrier."""
    if image.width < 3 or image.height < 3:
        raise ProbeError(
            f"blur metric needs at least 3x3 pixels, image is {image.width}x{image.height}",
            image.source_path,
        )
    return float(np.var(laplacian_valid(luma(image.pixels))))


def masked_blur_metric(image: ImageRecord, mask: np.ndarray) -> float:
    """Blur metric restricted to the ``True`` region of ``mask``.

    Only Laplacian responses whose whole 5-point stencil lies inside the mask
    count, so a segmentation boundary adds no artificial edge energy. Returns
    0.0 when no stencil fits.
    """
    if image.width < 3 or image.height < 3:
        raise ProbeError(
            f"blur metric needs at least 3x3 pixels, image is {image.width}x{image.height}",
            image.source_path,
        )
    m = np.asarray(mask, dtype=bool)
    if m.shape != (image.height, image.width):
        raise ProbeError(f"mask shape {m.shape} does not match image {image.height}x{image.width}", image.source_path)
    inside = m[1:-1, 1:-1] & m[:-2, 1:-1] & m[2:, 1:-1] & m[1:-1, :-2] & m[1:-1, 2:]
    if not inside.any():
        return 0.0
    return float(np.var(laplacian_valid(luma(image.pixels))[inside]))


def foreground_mask(foreground: ImageRecord) -> np.ndarray:
    """Leaf pixels of a black-background foreground image."""
    return foreground.pixels.any(axis=2)


def blur_probe(image: ImageRecord) -> ProbeVector:
    return ProbeVector(ProbeId.BLUR, np.array([blur_metric(image)]))


def separate_background(original: ImageRecord, foreground: ImageRecord) -> ImageRecord:
    """Keep ``original`` where ``foreground`` is pure black, black elsewhere."""
    if original.pixels.shape != foreground.pixels.shape:
        raise ProbeError(
            f"shape mismatch: original {original.pixels.shape} vs foreground {foreground.pixels.shape}",
            foreground.source_path,
        )
    background_mask = ~foreground.pixels.any(axis=2, keepdims=True)
    out = np.where(background_mask, original.pixels, np.uint8(0))
    return ImageRecord(original.source_path, original.label, out)


PROBES = {ProbeId.EIGHT_PIXEL: eight_pixel_probe, ProbeId.BLUR: blur_probe}


def probe_decisions(probe, region: str = "full frame") -> dict:
    """What a report should echo about how ``probe`` samples an image."""
    probe = ProbeId.parse(probe)
    if probe is ProbeId.EIGHT_PIXEL:
        return {
            "probe": probe.value,
            "sampling": "single pixels",
            "coordinates": "(0,0),(W-1,0),(0,H-1),(W-1,H-1),(W//2,0),(W//2,H-1),(0,H//2),(W-1,H//2)",
            "channel_order": "channels of each pixel emitted consecutively",
        }
    return {
        "probe": probe.value,
        "blur_metric": BLUR_METRIC_NAME,
        "luma": "0.299R+0.587G+0.114B",
        "border": "valid interior, no padding",
        "region": region,
    }


def build_feature_matrix(dataset: LabeledImageSet, probe, threads: int = 1, masks=None) -> FeatureMatrix:
    """Apply ``probe`` to every record. ``masks`` (one boolean HxW array per
    record) restricts the blur probe to a region; the 8-pixel probe ignores it."""
    probe = ProbeId.parse(probe)
    fn = PROBES[probe]
    if masks is not None:
        if probe is not ProbeId.BLUR:
            raise ValueError("masks are only meaningful for the blur probe")
        if len(masks) != len(dataset):
            raise ValueError(f"{len(masks)} masks for {len(dataset)} images")
        records = list(dataset.records)
        fn = lambda i: ProbeVector(ProbeId.BLUR, np.array([masked_blur_metric(records[i], masks[i])]))
        items = range(len(records))
    else:
        items = dataset.records
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            vectors = list(pool.map(fn, items))
    else:
        vectors = [fn(r) for r in items]
    widths = {len(v.features) for v in vectors}
    if len(widths) > 1:
        first = next(r for r, v in zip(dataset.records, vectors) if len(v.features) != len(vectors[0].features))
        raise ProbeError(f"inconsistent feature widths {sorted(widths)}; mixed channel counts?", first.source_path)
    d = widths.pop() if widths else 0
    values = np.vstack([v.features for v in vectors]) if vectors else np.empty((0, d))
    return FeatureMatrix(
        values.astype(np.float64),
        dataset.labels(),
        probe,
        dataset.n_classes,
        tuple(r.source_path for r in dataset.records),
    )


def write_probe_csv(dataset: LabeledImageSet, matrix: FeatureMatrix, out=None) -> None:
    """``path,label,f0..f{D-1}``; integers print without a decimal point."""
    fh = out if out is not None else sys.stdout
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["path", "label"] + [f"f{i}" for i in range(matrix.cols)])
    for rec, row in zip(dataset.records, matrix.values):
        writer.writerow([rec.source_path, rec.label] + [_fmt(v) for v in row])


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() and abs(v) < 2**53 else repr(float(v))

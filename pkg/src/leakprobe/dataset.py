"""Image dataset ingestion and seeded train/test splitting."""
from __future__ import annotations

import csv
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    CountMismatchError,
    DatasetError,
    TruncatedIdxError,
    WrongMagicError,
)
from .rng import Xoshiro256

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg"}
IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True, eq=False)
class ImageRecord:
    """One decoded image.

    ``pixels`` is a read-only uint8 array of shape ``(height, width, channels)``;
    its C-order flattening is the row-major intensity buffer.
    """

    source_path: str
    label: str
    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise DatasetError(f"expected HxWx1 or HxWx3 pixels, got shape {px.shape}", self.source_path)
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise DatasetError("image has zero width or height", self.source_path)
        if px.dtype != np.uint8:
            if px.size and (px.min() < 0 or px.max() > 255):
                raise DatasetError("intensities outside [0, 255]", self.source_path)
            px = px.astype(np.uint8)
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def __eq__(self, other):
        if not isinstance(other, ImageRecord):
            return NotImplemented
        return (
            self.source_path == other.source_path
            and self.label == other.label
            and self.pixels.shape == other.pixels.shape
            and np.array_equal(self.pixels, other.pixels)
        )

    __hash__ = None


@dataclass(frozen=True)
class LabeledImageSet:
    name: str
    records: tuple[ImageRecord, ...]
    class_index: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        if not self.class_index:
            object.__setattr__(self, "class_index", index_classes(r.label for r in self.records))
        if sorted(self.class_index.values()) != list(range(len(self.class_index))):
            raise DatasetError(f"class indices must be exactly 0..K-1, got {sorted(self.class_index.values())}")
        for rec in self.records:
            if rec.label not in self.class_index:
                raise DatasetError(f"label {rec.label!r} missing from class index", rec.source_path)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def n_classes(self) -> int:
        return len(self.class_index)

    @property
    def class_names(self) -> list[str]:
        return sorted(self.class_index, key=self.class_index.__getitem__)

    def labels(self) -> np.ndarray:
        return np.array([self.class_index[r.label] for r in self.records], dtype=np.int64)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must lie in (0, 1), got {self.train_fraction}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


def index_classes(labels: Iterable[str]) -> dict[str, int]:
    """Dense class indices in lexicographic class-name order."""
    return {name: i for i, name in enumerate(sorted(set(labels)))}


def _decode(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            im.load()
            return _normalize_mode(im)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise DatasetError(f"cannot decode image ({exc})", str(path)) from exc


def _normalize_mode(im: Image.Image) -> np.ndarray:
    # Grayscale stays single-channel; everything else becomes 8-bit RGB with
    # any alpha composited over black.
    if im.mode in ("1", "L"):
        return np.asarray(im.convert("L"), dtype=np.uint8)
    if im.mode in ("I;16", "I;16B", "I;16L", "I"):
        arr = np.asarray(im, dtype=np.float64)
        peak = 65535.0 if arr.max(initial=0) > 255 else 255.0
        return np.clip(np.floor(arr * 255.0 / peak + 0.5), 0, 255).astype(np.uint8)
    if im.mode == "LA" or (im.mode == "P" and "transparency" in im.info) or im.mode in ("RGBA", "PA"):
        rgba = np.asarray(im.convert("RGBA"), dtype=np.uint16)
        alpha = rgba[:, :, 3:4]
        rgb = (rgba[:, :, :3] * alpha + 127) // 255
        if im.mode == "LA":
            return rgb[:, :, 0].astype(np.uint8)
        return rgb.astype(np.uint8)
    return np.asarray(im.convert("RGB"), dtype=np.uint8)


def _list_images(class_dir: Path) -> list[Path]:
    return sorted(
        (p for p in class_dir.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS),
        key=lambda p: p.name,
    )


def load_image_folder(root, name: str | None = None, threads: int = 1) -> LabeledImageSet:
    """Load ``root/<class>/<image>`` into a :class:`LabeledImageSet`.

    Classes and files are visited in lexicographic order, so two loads of the
    same tree are identical regardless of decode parallelism.  If a dataset
    mixes grayscale and colour files, grayscale images are replicated to RGB.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError("dataset root is not a directory", str(root))
    class_dirs = sorted((p for p in root.iterdir() if p.is_dir()), key=lambda p: p.name)
    if not class_dirs:
        raise DatasetError("no class directories found", str(root))

    jobs: list[tuple[str, Path]] = []
    for d in class_dirs:
        files = _list_images(d)
        if not files:
            raise DatasetError("class directory contains no PNG/JPEG images", str(d))
        jobs.extend((d.name, f) for f in files)

    paths = [f for _, f in jobs]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            arrays = list(pool.map(_decode, paths))
    else:
        arrays = [_decode(p) for p in paths]

    if any(a.ndim == 3 for a in arrays) and any(a.ndim == 2 for a in arrays):
        arrays = [np.repeat(a[:, :, None], 3, axis=2) if a.ndim == 2 else a for a in arrays]

    records = [ImageRecord(str(p), label, a) for (label, p), a in zip(jobs, arrays)]
    return LabeledImageSet(name or root.name, records, index_classes(d.name for d in class_dirs))


def _read_header(data: bytes, path, magic: int, dims: int) -> tuple[int, ...]:
    need = 4 * (dims + 1)
    if len(data) < 4:
        raise TruncatedIdxError(f"header needs {need} bytes, file has {len(data)}", path)
    found = struct.unpack(">I", data[:4])[0]
    if found != magic:
        raise WrongMagicError(f"wrong magic number 0x{found:08x}, expected 0x{magic:08x}", path)
    if len(data) < need:
        raise TruncatedIdxError(f"header needs {need} bytes, file has {len(data)}", path)
    return struct.unpack(f">{dims}I", data[4:need])


def load_idx_pair(images_path, labels_path, name: str | None = None) -> LabeledImageSet:
    """Read a big-endian IDX image/label file pair (the handwritten-digit format)."""
    images_path, labels_path = Path(images_path), Path(labels_path)
    img_bytes = images_path.read_bytes()
    lbl_bytes = labels_path.read_bytes()
    count, rows, cols = _read_header(img_bytes, str(images_path), IDX_IMAGES_MAGIC, 3)
    (n_labels,) = _read_header(lbl_bytes, str(labels_path), IDX_LABELS_MAGIC, 1)
    if count != n_labels:
        raise CountMismatchError(
            f"images file holds {count} items but labels file holds {n_labels}", str(images_path)
        )
    payload = count * rows * cols
    if len(img_bytes) - 16 < payload:
        raise TruncatedIdxError(f"expected {payload} pixel bytes, found {len(img_bytes) - 16}", str(images_path))
    if len(lbl_bytes) - 8 < count:
        raise TruncatedIdxError(f"expected {count} label bytes, found {len(lbl_bytes) - 8}", str(labels_path))

    pixels = np.frombuffer(img_bytes, dtype=np.uint8, count=payload, offset=16).reshape(count, rows, cols)
    labels = np.frombuffer(lbl_bytes, dtype=np.uint8, count=count, offset=8)
    if count and labels.max() > 9:
        raise DatasetError(f"label value {int(labels.max())} is not a digit", str(labels_path))
    records = [
        ImageRecord(f"{images_path}#{i}", str(int(labels[i])), pixels[i]) for i in range(count)
    ]
    return LabeledImageSet(name or images_path.stem, records, {str(d): d for d in range(10)})


def write_idx_pair(images: np.ndarray, labels: Sequence[int], images_path, labels_path) -> None:
    """Write ``(count, rows, cols)`` uint8 images and digit labels as an IDX pair."""
    images = np.asarray(images, dtype=np.uint8)
    count, rows, cols = images.shape
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, count, rows, cols))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, count))
        fh.write(np.asarray(labels, dtype=np.uint8).tobytes())


def split(dataset, spec: SplitSpec) -> tuple[list[int], list[int]]:
    """Shuffle ``0..N-1`` with the seeded stream; the first ``floor(f*N)`` go to train.

    Deliberately not stratified.
    """
    n = len(dataset)
    if n < 2:
        raise DatasetError(f"need at least 2 items to form train and test partitions, got {n}")
    order = list(range(n))
    Xoshiro256(spec.seed).shuffle(order)
    n_train = int(spec.train_fraction * n)
    if n_train == 0 or n_train == n:
        raise DatasetError(f"train_fraction {spec.train_fraction} leaves an empty partition for N={n}")
    return order[:n_train], order[n_train:]


def random_guess_accuracy(n_classes: int) -> float:
    """Chance accuracy in percent for a balanced ``n_classes``-way problem."""
    if n_classes < 1:
        raise ValueError(f"class count must be at least 1, got {n_classes}")
    return 100.0 / n_classes


def permute_labels(dataset: LabeledImageSet, seed: int) -> LabeledImageSet:
    """Copy of ``dataset`` with labels shuffled across records (a null control)."""
    labels = [r.label for r in dataset.records]
    Xoshiro256(seed).shuffle(labels)
    records = [ImageRecord(r.source_path, lab, r.pixels) for r, lab in zip(dataset.records, labels)]
    return LabeledImageSet(f"{dataset.name}_permuted", records, dict(dataset.class_index))


def subset(dataset: LabeledImageSet, indices: Sequence[int], name: str | None = None) -> LabeledImageSet:
    return LabeledImageSet(
        name or dataset.name, [dataset.records[i] for i in indices], dict(dataset.class_index)
    )


def write_manifest(dataset: LabeledImageSet, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "label", "width", "height", "channels"])
        for r in dataset.records:
            writer.writerow([r.source_path, r.label, r.width, r.height, r.channels])


def write_image_folder(dataset: LabeledImageSet, root) -> list[str]:
    """Write each record as ``root/<label>/<basename>.png``; returns the written paths."""
    root = Path(root)
    written = []
    for rec in dataset.records:
        d = root / rec.label
        d.mkdir(parents=True, exist_ok=True)
        stem = os.path.splitext(os.path.basename(rec.source_path))[0]
        out = d / f"{stem}.png"
        px = rec.pixels[:, :, 0] if rec.channels == 1 else rec.pixels
        Image.fromarray(px).save(out)
        written.append(str(out))
    return written

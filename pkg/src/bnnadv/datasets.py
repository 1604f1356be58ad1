"""Datasets: the two-moons generator, IDX image containers, splits.

IDX is the standard MNIST binary layout: big-endian u32 magic (0x00000803
for u8 image tensors, 0x00000801 for u8 label vectors), big-endian u32
dimension sizes, then the raw u8 payload. Files may be gzip-compressed;
compression is detected from the two-byte gzip signature.
"""

from __future__ import annotations

import gzip
import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .errors import IdxFormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    """Inputs (N, d), integer labels (N,), and the class count."""

    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int
    name: str = ""
    bounds: tuple[float, float] | None = None  # input domain, e.g. (0, 1) for pixels

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2 or self.inputs.shape[0] < 1:
            raise ValueError(f"inputs must be a non-empty (N, d) matrix, got {self.inputs.shape}")
        if self.labels.shape != (self.inputs.shape[0],):
            raise ValueError(
                f"{self.inputs.shape[0]} inputs but labels shaped {self.labels.shape}"
            )
        if not np.all(np.isfinite(self.inputs)):
            raise ValueError("inputs contain non-finite values")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ValueError(f"labels outside [0, {self.num_classes})")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.inputs.tobytes())
        h.update(self.labels.tobytes())
        h.update(str(self.num_classes).encode())
        return h.hexdigest()[:16]


def make_half_moons(n: int, noise_std: float = 0.1, rng=None) -> Dataset:
    """Two interleaving arcs, n/2 points each, with isotropic Gaussian noise.

    Class 0 sits on (cos t, sin t) and class 1 on (1 - cos t, 0.5 - sin t)
    for t drawn uniformly from [0, pi].
    """
    if n <= 0 or n % 2 != 0:
        raise ValueError(f"n must be a positive even integer, got {n}")
    if noise_std < 0:
        raise ValueError(f"noise_std must be >= 0, got {noise_std}")
    rng = np.random.default_rng(rng)
    half = n // 2
    t0 = rng.uniform(0.0, np.pi, half)
    t1 = rng.uniform(0.0, np.pi, half)
    pts = np.empty((n, 2))
    pts[:half, 0] = np.cos(t0)
    pts[:half, 1] = np.sin(t0)
    pts[half:, 0] = 1.0 - np.cos(t1)
    pts[half:, 1] = 0.5 - np.sin(t1)
    if noise_std > 0:
        pts += rng.normal(0.0, noise_std, size=pts.shape)
    labels = np.concatenate([np.zeros(half, dtype=np.int64), np.ones(half, dtype=np.int64)])
    return Dataset(pts, labels, 2, name="halfmoons")


def _read_maybe_gz(path) -> bytes:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:2] == b"\x1f\x8b":
        return gzip.decompress(blob)
    return blob


def _parse_idx(blob: bytes, expect_magic: int, path) -> tuple[list[int], np.ndarray]:
    if len(blob) < 4:
        raise IdxFormatError(f"{path}: truncated header, only {len(blob)} bytes")
    (magic,) = struct.unpack_from(">I", blob, 0)
    if magic != expect_magic:
        raise IdxFormatError(
            f"{path}: bad magic 0x{magic:08x} at offset 0, expected images 0x{IDX_IMAGES_MAGIC:08x} "
            f"or labels 0x{IDX_LABELS_MAGIC:08x} (wanted 0x{expect_magic:08x} here)"
        )
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(blob) < header:
        raise IdxFormatError(f"{path}: truncated dimension table at offset {len(blob)}")
    dims = list(struct.unpack_from(f">{ndim}I", blob, 4))
    count = int(np.prod(dims))
    if len(blob) != header + count:
        raise IdxFormatError(
            f"{path}: payload is {len(blob) - header} bytes at offset {header}, dims {dims} need {count}"
        )
    payload = np.frombuffer(blob, dtype=np.uint8, count=count, offset=header)
    return dims, payload


def load_idx(path_images, path_labels, name: str = "idx", num_classes: int = 10) -> Dataset:
    """Load an images/labels IDX pair; pixels are scaled into [0, 1]."""
    img_dims, img_payload = _parse_idx(_read_maybe_gz(path_images), IDX_IMAGES_MAGIC, path_images)
    lab_dims, lab_payload = _parse_idx(_read_maybe_gz(path_labels), IDX_LABELS_MAGIC, path_labels)
    n = img_dims[0]
    if lab_dims[0] != n:
        raise IdxFormatError(
            f"count mismatch: {path_images} holds {n} images, {path_labels} holds {lab_dims[0]} labels"
        )
    d = int(np.prod(img_dims[1:]))
    inputs = img_payload.reshape(n, d).astype(np.float64) / 255.0
    return Dataset(inputs, lab_payload.astype(np.int64), num_classes, name=name, bounds=(0.0, 1.0))


def save_idx(data: Dataset, path_images, path_labels, image_shape=(28, 28)) -> None:
    """Write a dataset back out as an IDX pair (u8 pixels, u8 labels)."""
    rows, cols = image_shape
    if rows * cols != data.input_dim:
        raise ValueError(f"image shape {image_shape} incompatible with d={data.input_dim}")
    pixels = np.round(data.inputs * 255.0).astype(np.uint8)
    with open(path_images, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, len(data), rows, cols))
        f.write(pixels.tobytes())
    with open(path_labels, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, len(data)))
        f.write(data.labels.astype(np.uint8).tobytes())


def split(data: Dataset, train_fraction: float, rng=None) -> tuple[Dataset, Dataset]:
    """Seeded shuffle-split; both sides must come out non-empty."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(rng)
    order = rng.permutation(len(data))
    n_train = int(round(train_fraction * len(data)))
    n_train = min(max(n_train, 1), len(data) - 1)
    tr, te = order[:n_train], order[n_train:]
    mk = lambda idx, tag: Dataset(
        data.inputs[idx], data.labels[idx], data.num_classes, f"{data.name}-{tag}", data.bounds
    )
    return mk(tr, "train"), mk(te, "test")


def subsample(data: Dataset, n: int, rng=None) -> Dataset:
    """Stratified subsample of n points; class counts follow largest-remainder
    allocation, so a balanced set stays exactly balanced."""
    if not 1 <= n <= len(data):
        raise ValueError(f"cannot subsample {n} from {len(data)} points")
    rng = np.random.default_rng(rng)
    classes = np.arange(data.num_classes)
    counts = np.array([(data.labels == c).sum() for c in classes])
    quota = n * counts / len(data)
    alloc = np.floor(quota).astype(int)
    remainder = n - alloc.sum()
    if remainder > 0:
        order = np.argsort(-(quota - alloc), kind="stable")
        alloc[order[:remainder]] += 1
    picked = []
    for c in classes:
        idx = np.flatnonzero(data.labels == c)
        if alloc[c] > len(idx):
            raise ValueError(f"class {c} has only {len(idx)} points, need {alloc[c]}")
        picked.append(rng.choice(idx, size=alloc[c], replace=False))
    sel = np.sort(np.concatenate(picked))
    return Dataset(
        data.inputs[sel], data.labels[sel], data.num_classes, data.name, data.bounds
    )


def export_csv(data: Dataset, path) -> None:
    """Header row, one sample per line, label in the last column."""
    cols = [f"x{j}" for j in range(data.input_dim)] + ["label"]
    with open(path, "w") as f:
        f.write(",".join(cols) + "\n")
        for row, lab in zip(data.inputs, data.labels):
            f.write(",".join(repr(v) for v in row) + f",{lab}\n")

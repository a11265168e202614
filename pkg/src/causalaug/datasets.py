"""MNIST IDX parsing and the multi-domain digit datasets.

The IDX container is big-endian: a 4-byte magic (two zero bytes, a type
code, the number of dimensions), one 4-byte size per dimension, then the
payload.  Only unsigned-byte label (``0x00000801``) and image
(``0x00000803``) files are accepted.
"""

from __future__ import annotations

import gzip
import hashlib
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .augment import rotate
from .errors import EmptyDatasetError, FormatError, InsufficientDataError, InvalidDimensionError, LengthMismatchError

LABEL_MAGIC = 0x00000801
IMAGE_MAGIC = 0x00000803
_NDIMS = {LABEL_MAGIC: 1, IMAGE_MAGIC: 3}

ROTATION_ANGLES = (0, 30, 60, 90)
COLOR_FLIP = (0.2, 0.1, 0.9)
LABEL_NOISE = 0.25


@dataclass(frozen=True)
class IdxArray:
    magic: int
    dims: tuple[int, ...]
    data: bytes

    def __post_init__(self):
        if self.magic not in _NDIMS:
            raise FormatError(f"unsupported IDX magic 0x{self.magic:08X}")
        if len(self.dims) != _NDIMS[self.magic] or any(d < 1 for d in self.dims):
            raise FormatError(f"bad IDX dimensions {self.dims} for magic 0x{self.magic:08X}")
        expected = int(np.prod(self.dims))
        if len(self.data) != expected:
            raise LengthMismatchError(expected, len(self.data))

    def to_numpy(self) -> np.ndarray:
        return np.frombuffer(self.data, dtype=np.uint8).reshape(self.dims)


def parse_idx(raw: bytes) -> IdxArray:
    raw = bytes(raw)
    if len(raw) < 4:
        raise FormatError("IDX stream shorter than its magic number")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic not in _NDIMS:
        raise FormatError(f"bad IDX magic 0x{magic:08X}")
    ndims = _NDIMS[magic]
    header = 4 + 4 * ndims
    if len(raw) < header:
        raise FormatError(f"IDX header truncated: need {header} bytes, got {len(raw)}")
    dims = struct.unpack(f">{ndims}I", raw[4:header])
    expected = int(np.prod(dims, dtype=np.int64))
    payload = raw[header:]
    if len(payload) != expected:
        raise LengthMismatchError(expected, len(payload))
    return IdxArray(magic, tuple(int(d) for d in dims), payload)


def serialize_idx(arr: IdxArray) -> bytes:
    return struct.pack(f">I{len(arr.dims)}I", arr.magic, *arr.dims) + arr.data


def idx_from_numpy(values: np.ndarray) -> IdxArray:
    values = np.asarray(values)
    if values.dtype != np.uint8:
        raise FormatError("IDX payloads here are unsigned bytes")
    magic = {1: LABEL_MAGIC, 3: IMAGE_MAGIC}.get(values.ndim)
    if magic is None:
        raise InvalidDimensionError(f"expected 1-d labels or 3-d images, got {values.ndim} dims")
    return IdxArray(magic, tuple(values.shape), values.tobytes())


def load_idx(path: str | os.PathLike) -> IdxArray:
    """Read an IDX file; ``.gz`` files are decompressed before parsing."""
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix == ".gz":
        raw = gzip.decompress(raw)
    return parse_idx(raw)


_MNIST_STEMS = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


def find_mnist_files(directory: str | os.PathLike) -> dict[str, Path]:
    directory = Path(directory)
    found = {}
    for key, stem in _MNIST_STEMS.items():
        dotted = stem.replace("-idx", ".idx")
        for name in (stem, dotted, stem + ".gz", dotted + ".gz"):
            if (directory / name).is_file():
                found[key] = directory / name
                break
        else:
            raise FileNotFoundError(f"no {stem}[.gz] in {directory}")
    return found


def load_mnist(directory: str | os.PathLike) -> dict[str, IdxArray]:
    return {key: load_idx(path) for key, path in find_mnist_files(directory).items()}


def images_to_float(images: IdxArray | np.ndarray) -> np.ndarray:
    arr = images.to_numpy() if isinstance(images, IdxArray) else np.asarray(images)
    return arr.astype(float) / 255.0


def labels_to_int(labels: IdxArray | np.ndarray) -> np.ndarray:
    arr = labels.to_numpy() if isinstance(labels, IdxArray) else np.asarray(labels)
    return arr.astype(np.int64)


def average_pool(images: np.ndarray, factor: int = 2) -> np.ndarray:
    """Downsample ``(N, H, W[, C])`` by block averaging (28x28 -> 14x14 for factor 2)."""
    n, h, w = images.shape[:3]
    rest = images.shape[3:]
    h2, w2 = h // factor, w // factor
    trimmed = images[:, : h2 * factor, : w2 * factor]
    return trimmed.reshape(n, h2, factor, w2, factor, *rest).mean(axis=(2, 4))


# --------------------------------------------------------------------------
# domain datasets


@dataclass
class DomainDataset:
    """Samples ``(x, y, d)``; ``x`` is ``(N, H, W, C)`` images or ``(N, p)`` vectors."""

    x: np.ndarray
    y: np.ndarray
    d: np.ndarray
    num_domains: int
    num_classes: int
    extras: dict[str, np.ndarray] = field(default_factory=dict)
    domain_names: list[str] | None = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.int64)
        self.d = np.asarray(self.d, dtype=np.int64)
        n = len(self.x)
        if self.y.shape != (n,) or self.d.shape != (n,):
            raise InvalidDimensionError("x, y and d must have the same length")
        if n and (self.d.min() < 0 or self.d.max() >= self.num_domains):
            raise InvalidDimensionError("domain index out of range")
        if n and (self.y.min() < 0 or self.y.max() >= self.num_classes):
            raise InvalidDimensionError("class index out of range")
        for key, value in self.extras.items():
            if len(value) != n:
                raise InvalidDimensionError(f"extra array {key!r} has the wrong length")

    def __len__(self) -> int:
        return len(self.x)

    @property
    def domains(self) -> list[int]:
        return sorted(int(v) for v in np.unique(self.d))

    def subset(self, idx) -> "DomainDataset":
        idx = np.asarray(idx)
        return DomainDataset(
            self.x[idx], self.y[idx], self.d[idx], self.num_domains, self.num_classes,
            {k: v[idx] for k, v in self.extras.items()}, self.domain_names,
        )

    def select_domains(self, domains: Sequence[int], relabel: bool = True) -> "DomainDataset":
        """Keep the listed domains; with ``relabel`` they become ``0..len(domains)-1``."""
        domains = [int(v) for v in domains]
        mask = np.isin(self.d, domains)
        out = self.subset(np.flatnonzero(mask))
        if relabel:
            mapping = {old: new for new, old in enumerate(domains)}
            out.d = np.array([mapping[int(v)] for v in out.d], dtype=np.int64)
            out.num_domains = len(domains)
            if self.domain_names:
                out.domain_names = [self.domain_names[v] for v in domains]
        return out

    def with_x(self, x: np.ndarray) -> "DomainDataset":
        return DomainDataset(x, self.y, self.d, self.num_domains, self.num_classes, self.extras, self.domain_names)


def concat_datasets(parts: Sequence[DomainDataset]) -> DomainDataset:
    first = parts[0]
    keys = set(first.extras)
    return DomainDataset(
        np.concatenate([p.x for p in parts]),
        np.concatenate([p.y for p in parts]),
        np.concatenate([p.d for p in parts]),
        max(p.num_domains for p in parts),
        max(p.num_classes for p in parts),
        {k: np.concatenate([p.extras[k] for p in parts]) for k in keys},
        first.domain_names,
    )


def dataset_stats(ds: DomainDataset) -> dict[int, np.ndarray]:
    """Empirical label marginals ``p(y | d)`` for every represented domain."""
    if len(ds) == 0:
        raise EmptyDatasetError("no samples")
    out = {}
    for dom in ds.domains:
        labels = ds.y[ds.d == dom]
        out[dom] = np.bincount(labels, minlength=ds.num_classes) / len(labels)
    return out


def build_rotated_mnist(
    train_images,
    train_labels,
    test_images,
    test_labels,
    rng: np.random.Generator,
    *,
    angles: Sequence[float] = ROTATION_ANGLES,
    count_range: tuple[int, int] = (80, 160),
    fast: bool = False,
    max_test: int | None = None,
) -> tuple[DomainDataset, dict[float, DomainDataset]]:
    """One training domain per angle plus the rotated test split per angle.

    For each domain a fresh subset is drawn without replacement, with the
    number of images of every digit class drawn uniformly from
    ``count_range`` (inclusive), so ``p(y | d)`` differs across domains.
    ``max_test`` keeps a random subset of the test split (desk-scale runs);
    ``fast`` average-pools to 14x14 before rotating.
    """
    x_train = images_to_float(train_images)
    y_train = labels_to_int(train_labels)
    x_test = images_to_float(test_images)
    y_test = labels_to_int(test_labels)
    if fast:
        x_train, x_test = average_pool(x_train), average_pool(x_test)
    lo, hi = count_range
    by_class = {c: np.flatnonzero(y_train == c) for c in range(10)}
    parts, domain_x = [], []
    for dom, angle in enumerate(angles):
        chosen = []
        for c in range(10):
            count = int(rng.integers(lo, hi + 1))
            pool = by_class[c]
            if len(pool) < count:
                raise InsufficientDataError(f"class {c} has {len(pool)} images, need {count}")
            chosen.append(rng.choice(pool, size=count, replace=False))
        idx = np.concatenate(chosen)
        imgs = x_train[idx][..., None]
        if angle != 0:
            imgs = rotate(imgs, angle)
        parts.append((idx, imgs, np.full(len(idx), dom)))
    names = [f"{a:g}deg" for a in angles]
    train = DomainDataset(
        np.concatenate([p[1] for p in parts]),
        y_train[np.concatenate([p[0] for p in parts])],
        np.concatenate([p[2] for p in parts]),
        num_domains=len(angles),
        num_classes=10,
        extras={"source_index": np.concatenate([p[0] for p in parts])},
        domain_names=names,
    )
    test_idx = np.arange(len(x_test))
    if max_test is not None and max_test < len(x_test):
        test_idx = np.sort(rng.choice(len(x_test), size=max_test, replace=False))
    tests = {}
    for dom, angle in enumerate(angles):
        imgs = x_test[test_idx][..., None]
        if angle != 0:
            imgs = rotate(imgs, angle)
        tests[angle] = DomainDataset(
            imgs, y_test[test_idx], np.full(len(test_idx), dom),
            num_domains=len(angles), num_classes=10,
            extras={"source_index": test_idx}, domain_names=names,
        )
    return train, tests


def colorize(gray: np.ndarray, color: np.ndarray) -> np.ndarray:
    """Place intensity in channel 0 (red, color 0) or 1 (green, color 1); channel 2 stays 0."""
    out = np.zeros(gray.shape + (3,))
    n = len(gray)
    out[np.arange(n), ..., color] = gray
    return out


def _color_domain(gray, digits, flip_prob, label_noise, rng, dom):
    n = len(digits)
    shape_label = (digits >= 5).astype(np.int64)
    label = shape_label ^ (rng.random(n) < label_noise)
    color = label ^ (rng.random(n) < flip_prob)
    return DomainDataset(
        colorize(gray, color), label, np.full(n, dom), num_domains=3, num_classes=2,
        extras={"digit": digits, "shape_label": shape_label, "color": color.astype(np.int64)},
    )


def build_colored_mnist(
    train_images,
    train_labels,
    rng: np.random.Generator,
    *,
    test_images=None,
    test_labels=None,
    label_noise: float = LABEL_NOISE,
    color_flip: Sequence[float] = COLOR_FLIP,
    fast: bool = False,
    max_per_domain: int | None = None,
) -> DomainDataset:
    """Two training domains and one test domain with spurious colour.

    Binary label from the digit (0-4 -> 0, 5-9 -> 1), flipped with
    probability ``label_noise``; colour red for label 0 and green for label
    1, flipped with the domain's probability ``color_flip[d]``.  The shuffled
    train split is halved into domains 0 and 1; domain 2 comes from the test
    split (or, when no test split is given, the train split is cut in three).
    """
    x = images_to_float(train_images)
    digits = labels_to_int(train_labels)
    if fast:
        x = average_pool(x)
    order = rng.permutation(len(x))
    if test_images is None:
        pieces = np.array_split(order, 3)
        sources = [(x[p], digits[p]) for p in pieces]
    else:
        xt = images_to_float(test_images)
        if fast:
            xt = average_pool(xt)
        halves = np.array_split(order, 2)
        sources = [(x[p], digits[p]) for p in halves]
        sources.append((xt, labels_to_int(test_labels)))
    domains = []
    for dom, ((imgs, digs), flip) in enumerate(zip(sources, color_flip)):
        if max_per_domain is not None and len(digs) > max_per_domain:
            keep = np.sort(rng.choice(len(digs), size=max_per_domain, replace=False))
            imgs, digs = imgs[keep], digs[keep]
        domains.append(_color_domain(imgs, digs, flip, label_noise, rng, dom))
    out = concat_datasets(domains)
    out.domain_names = [f"e={p:g}" for p in color_flip]
    return out


def color_oracle_accuracy(ds: DomainDataset, against: str = "y") -> dict[int, float]:
    """Accuracy of predicting ``against`` (``"y"`` or ``"shape_label"``) from colour alone."""
    target = ds.y if against == "y" else ds.extras[against]
    color = ds.extras["color"]
    return {dom: float(np.mean(color[ds.d == dom] == target[ds.d == dom])) for dom in ds.domains}


def color_oracle_closed_form(flip_prob: float, label_noise: float = LABEL_NOISE) -> dict[str, float]:
    return {
        "y": 1.0 - flip_prob,
        "shape_label": (1 - label_noise) * (1 - flip_prob) + label_noise * flip_prob,
    }


# --------------------------------------------------------------------------
# cache


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def save_dataset(ds: DomainDataset, path: str | os.PathLike, manifest: dict | None = None) -> Path:
    """Write ``<path>.npz`` plus ``<path>.json`` (parameters and checksum)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    npz = path.with_suffix(".npz")
    tmp = npz.with_name(npz.name + ".tmp")
    with open(tmp, "wb") as f:
        np.savez(f, x=ds.x, y=ds.y, d=ds.d, **{f"extra_{k}": v for k, v in ds.extras.items()})
    os.replace(tmp, npz)
    meta = {
        "num_domains": ds.num_domains,
        "num_classes": ds.num_classes,
        "domain_names": ds.domain_names,
        "n": len(ds),
        "sha256": _sha256(npz),
        **(manifest or {}),
    }
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2))
    return npz


def load_dataset(path: str | os.PathLike) -> DomainDataset:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    npz = path.with_suffix(".npz")
    if _sha256(npz) != meta["sha256"]:
        raise FormatError(f"checksum mismatch for {npz}")
    with np.load(npz) as data:
        extras = {k[len("extra_"):]: data[k] for k in data.files if k.startswith("extra_")}
        return DomainDataset(data["x"], data["y"], data["d"], meta["num_domains"], meta["num_classes"],
                             extras, meta.get("domain_names"))


# --------------------------------------------------------------------------
# offline stand-in


def write_digits_surrogate(out_dir: str | os.PathLike, n_train: int = 1000, seed: int = 0) -> dict[str, Path]:
    """Write scikit-learn's bundled 8x8 handwritten digits as 28x28 MNIST-style IDX files.

    Each digit is bilinearly upsampled to 20x20 and centred in a 28x28 frame,
    mimicking MNIST's layout.  This is a small offline stand-in for smoke
    runs, not a replacement for MNIST.
    """
    from scipy.ndimage import zoom
    from sklearn.datasets import load_digits

    digits = load_digits()
    order = np.random.default_rng(seed).permutation(len(digits.target))
    imgs = digits.images[order] / 16.0
    big = np.stack([np.clip(zoom(im, 20 / 8, order=1), 0, 1) for im in imgs])
    frame = np.zeros((len(big), 28, 28))
    frame[:, 4:24, 4:24] = big
    pixels = np.round(frame * 255).astype(np.uint8)
    labels = digits.target[order].astype(np.uint8)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    arrays = {
        "train_images": pixels[:n_train], "train_labels": labels[:n_train],
        "test_images": pixels[n_train:], "test_labels": labels[n_train:],
    }
    paths = {}
    for key, values in arrays.items():
        paths[key] = out_dir / _MNIST_STEMS[key]
        paths[key].write_bytes(serialize_idx(idx_from_numpy(values)))
    return paths

"""Stochastic data augmentations expressed as sampled group actions.

Images are float arrays in ``[0, 1]`` shaped ``(H, W, C)`` or, for batches,
``(N, H, W, C)`` with ``C`` in ``{1, 3}``.  Every augmentation samples its
random parameters independently for each image in a batch.

Geometric conventions: pixel ``(row, col)`` has coordinates ``(x=col, y=row)``
with the y axis pointing down; the transform acts about the image center
``((W-1)/2, (H-1)/2)``; a positive angle rotates counter-clockwise as the
image is displayed.  Composition order is scale, shear, rotate, translate.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field, fields
from typing import ClassVar

import numpy as np

from .errors import ChannelMismatchError, InvalidDimensionError, InvalidIndexError, InvalidSpecError

GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])
CHANNEL_PERMUTATIONS = tuple(itertools.permutations(range(3)))


# --------------------------------------------------------------------------
# image helpers


def as_batch(images: np.ndarray) -> tuple[np.ndarray, bool]:
    """Return ``(batch, was_single)`` with batch shaped ``(N, H, W, C)``."""
    arr = np.asarray(images, dtype=float)
    if arr.ndim == 2:
        return arr[None, :, :, None], True
    if arr.ndim == 3:
        if arr.shape[-1] not in (1, 3):
            raise ChannelMismatchError(
                f"3-d input {arr.shape} is read as (H, W, C) and needs C in (1, 3); "
                "add a channel axis to pass a batch of grayscale images"
            )
        return arr[None], True
    if arr.ndim == 4:
        return arr, False
    raise InvalidDimensionError(f"expected an image or image batch, got shape {arr.shape}")


def _restore(batch: np.ndarray, single: bool, like: np.ndarray) -> np.ndarray:
    out = batch[0] if single else batch
    return out.reshape(np.shape(like))


def check_image(image: np.ndarray) -> None:
    """Validate the raster invariants (channels, value range)."""
    batch, _ = as_batch(image)
    if batch.shape[-1] not in (1, 3):
        raise ChannelMismatchError(f"images must have 1 or 3 channels, got {batch.shape[-1]}")
    if batch.size and (batch.min() < 0.0 or batch.max() > 1.0):
        raise InvalidSpecError("pixel values must lie in [0, 1]")


def grayscale(batch: np.ndarray) -> np.ndarray:
    """Luma of an ``(N, H, W, C)`` batch, shaped ``(N, H, W, 1)``."""
    if batch.shape[-1] == 1:
        return batch
    return (batch @ GRAY_WEIGHTS)[..., None]


def _per_image(values, n: int) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    return np.broadcast_to(arr, (n,)).reshape(n, 1, 1, 1)


def _require_rgb(batch: np.ndarray, what: str) -> None:
    if batch.shape[-1] != 3:
        raise ChannelMismatchError(f"{what} needs a 3-channel image, got {batch.shape[-1]} channel(s)")


# --------------------------------------------------------------------------
# deterministic colour operations


def adjust_brightness(images, factor):
    batch, single = as_batch(images)
    out = np.clip(batch * _per_image(factor, len(batch)), 0.0, 1.0)
    return _restore(out, single, images)


def adjust_contrast(images, factor):
    """Blend each image with its mean grayscale level."""
    batch, single = as_batch(images)
    mean = grayscale(batch).mean(axis=(1, 2, 3), keepdims=True)
    out = np.clip(mean + _per_image(factor, len(batch)) * (batch - mean), 0.0, 1.0)
    return _restore(out, single, images)


def adjust_saturation(images, factor):
    """Blend each pixel with its own grayscale value."""
    batch, single = as_batch(images)
    _require_rgb(batch, "saturation")
    gray = grayscale(batch)
    out = np.clip(gray + _per_image(factor, len(batch)) * (batch - gray), 0.0, 1.0)
    return _restore(out, single, images)


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=float)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    delta = maxc - minc
    safe = np.where(delta > 0, delta, 1.0)
    h = np.where(
        maxc == r,
        np.mod((g - b) / safe, 6.0),
        np.where(maxc == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0),
    )
    h = np.where(delta > 0, h / 6.0, 0.0)
    s = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)
    return np.stack([h, s, maxc], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    hsv = np.asarray(hsv, dtype=float)
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    h6 = np.mod(h, 1.0) * 6.0
    sector = np.floor(h6).astype(int) % 6
    f = h6 - np.floor(h6)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    choices_r = [v, q, p, p, t, v]
    choices_g = [t, v, v, q, p, p]
    choices_b = [p, p, t, v, v, q]
    conds = [sector == k for k in range(6)]
    return np.stack(
        [np.select(conds, choices_r), np.select(conds, choices_g), np.select(conds, choices_b)],
        axis=-1,
    )


def adjust_hue(images, shift):
    """Rotate hue by ``shift`` turns (an SO(2) action on the hue circle)."""
    batch, single = as_batch(images)
    _require_rgb(batch, "hue")
    hsv = rgb_to_hsv(batch)
    hsv[..., 0] = np.mod(hsv[..., 0] + _per_image(shift, len(batch))[..., 0], 1.0)
    out = np.clip(hsv_to_rgb(hsv), 0.0, 1.0)
    return _restore(out, single, images)


def permute_channels(images, perms):
    """Apply channel permutation(s); ``perms`` is one permutation or one per image."""
    batch, single = as_batch(images)
    _require_rgb(batch, "channel permutation")
    perms = np.asarray(perms, dtype=int)
    perms = np.broadcast_to(perms, (len(batch), 3))
    out = np.take_along_axis(batch, perms[:, None, None, :], axis=-1)
    return _restore(out, single, images)


def hflip(images):
    batch, single = as_batch(images)
    return _restore(batch[:, :, ::-1, :].copy(), single, images)


def vflip(images):
    batch, single = as_batch(images)
    return _restore(batch[:, ::-1, :, :].copy(), single, images)


# --------------------------------------------------------------------------
# geometric operations


@dataclass(frozen=True)
class AffineParams:
    angle_deg: float = 0.0
    translate_x: float = 0.0
    translate_y: float = 0.0
    scale: float = 1.0
    shear_x_deg: float = 0.0
    shear_y_deg: float = 0.0

    def __post_init__(self):
        if not self.scale > 0:
            raise InvalidSpecError(f"scale must be positive, got {self.scale}")


def affine_matrix(angle_deg, scale, shear_x_deg, shear_y_deg) -> np.ndarray:
    """Forward linear part ``R @ Sh @ S`` for arrays of parameters, shape ``(N, 2, 2)``."""
    angle = np.radians(np.atleast_1d(np.asarray(angle_deg, dtype=float)))
    n = angle.shape[0]
    scale = np.broadcast_to(np.asarray(scale, dtype=float), (n,))
    shx = np.tan(np.radians(np.broadcast_to(np.asarray(shear_x_deg, dtype=float), (n,))))
    shy = np.tan(np.radians(np.broadcast_to(np.asarray(shear_y_deg, dtype=float), (n,))))
    cos, sin = np.cos(angle), np.sin(angle)
    rot = np.stack([np.stack([cos, sin], -1), np.stack([-sin, cos], -1)], -2)
    shear = np.stack([np.stack([np.ones(n), shx], -1), np.stack([shy, np.ones(n)], -1)], -2)
    return rot @ shear * scale[:, None, None]


def warp_batch(batch: np.ndarray, matrices: np.ndarray, translations: np.ndarray) -> np.ndarray:
    """Inverse-map every output pixel, bilinear interpolation, zero fill.

    ``matrices`` is ``(N, 2, 2)`` acting on ``(x, y)`` offsets from the
    center and ``translations`` is ``(N, 2)`` in pixels.
    """
    n, h, w, c = batch.shape
    inv = np.linalg.inv(matrices)
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    ys, xs = np.mgrid[0:h, 0:w].astype(float)
    ox = xs[None] - cx - translations[:, 0, None, None]
    oy = ys[None] - cy - translations[:, 1, None, None]
    src_x = inv[:, 0, 0, None, None] * ox + inv[:, 0, 1, None, None] * oy + cx
    src_y = inv[:, 1, 0, None, None] * ox + inv[:, 1, 1, None, None] * oy + cy

    x0 = np.floor(src_x)
    y0 = np.floor(src_y)
    fx = src_x - x0
    fy = src_y - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    flat = batch.reshape(n * h * w, c)
    base = (np.arange(n) * h * w)[:, None, None]
    out = np.zeros((n, h, w, c))
    for dy, dx, weight in (
        (0, 0, (1 - fx) * (1 - fy)),
        (0, 1, fx * (1 - fy)),
        (1, 0, (1 - fx) * fy),
        (1, 1, fx * fy),
    ):
        xi = x0 + dx
        yi = y0 + dy
        valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h) & (weight != 0)
        idx = base + np.clip(yi, 0, h - 1) * w + np.clip(xi, 0, w - 1)
        vals = flat[idx]
        out += np.where(valid[..., None], weight[..., None] * vals, 0.0)
    return np.clip(out, 0.0, 1.0)


def affine_warp(image: np.ndarray, params: AffineParams) -> np.ndarray:
    batch, single = as_batch(image)
    m = affine_matrix(params.angle_deg, params.scale, params.shear_x_deg, params.shear_y_deg)
    m = np.repeat(m, len(batch), axis=0)
    t = np.tile([params.translate_x, params.translate_y], (len(batch), 1)).astype(float)
    return _restore(warp_batch(batch, m, t), single, image)


def rotate(images, angle_deg) -> np.ndarray:
    """Rotate each image by its own angle (scalar or one per image)."""
    batch, single = as_batch(images)
    angles = np.broadcast_to(np.asarray(angle_deg, dtype=float), (len(batch),))
    m = affine_matrix(angles, 1.0, 0.0, 0.0)
    return _restore(warp_batch(batch, m, np.zeros((len(batch), 2))), single, images)


# --------------------------------------------------------------------------
# augmentation specs


def _uniform(rng, lo, hi, n):
    return rng.uniform(lo, hi, size=n) if hi > lo else np.full(n, float(lo))


def _factor_range(strength: float) -> tuple[float, float]:
    return max(0.0, 1.0 - strength), 1.0 + strength


@dataclass(frozen=True)
class Augmentation:
    """Base class: a distribution over group elements plus their action."""

    name: ClassVar[str] = "augmentation"
    color: ClassVar[bool] = False
    rgb_only: ClassVar[bool] = False

    def apply(self, batch: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        out = {"type": self.name}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out


@dataclass(frozen=True)
class Brightness(Augmentation):
    strength: float = 1.0
    name: ClassVar[str] = "brightness"
    color: ClassVar[bool] = True

    def __post_init__(self):
        if self.strength < 0:
            raise InvalidSpecError("brightness strength must be >= 0")

    def apply(self, batch, rng):
        return adjust_brightness(batch, _uniform(rng, *_factor_range(self.strength), len(batch)))


@dataclass(frozen=True)
class Contrast(Augmentation):
    strength: float = 10.0
    name: ClassVar[str] = "contrast"
    color: ClassVar[bool] = True

    def __post_init__(self):
        if self.strength < 0:
            raise InvalidSpecError("contrast strength must be >= 0")

    def apply(self, batch, rng):
        return adjust_contrast(batch, _uniform(rng, *_factor_range(self.strength), len(batch)))


@dataclass(frozen=True)
class Saturation(Augmentation):
    strength: float = 10.0
    name: ClassVar[str] = "saturation"
    color: ClassVar[bool] = True
    rgb_only: ClassVar[bool] = True

    def __post_init__(self):
        if self.strength < 0:
            raise InvalidSpecError("saturation strength must be >= 0")

    def apply(self, batch, rng):
        return adjust_saturation(batch, _uniform(rng, *_factor_range(self.strength), len(batch)))


@dataclass(frozen=True)
class Hue(Augmentation):
    max_shift: float = 0.5
    name: ClassVar[str] = "hue"
    color: ClassVar[bool] = True
    rgb_only: ClassVar[bool] = True

    def __post_init__(self):
        if not 0.0 <= self.max_shift <= 0.5:
            raise InvalidSpecError("hue max_shift must lie in [0, 0.5] turns")

    def apply(self, batch, rng):
        return adjust_hue(batch, _uniform(rng, -self.max_shift, self.max_shift, len(batch)))


@dataclass(frozen=True)
class ChannelPermutation(Augmentation):
    name: ClassVar[str] = "channel_permutation"
    color: ClassVar[bool] = True
    rgb_only: ClassVar[bool] = True

    def apply(self, batch, rng):
        picks = rng.integers(0, len(CHANNEL_PERMUTATIONS), size=len(batch))
        return permute_channels(batch, np.asarray(CHANNEL_PERMUTATIONS)[picks])


class _Geometric(Augmentation):
    def sample(self, n: int, h: int, w: int, rng) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def apply(self, batch, rng):
        n, h, w, _ = batch.shape
        matrices, translations = self.sample(n, h, w, rng)
        return warp_batch(batch, matrices, translations)


@dataclass(frozen=True)
class Rotation(_Geometric):
    lo_deg: float = 0.0
    hi_deg: float = 359.0
    name: ClassVar[str] = "rotation"

    def __post_init__(self):
        if self.lo_deg > self.hi_deg:
            raise InvalidSpecError("rotation range is empty")

    def sample(self, n, h, w, rng):
        angles = _uniform(rng, self.lo_deg, self.hi_deg, n)
        return affine_matrix(angles, 1.0, 0.0, 0.0), np.zeros((n, 2))


@dataclass(frozen=True)
class Translate(_Geometric):
    max_frac_x: float = 0.2
    max_frac_y: float = 0.2
    name: ClassVar[str] = "translate"

    def __post_init__(self):
        if not (0 <= self.max_frac_x <= 1 and 0 <= self.max_frac_y <= 1):
            raise InvalidSpecError("translate fractions must lie in [0, 1]")

    def sample(self, n, h, w, rng):
        tx = _uniform(rng, -self.max_frac_x * w, self.max_frac_x * w, n)
        ty = _uniform(rng, -self.max_frac_y * h, self.max_frac_y * h, n)
        return affine_matrix(np.zeros(n), 1.0, 0.0, 0.0), np.stack([tx, ty], axis=1)


@dataclass(frozen=True)
class Scale(_Geometric):
    lo: float = 0.8
    hi: float = 1.2
    name: ClassVar[str] = "scale"

    def __post_init__(self):
        if not 0 < self.lo <= self.hi:
            raise InvalidSpecError("scale range must be positive and nonempty")

    def sample(self, n, h, w, rng):
        return affine_matrix(np.zeros(n), _uniform(rng, self.lo, self.hi, n), 0.0, 0.0), np.zeros((n, 2))


@dataclass(frozen=True)
class Shear(_Geometric):
    x_lo: float = -10.0
    x_hi: float = 10.0
    y_lo: float = -10.0
    y_hi: float = 10.0
    name: ClassVar[str] = "shear"

    def __post_init__(self):
        if self.x_lo > self.x_hi or self.y_lo > self.y_hi:
            raise InvalidSpecError("shear range is empty")
        if max(abs(self.x_lo), abs(self.x_hi), abs(self.y_lo), abs(self.y_hi)) >= 90:
            raise InvalidSpecError("shear angles must lie strictly inside (-90, 90) degrees")

    def sample(self, n, h, w, rng):
        sx = _uniform(rng, self.x_lo, self.x_hi, n)
        sy = _uniform(rng, self.y_lo, self.y_hi, n)
        return affine_matrix(np.zeros(n), 1.0, sx, sy), np.zeros((n, 2))


@dataclass(frozen=True)
class VFlip(Augmentation):
    p: float = 0.5
    name: ClassVar[str] = "vflip"

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise InvalidSpecError("flip probability must lie in [0, 1]")

    def apply(self, batch, rng):
        fire = rng.random(len(batch)) < self.p
        return np.where(fire[:, None, None, None], batch[:, ::-1, :, :], batch)


@dataclass(frozen=True)
class HFlip(Augmentation):
    p: float = 0.5
    name: ClassVar[str] = "hflip"

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise InvalidSpecError("flip probability must lie in [0, 1]")

    def apply(self, batch, rng):
        fire = rng.random(len(batch)) < self.p
        return np.where(fire[:, None, None, None], batch[:, :, ::-1, :], batch)


@dataclass(frozen=True)
class UniformNoise(Augmentation):
    """Additive U[lo, hi] noise on selected flat feature indices."""

    lo: float = -10.0
    hi: float = 10.0
    dims: tuple[int, ...] = field(default_factory=tuple)
    name: ClassVar[str] = "uniform_noise"

    def __post_init__(self):
        if self.lo > self.hi:
            raise InvalidSpecError("uniform noise range is empty")
        object.__setattr__(self, "dims", tuple(int(i) for i in self.dims))

    def apply(self, batch, rng):
        flat = np.array(batch, dtype=float).reshape(len(batch), -1)
        return vector_uniform_noise(flat, self.dims, self.lo, self.hi, rng).reshape(np.shape(batch))


SPEC_TYPES: dict[str, type[Augmentation]] = {
    cls.name: cls
    for cls in (Brightness, Contrast, Saturation, Hue, Rotation, Translate, Scale, Shear,
                VFlip, HFlip, UniformNoise, ChannelPermutation)
}


def spec_from_dict(data: dict) -> Augmentation:
    data = dict(data)
    kind = data.pop("type", None)
    if kind not in SPEC_TYPES:
        raise InvalidSpecError(f"unknown augmentation type {kind!r}")
    cls = SPEC_TYPES[kind]
    if "dims" in data:
        data["dims"] = tuple(data["dims"])
    try:
        return cls(**data)
    except TypeError as exc:
        raise InvalidSpecError(f"bad parameters for {kind}: {exc}") from exc


def default_augmentation_list() -> list[Augmentation]:
    """The ten candidate augmentations with their default hyperparameters."""
    return [
        Brightness(1.0),
        Contrast(10.0),
        Saturation(10.0),
        Hue(0.5),
        Rotation(0.0, 359.0),
        Translate(0.2, 0.2),
        Scale(0.8, 1.2),
        Shear(-10.0, 10.0, -10.0, 10.0),
        VFlip(0.5),
        HFlip(0.5),
    ]


def apply_augmentation(
    spec: Augmentation,
    image: np.ndarray,
    rng: np.random.Generator,
    *,
    gray_passthrough: bool = False,
) -> np.ndarray:
    """Sample ``spec``'s parameters and apply them to an image or a batch.

    Colour operations that need three channels raise ``ChannelMismatchError``
    on single-channel input, unless ``gray_passthrough`` is set, in which case
    they leave the image untouched (hue and saturation have no effect on a
    grayscale image).
    """
    if isinstance(spec, UniformNoise):
        arr = np.asarray(image, dtype=float)
        if arr.ndim == 1:
            return vector_uniform_noise(arr, spec.dims, spec.lo, spec.hi, rng)
        return spec.apply(arr, rng)
    batch, single = as_batch(image)
    if spec.rgb_only and batch.shape[-1] != 3:
        if gray_passthrough and batch.shape[-1] == 1:
            return np.array(image, dtype=float)
        raise ChannelMismatchError(f"{spec.name} needs a 3-channel image, got {batch.shape[-1]}")
    out = np.clip(spec.apply(batch, rng), 0.0, 1.0)
    return _restore(out, single, image)


def vector_uniform_noise(x: np.ndarray, dims, lo: float, hi: float, rng: np.random.Generator) -> np.ndarray:
    """Add i.i.d. U[lo, hi] noise to coordinates ``dims`` of ``x`` (1-d or row batch)."""
    x = np.array(x, dtype=float)
    dims = np.asarray(list(dims), dtype=int)
    p = x.shape[-1]
    if dims.size and (dims.min() < -p or dims.max() >= p):
        raise InvalidIndexError(f"augmentation index out of range for {p} features: {dims.tolist()}")
    if dims.size == 0:
        return x
    shape = x.shape[:-1] + (dims.size,)
    x[..., dims] += rng.uniform(lo, hi, size=shape) if hi > lo else lo
    return x


def channel_permute(image: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Apply one uniformly drawn element of S3 to the colour channels."""
    return apply_augmentation(ChannelPermutation(), image, rng)


def spec_label(spec: Augmentation) -> str:
    params = {k: v for k, v in asdict(spec).items()}
    if not params:
        return spec.name
    inner = ",".join(f"{v:g}" if isinstance(v, float) else str(v) for v in params.values())
    return f"{spec.name}({inner})"

"""Linear-Gaussian SCM with a hidden confounder.

Generative process (row vectors, ``node := parent @ W + noise``)::

    c   := N(0, sigma_c^2 I)
    d   := c @ W_cd + N(0, sigma^2 I)
    y   := c @ W_cy + N(0, sigma^2 I)
    h_d := d @ W_dh + N(0, sigma^2 I)
    h_y := y @ W_yh + N(0, sigma^2 I)

Observations are ``x = [h_d, h_y]`` and the regression target is ``sum(y)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidDimensionError, InvalidSpecError

NODES = ("c", "d", "y", "h_d", "h_y")


class Node(enum.Enum):
    D = "d"
    HD = "h_d"
    HY = "h_y"
    Y = "y"

    @classmethod
    def parse(cls, value: "Node | str") -> "Node":
        if isinstance(value, Node):
            return value
        key = str(value).lower().replace("-", "_")
        aliases = {"d": cls.D, "hd": cls.HD, "h_d": cls.HD, "hy": cls.HY, "h_y": cls.HY, "y": cls.Y}
        if key not in aliases:
            raise InvalidSpecError(f"unknown intervention node {value!r}")
        return aliases[key]


@dataclass(frozen=True)
class LinearGaussianScm:
    W_cd: np.ndarray
    W_cy: np.ndarray
    W_dh: np.ndarray
    W_yh: np.ndarray
    sigma_c: float = 1.0
    sigma: float = 0.1

    def __post_init__(self):
        mats = [np.asarray(m, dtype=float) for m in (self.W_cd, self.W_cy, self.W_dh, self.W_yh)]
        dim = mats[0].shape[0] if mats[0].ndim == 2 else 0
        for m in mats:
            if m.ndim != 2 or m.shape != (dim, dim) or dim < 1:
                raise InvalidDimensionError("all SCM weight matrices must be square with the same side")
            m.setflags(write=False)
        if self.sigma_c < 0 or self.sigma < 0:
            raise InvalidSpecError("noise scales must be nonnegative")
        for name, m in zip(("W_cd", "W_cy", "W_dh", "W_yh"), mats):
            object.__setattr__(self, name, m)

    @property
    def dim(self) -> int:
        return self.W_cd.shape[0]


@dataclass(frozen=True)
class ScmSample:
    c: np.ndarray
    d: np.ndarray
    y: np.ndarray
    h_d: np.ndarray
    h_y: np.ndarray
    x: np.ndarray
    target: float


@dataclass(frozen=True)
class ScmSamples:
    """A batch of samples stored column-wise; indexing yields ``ScmSample``."""

    c: np.ndarray
    d: np.ndarray
    y: np.ndarray
    h_d: np.ndarray
    h_y: np.ndarray
    x: np.ndarray = field(init=False)
    target: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "x", np.concatenate([self.h_d, self.h_y], axis=1))
        object.__setattr__(self, "target", self.y.sum(axis=1))

    def __len__(self) -> int:
        return self.c.shape[0]

    def __getitem__(self, i: int) -> ScmSample:
        return ScmSample(
            c=self.c[i], d=self.d[i], y=self.y[i], h_d=self.h_d[i], h_y=self.h_y[i],
            x=self.x[i], target=float(self.target[i]),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))


@dataclass(frozen=True)
class StandardNormal:
    pass


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise InvalidSpecError(f"empty uniform range [{self.lo}, {self.hi}]")


@dataclass(frozen=True)
class Fixed:
    value: np.ndarray


@dataclass(frozen=True)
class Noise:
    distribution: StandardNormal | Uniform = StandardNormal()


@dataclass(frozen=True)
class InterventionSpec:
    node: Node
    kind: Fixed | Noise

    def __post_init__(self):
        object.__setattr__(self, "node", Node.parse(self.node))
        if not isinstance(self.kind, (Fixed, Noise)):
            raise InvalidSpecError(f"unsupported intervention kind {self.kind!r}")


def random_scm(dim: int, sigma_c: float, sigma: float, rng: np.random.Generator) -> LinearGaussianScm:
    """Draw the four weight matrices i.i.d. standard normal."""
    if int(dim) < 1:
        raise InvalidDimensionError(f"SCM dimension must be >= 1, got {dim}")
    dim = int(dim)
    W = [rng.standard_normal((dim, dim)) for _ in range(4)]
    return LinearGaussianScm(*W, sigma_c=float(sigma_c), sigma=float(sigma))


def sample_observational(scm: LinearGaussianScm, n: int, rng: np.random.Generator) -> ScmSamples:
    return _sample(scm, n, rng, None)


def sample_interventional(
    scm: LinearGaussianScm, spec: InterventionSpec, n: int, rng: np.random.Generator
) -> ScmSamples:
    """Sample with the structural assignment of ``spec.node`` replaced.

    Exogenous noise is drawn in the same order as in the observational case,
    so with equal seeds every non-descendant of the intervened node is
    identical sample by sample.
    """
    if isinstance(spec.kind, Fixed):
        value = np.asarray(spec.kind.value, dtype=float)
        if value.shape != (scm.dim,):
            raise InvalidDimensionError(
                f"fixed intervention value has shape {value.shape}, expected ({scm.dim},)"
            )
    return _sample(scm, n, rng, spec)


def _sample(scm, n, rng, spec):
    n = int(n)
    if n < 1:
        raise InvalidDimensionError(f"sample count must be >= 1, got {n}")
    k = scm.dim
    c = scm.sigma_c * rng.standard_normal((n, k))
    noise = {name: scm.sigma * rng.standard_normal((n, k)) for name in ("d", "y", "h_d", "h_y")}
    override = None if spec is None else _intervention_values(spec, n, k, rng)

    def assign(node, value):
        if spec is not None and spec.node is node:
            return override
        return value

    d = assign(Node.D, c @ scm.W_cd + noise["d"])
    y = assign(Node.Y, c @ scm.W_cy + noise["y"])
    h_d = assign(Node.HD, d @ scm.W_dh + noise["h_d"])
    h_y = assign(Node.HY, y @ scm.W_yh + noise["h_y"])
    return ScmSamples(c=c, d=d, y=y, h_d=h_d, h_y=h_y)


def _intervention_values(spec, n, k, rng):
    if isinstance(spec.kind, Fixed):
        return np.broadcast_to(np.asarray(spec.kind.value, dtype=float), (n, k)).copy()
    dist = spec.kind.distribution
    if isinstance(dist, StandardNormal):
        return rng.standard_normal((n, k))
    if isinstance(dist, Uniform):
        return rng.uniform(dist.lo, dist.hi, size=(n, k))
    raise InvalidSpecError(f"unsupported noise distribution {dist!r}")


def analytic_covariance(scm: LinearGaussianScm) -> dict[tuple[str, str], np.ndarray]:
    """Observational cross-covariances implied by the weights (row-vector convention)."""
    s2c, s2 = scm.sigma_c**2, scm.sigma**2
    eye = np.eye(scm.dim)
    cov_dd = s2c * scm.W_cd.T @ scm.W_cd + s2 * eye
    cov_dy = s2c * scm.W_cd.T @ scm.W_cy
    return {
        ("d", "d"): cov_dd,
        ("d", "y"): cov_dy,
        ("h_d", "y"): scm.W_dh.T @ cov_dy,
    }

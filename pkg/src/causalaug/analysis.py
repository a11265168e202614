"""Jensen-Shannon divergence and the invariant-representation risk bound.

If a representation is perfectly domain invariant, the pairwise distances
between the domains' label marginals bound the per-domain risks from below::

    sum_{i<j} dist(p(y|d=i), p(y|d=j)) <= 2 * sum_k sqrt(risk_k)

``dist`` is the square root of the base-2 JSD, which (unlike JSD itself)
obeys the triangle inequality used to derive the bound.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidDimensionError, InvalidSpecError

_SUM_TOL = 1e-9


@dataclass(frozen=True)
class DiscreteDistribution:
    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float).reshape(-1)
        if p.size == 0 or np.any(p < 0) or not np.all(np.isfinite(p)):
            raise InvalidSpecError("probabilities must be finite and nonnegative")
        if abs(p.sum() - 1.0) > _SUM_TOL:
            raise InvalidSpecError(f"probabilities sum to {p.sum()}, not 1")
        object.__setattr__(self, "probabilities", p)

    def __len__(self) -> int:
        return self.probabilities.size


def _as_dist(p) -> np.ndarray:
    if isinstance(p, DiscreteDistribution):
        return p.probabilities
    return DiscreteDistribution(p).probabilities


def _kl_to_mid(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || (p+q)/2) in bits, written so the midpoint never underflows to 0."""
    mask = p > 0
    a, s = p[mask], p[mask] + q[mask]
    return float(np.sum(a * (1.0 + np.log2(a) - np.log2(s))))


def jsd(p, q) -> float:
    """Base-2 Jensen-Shannon divergence, in [0, 1]."""
    p, q = _as_dist(p), _as_dist(q)
    if p.shape != q.shape:
        raise InvalidDimensionError(f"support sizes differ: {p.size} vs {q.size}")
    value = 0.5 * _kl_to_mid(p, q) + 0.5 * _kl_to_mid(q, p)
    return min(max(value, 0.0), 1.0)


def jsd_distance(p, q) -> float:
    return math.sqrt(jsd(p, q))


@dataclass(frozen=True)
class BoundReport:
    lhs: float
    rhs: float
    holds: bool

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "holds": self.holds}


def invariance_bound(label_marginals: Sequence, risks: Sequence[float]) -> BoundReport:
    """Pairwise marginal divergence (lhs) against twice the summed root risks (rhs)."""
    if len(label_marginals) != len(risks):
        raise InvalidDimensionError(f"{len(label_marginals)} marginals but {len(risks)} risks")
    if len(risks) < 2:
        raise InvalidDimensionError("need at least two domains")
    risks = np.asarray(risks, dtype=float)
    if np.any(risks < 0) or np.any(risks > 1):
        raise InvalidSpecError("risks must lie in [0, 1]")
    dists = [_as_dist(p) for p in label_marginals]
    lhs = sum(jsd_distance(a, b) for a, b in itertools.combinations(dists, 2))
    rhs = 2.0 * float(np.sum(np.sqrt(risks)))
    return BoundReport(float(lhs), rhs, bool(lhs <= rhs + 1e-9))

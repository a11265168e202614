"""Linear intervention-augmentation equivariance.

With ``x = C h_d + D h_y + e`` and the augmentation ``x -> A x`` for a
permutation matrix ``A``::

    A x = C (C^-1 A C h_d) + A D h_y + A e

so when ``A D = D`` and ``A e = e`` the augmentation equals generating
``x`` after the intervention ``h_d -> C^-1 A C h_d``.  ``check_equivariance``
evaluates both paths of that commutative square numerically.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InvalidDimensionError, SingularMatrixError

RCOND_MIN = 1e-10


@dataclass(frozen=True)
class LinearCausalProcess:
    C: np.ndarray
    D: np.ndarray
    e: np.ndarray

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        e = np.asarray(self.e, dtype=float).reshape(-1)
        if C.shape[0] != D.shape[0] or e.shape[0] != C.shape[0]:
            raise InvalidDimensionError(f"C {C.shape}, D {D.shape} and e {e.shape} must share their row count")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "e", e)

    @property
    def n(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class PermutationMatrix:
    """Permutation ``g`` acting as ``(A x)[i] = x[perm[i]]``."""

    perm: tuple[int, ...]

    def __post_init__(self):
        perm = tuple(int(i) for i in self.perm)
        if sorted(perm) != list(range(len(perm))):
            raise InvalidDimensionError(f"{perm} is not a permutation of 0..{len(perm) - 1}")
        object.__setattr__(self, "perm", perm)

    @classmethod
    def identity(cls, n: int) -> "PermutationMatrix":
        return cls(tuple(range(n)))

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "PermutationMatrix":
        return cls(tuple(rng.permutation(n)))

    def __len__(self) -> int:
        return len(self.perm)

    def __matmul__(self, other: "PermutationMatrix") -> "PermutationMatrix":
        # (A1 A2 x)[i] = (A2 x)[p1[i]] = x[p2[p1[i]]]
        return PermutationMatrix(tuple(other.perm[i] for i in self.perm))

    def inverse(self) -> "PermutationMatrix":
        return PermutationMatrix(tuple(np.argsort(self.perm)))

    def is_identity(self) -> bool:
        return self.perm == tuple(range(len(self.perm)))

    def matrix(self) -> np.ndarray:
        return np.eye(len(self.perm))[list(self.perm)]


@dataclass(frozen=True)
class EquivarianceReport:
    max_abs_residual: float
    condition_AD_eq_D: bool
    condition_Ae_eq_e: bool
    holds: bool
    tolerance: float
    trials: int

    def to_dict(self) -> dict:
        return {
            "max_abs_residual": self.max_abs_residual,
            "condition_AD_eq_D": self.condition_AD_eq_D,
            "condition_Ae_eq_e": self.condition_Ae_eq_e,
            "holds": self.holds,
            "tolerance": self.tolerance,
            "trials": self.trials,
        }


def generate_x(proc: LinearCausalProcess, h_d: np.ndarray, h_y: np.ndarray) -> np.ndarray:
    h_d = np.asarray(h_d, dtype=float)
    h_y = np.asarray(h_y, dtype=float)
    if h_d.shape[-1] != proc.C.shape[1] or h_y.shape[-1] != proc.D.shape[1]:
        raise InvalidDimensionError(
            f"h_d {h_d.shape} / h_y {h_y.shape} do not conform to C {proc.C.shape} / D {proc.D.shape}"
        )
    return h_d @ proc.C.T + h_y @ proc.D.T + proc.e


def augment_linear(A: PermutationMatrix, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != len(A):
        raise InvalidDimensionError(f"permutation of size {len(A)} cannot act on length {x.shape[-1]}")
    return x[..., list(A.perm)]


def _lu(C: np.ndarray):
    if C.shape[0] != C.shape[1]:
        raise SingularMatrixError(f"C must be square, got {C.shape}", 0.0)
    with warnings.catch_warnings():
        # exact singularity is reported below as SingularMatrixError
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(C, check_finite=True)
    anorm = np.linalg.norm(C, 1)
    if anorm == 0 or np.any(np.diag(lu) == 0):
        raise SingularMatrixError("C is singular", 0.0)
    # LAPACK gecon: 1-norm reciprocal condition estimate from the LU factors
    rcond, info = scipy.linalg.lapack.dgecon(lu, anorm, norm="1")
    if info != 0 or rcond < RCOND_MIN:
        raise SingularMatrixError("C is singular or ill-conditioned", float(rcond))
    return lu, piv


def induced_intervention(proc: LinearCausalProcess, A: PermutationMatrix, h_d: np.ndarray) -> np.ndarray:
    """``do_A(h_d) = C^-1 A C h_d``."""
    lu, piv = _lu(proc.C)
    if len(A) != proc.n:
        raise InvalidDimensionError(f"permutation size {len(A)} != x dimension {proc.n}")
    h_d = np.asarray(h_d, dtype=float)
    if A.is_identity():
        return h_d.copy()
    moved = augment_linear(A, h_d @ proc.C.T)
    return scipy.linalg.lu_solve((lu, piv), moved.T).T


def check_equivariance(
    proc: LinearCausalProcess,
    A: PermutationMatrix,
    trials: int,
    tolerance: float,
    rng: np.random.Generator,
) -> EquivarianceReport:
    """Compare ``aug_A(f_X(h_d, h_y))`` with ``f_X(do_A(h_d), h_y)`` on random draws."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if len(A) != proc.n:
        raise InvalidDimensionError(f"permutation size {len(A)} != x dimension {proc.n}")
    h_d = rng.standard_normal((trials, proc.C.shape[1]))
    h_y = rng.standard_normal((trials, proc.D.shape[1]))
    lhs = augment_linear(A, generate_x(proc, h_d, h_y))
    rhs = generate_x(proc, induced_intervention(proc, A, h_d), h_y)
    residual = float(np.max(np.abs(lhs - rhs)))
    perm = list(A.perm)
    ad_eq_d = bool(np.array_equal(proc.D[perm], proc.D))
    ae_eq_e = bool(np.array_equal(proc.e[perm], proc.e))
    return EquivarianceReport(residual, ad_eq_d, ae_eq_e, residual <= tolerance, float(tolerance), int(trials))


def invariant_process(n: int, m: int, rng: np.random.Generator, max_condition: float = 1e6) -> LinearCausalProcess:
    """Random process whose ``D`` rows are all equal and ``e`` is constant,
    so every permutation satisfies ``A D = D`` and ``A e = e``."""
    while True:
        C = rng.standard_normal((n, n))
        if np.linalg.cond(C) < max_condition:
            break
    D = np.tile(rng.standard_normal(m), (n, 1))
    e = np.full(n, rng.standard_normal())
    return LinearCausalProcess(C, D, e)

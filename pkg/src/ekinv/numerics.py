"""Dense linear algebra and keyed random streams.

Matrices are plain 2-d ``numpy`` arrays; the helpers here only add the
contracts (symmetry checks, jitter policy, descending eigen-order) that the
rest of the package relies on.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NonSymmetric, NotSPD

__all__ = [
    "RandomStream",
    "as_dense",
    "check_symmetric",
    "derive_seed",
    "gaussian_draws",
    "spd_solve",
    "sym_eigen",
]

SYMMETRY_RTOL = 1e-12


def as_dense(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a finite 2-d float array."""
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-d, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def check_symmetric(a: np.ndarray, rtol: float = SYMMETRY_RTOL) -> None:
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got {a.shape}")
    scale = np.max(np.abs(a)) if a.size else 0.0
    if np.max(np.abs(a - a.T), initial=0.0) > rtol * max(scale, np.finfo(float).tiny):
        raise NonSymmetric("matrix is not symmetric to the required tolerance")


def spd_solve(a, b) -> np.ndarray:
    """Solve ``a @ x = b`` for symmetric positive-definite ``a``.

    Uses a Cholesky factorization. If that fails the factorization is retried
    once on ``a + delta * I`` with ``delta = 1e-12 * trace(a) / n``.

    Parameters
    ----------
    a : array of shape (n, n)
        Symmetric positive-definite matrix.
    b : array of shape (n,) or (n, k)
        Right-hand side(s).

    Returns
    -------
    x : ndarray with the shape of ``b``

    Raises
    ------
    NotSPD
        If both factorization attempts fail.
    DimensionMismatch
        If ``b`` does not have ``n`` rows.
    """
    a = as_dense(a, "A")
    check_symmetric(a)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != a.shape[0]:
        raise DimensionMismatch(f"A is {a.shape}, B has {b.shape[0]} rows")
    try:
        factor = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        delta = 1e-12 * np.trace(a) / a.shape[0]
        try:
            factor = scipy.linalg.cho_factor(
                a + delta * np.eye(a.shape[0]), lower=True, check_finite=False
            )
        except np.linalg.LinAlgError as exc:
            raise NotSPD("Cholesky factorization failed after jitter") from exc
    return scipy.linalg.cho_solve(factor, b, check_finite=False)


def sym_eigen(a) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix, eigenvalues descending.

    Returns ``(values, vectors)`` where ``vectors[:, k]`` pairs with
    ``values[k]``.
    """
    a = as_dense(a, "A")
    check_symmetric(a)
    values, vectors = np.linalg.eigh(a)
    order = np.argsort(values, kind="stable")[::-1]
    return values[order], vectors[:, order]


def _tag_code(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


@dataclass(frozen=True)
class RandomStream:
    """A keyed source of random numbers.

    The pair ``(seed, (purpose, member, iteration))`` fully determines the
    draw sequence, so members and iterations can be sampled in any order.
    """

    seed: int
    purpose: str = "default"
    member: int = 0
    iteration: int = 0

    def __post_init__(self):
        if self.member < 0 or self.iteration < 0:
            raise ValueError("stream indices must be non-negative")

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(
            entropy=int(self.seed) & 0xFFFFFFFFFFFFFFFF,
            spawn_key=(_tag_code(self.purpose), self.member, self.iteration),
        )
        return np.random.Generator(np.random.Philox(seq))

    def child(self, purpose=None, member=None, iteration=None) -> "RandomStream":
        return RandomStream(
            self.seed,
            self.purpose if purpose is None else purpose,
            self.member if member is None else member,
            self.iteration if iteration is None else iteration,
        )


def gaussian_draws(stream: RandomStream, n: int) -> np.ndarray:
    """``n`` i.i.d. standard normal values from ``stream``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return stream.generator().standard_normal(n)


def derive_seed(master: int, tag: str, index: int = 0) -> int:
    """Derive a 64-bit child seed from a master seed, a tag and an index."""
    seq = np.random.SeedSequence(
        entropy=int(master) & 0xFFFFFFFFFFFFFFFF, spawn_key=(_tag_code(tag), index)
    )
    return int(seq.generate_state(1, dtype=np.uint64)[0])

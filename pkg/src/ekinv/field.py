"""Function-space representation.

Fields are coefficient vectors in an orthonormal basis, so L2 inner products
and norms are Euclidean on the coefficients. Gaussian measures are stored
spectrally as eigenvalue/eigenvector pairs in that coefficient space.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from functools import cached_property, lru_cache

import numpy as np

from .errors import AlphaTooSmall, BasisMismatch, DimensionMismatch, TooFewModes
from .numerics import RandomStream, gaussian_draws

__all__ = [
    "Basis",
    "Field",
    "GaussianMeasure",
    "Subspace",
    "WeightedNorm",
    "covariance_darcy",
    "covariance_elliptic",
    "kl_coordinates",
    "kl_ensemble",
    "project",
    "random_ensemble",
    "sample_prior",
    "synthesize_cells",
    "weighted_misfit",
]

SINE_1D = "sine-1d"
COSINE_2D = "cosine-tensor-2d"
NODAL_2D = "nodal-grid-2d"
_KINDS = (SINE_1D, COSINE_2D, NODAL_2D)


@dataclass(frozen=True)
class Basis:
    """Discretization of a function space.

    ``sine-1d``: normalized ``sin(kx)`` on ``(0, pi)``, ``k = 1..truncation``.

    ``cosine-tensor-2d``: normalized ``cos(k1 pi x / L) cos(k2 pi y / L)`` on
    ``[0, L]^2`` for ``0 <= k1, k2 < truncation`` minus the constant mode,
    ordered lexicographically in ``(k1, k2)``.

    ``nodal-grid-2d``: values at the centres of an ``m x m`` cell grid on
    ``[0, L]^2``, flattened with ``x`` varying fastest.
    """

    kind: str
    truncation: int = 0
    grid: int = 0
    length: float = 6.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown basis kind {self.kind!r}")
        if self.kind == NODAL_2D:
            if self.grid < 1:
                raise ValueError("nodal basis needs grid >= 1")
        elif self.truncation < 1:
            raise ValueError("truncation must be >= 1")

    @classmethod
    def sine(cls, truncation: int) -> "Basis":
        return cls(SINE_1D, truncation=truncation, length=float(np.pi))

    @classmethod
    def cosine(cls, truncation: int, length: float = 6.0) -> "Basis":
        return cls(COSINE_2D, truncation=truncation, length=length)

    @classmethod
    def nodal(cls, grid: int, length: float = 6.0) -> "Basis":
        return cls(NODAL_2D, grid=grid, length=length)

    @property
    def dim(self) -> int:
        if self.kind == SINE_1D:
            return self.truncation
        if self.kind == COSINE_2D:
            return self.truncation**2 - 1
        return self.grid**2

    @property
    def orthonormal(self) -> bool:
        return self.kind != NODAL_2D

    @cached_property
    def modes(self) -> np.ndarray:
        """Wavenumbers per coefficient: shape (dim,) for 1d, (dim, 2) for 2d."""
        if self.kind == SINE_1D:
            return np.arange(1, self.truncation + 1)
        if self.kind == COSINE_2D:
            k1, k2 = np.meshgrid(
                np.arange(self.truncation), np.arange(self.truncation), indexing="ij"
            )
            pairs = np.column_stack([k1.ravel(), k2.ravel()])
            return pairs[1:]
        raise ValueError("nodal basis has no modes")

    def evaluate(self, points) -> np.ndarray:
        """Matrix of basis functions at ``points``, shape (n_points, dim)."""
        pts = np.asarray(points, dtype=float)
        if self.kind == SINE_1D:
            x = pts.reshape(-1)
            return np.sqrt(2.0 / np.pi) * np.sin(np.outer(x, self.modes))
        if self.kind == COSINE_2D:
            pts = pts.reshape(-1, 2)
            scale = np.pi / self.length
            k1, k2 = self.modes[:, 0], self.modes[:, 1]
            c1 = np.where(k1 == 0, np.sqrt(1.0 / self.length), np.sqrt(2.0 / self.length))
            c2 = np.where(k2 == 0, np.sqrt(1.0 / self.length), np.sqrt(2.0 / self.length))
            return (
                c1 * c2
                * np.cos(scale * np.outer(pts[:, 0], k1))
                * np.cos(scale * np.outer(pts[:, 1], k2))
            )
        raise ValueError("evaluate is defined for spectral bases only")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "truncation": self.truncation,
            "grid": self.grid,
            "length": self.length,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Basis":
        return cls(d["kind"], int(d["truncation"]), int(d["grid"]), float(d["length"]))


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Field:
    """A function stored as its coefficient vector in ``basis``."""

    basis: Basis
    coeffs: np.ndarray

    def __post_init__(self):
        c = _frozen(self.coeffs).reshape(-1)
        if c.size != self.basis.dim:
            raise DimensionMismatch(
                f"basis has dimension {self.basis.dim}, got {c.size} coefficients"
            )
        if not np.all(np.isfinite(c)):
            raise ValueError("field coefficients must be finite")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, basis: Basis) -> "Field":
        return cls(basis, np.zeros(basis.dim))

    def _check(self, other: "Field") -> None:
        if other.basis != self.basis:
            raise BasisMismatch("fields live in different bases")

    def __add__(self, other: "Field") -> "Field":
        self._check(other)
        return Field(self.basis, self.coeffs + other.coeffs)

    def __sub__(self, other: "Field") -> "Field":
        self._check(other)
        return Field(self.basis, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "Field":
        return Field(self.basis, scalar * self.coeffs)

    __rmul__ = __mul__

    def inner(self, other: "Field") -> float:
        self._check(other)
        w = 1.0 if self.basis.orthonormal else (self.basis.length / self.basis.grid) ** 2
        return float(w * (self.coeffs @ other.coeffs))

    def norm(self) -> float:
        return float(np.sqrt(max(self.inner(self), 0.0)))

    def to_dict(self) -> dict:
        return {"basis": self.basis.to_dict(), "coeffs": self.coeffs.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Field":
        return cls(Basis.from_dict(d["basis"]), np.asarray(d["coeffs"], dtype=float))

    def to_json(self) -> str:
        # repr-based float formatting is the shortest exact round-trip form
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Field":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class GaussianMeasure:
    """``N(mean, C)`` with ``C = sum_j lambda_j phi_j phi_j^T``.

    ``eigvecs[:, j]`` holds the coefficients of ``phi_j``.
    """

    mean: Field
    eigenvalues: np.ndarray
    eigvecs: np.ndarray

    def __post_init__(self):
        lam = _frozen(self.eigenvalues).reshape(-1)
        vecs = _frozen(self.eigvecs).reshape(self.mean.basis.dim, lam.size)
        if np.any(lam <= 0):
            raise ValueError("eigenvalues must be strictly positive")
        if np.any(np.diff(lam) > 0):
            raise ValueError("eigenvalues must be in descending order")
        gram = vecs.T @ vecs
        if lam.size and np.max(np.abs(gram - np.eye(lam.size))) > 1e-10:
            raise ValueError("eigenfields must be orthonormal")
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "eigvecs", vecs)

    @property
    def basis(self) -> Basis:
        return self.mean.basis

    @property
    def eigenfields(self) -> list[Field]:
        return [Field(self.basis, v) for v in self.eigvecs.T]

    def covariance_matrix(self) -> np.ndarray:
        return (self.eigvecs * self.eigenvalues) @ self.eigvecs.T

    def inv_sqrt_apply(self, coeffs) -> np.ndarray:
        """``C^{-1/2}`` in eigen-coordinates: ``lambda^{-1/2} phi^T v``."""
        v = self.eigvecs.T @ np.asarray(coeffs, dtype=float)
        s = np.sqrt(self.eigenvalues)
        return v / (s[:, None] if v.ndim == 2 else s)

    def with_mean(self, mean: Field) -> "GaussianMeasure":
        return GaussianMeasure(mean, self.eigenvalues, self.eigvecs)


def covariance_elliptic(beta: float, modes: int) -> GaussianMeasure:
    """Prior ``beta * (-d^2/dx^2)^{-1}`` with Dirichlet conditions on ``(0, pi)``."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    basis = Basis.sine(modes)
    k = basis.modes.astype(float)
    return GaussianMeasure(Field.zeros(basis), beta / k**2, np.eye(basis.dim))


def covariance_darcy(beta: float, alpha: float, truncation: int, length: float = 6.0) -> GaussianMeasure:
    """Prior ``beta * L^{-alpha}``, ``L`` the zero-mean Neumann Laplacian on ``[0, length]^2``.

    The mean is zero; the constant log-conductivity offset belongs to the
    forward model.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if alpha <= 1:
        raise AlphaTooSmall(f"alpha={alpha} gives a non trace-class covariance in 2d")
    basis = Basis.cosine(truncation, length)
    ksq = np.sum(basis.modes.astype(float) ** 2, axis=1)
    lam = beta * ((np.pi / length) ** 2 * ksq) ** (-alpha)
    # stable sort keeps lexicographic (k1, k2) order among ties
    order = np.argsort(-lam, kind="stable")
    vecs = np.eye(basis.dim)[:, order]
    return GaussianMeasure(Field.zeros(basis), lam[order], vecs)


def sample_prior(measure: GaussianMeasure, stream: RandomStream) -> Field:
    """One draw ``mean + sum_j sqrt(lambda_j) xi_j phi_j``."""
    m = measure.eigenvalues.size
    if m == 0:
        return measure.mean
    xi = gaussian_draws(stream, m)
    coeffs = measure.mean.coeffs + measure.eigvecs @ (np.sqrt(measure.eigenvalues) * xi)
    return Field(measure.basis, coeffs)


def kl_coordinates(measure: GaussianMeasure, u: Field) -> np.ndarray:
    """Coordinates ``phi_j^T (u - mean)`` of ``u`` in the eigenbasis."""
    if u.basis != measure.basis:
        raise BasisMismatch("field and measure live in different bases")
    return measure.eigvecs.T @ (u.coeffs - measure.mean.coeffs)


@dataclass(frozen=True, eq=False)
class Subspace:
    """The span of an ordered list of fields (the initial ensemble).

    ``matrix[:, j]`` holds the coefficients of member ``j``.
    """

    basis: Basis
    matrix: np.ndarray
    _svd: tuple = dc_field(default=None, init=False, repr=False)

    def __post_init__(self):
        mat = _frozen(self.matrix)
        if mat.ndim != 2 or mat.shape[0] != self.basis.dim:
            raise DimensionMismatch(
                f"member matrix must be ({self.basis.dim}, J), got {mat.shape}"
            )
        object.__setattr__(self, "matrix", mat)

    @classmethod
    def from_fields(cls, fields) -> "Subspace":
        fields = list(fields)
        if not fields:
            raise ValueError("a subspace needs at least one member")
        basis = fields[0].basis
        for f in fields[1:]:
            if f.basis != basis:
                raise BasisMismatch("subspace members must share one basis")
        return cls(basis, np.column_stack([f.coeffs for f in fields]))

    @property
    def size(self) -> int:
        return self.matrix.shape[1]

    @property
    def members(self) -> list[Field]:
        return [Field(self.basis, c) for c in self.matrix.T]

    @property
    def gram(self) -> np.ndarray:
        return self.matrix.T @ self.matrix

    def _factor(self):
        if self._svd is None:
            # SVD of the member matrix: same pseudo-inverse as the Gram
            # eigen-solve, without squaring the condition number
            u, s, vt = np.linalg.svd(self.matrix, full_matrices=False)
            keep = s**2 > 1e-12 * (s[0] ** 2 if s.size else 0.0)
            object.__setattr__(self, "_svd", (u[:, keep], s[keep], vt[keep]))
        return self._svd

    def combine(self, coeffs) -> Field:
        return Field(self.basis, self.matrix @ np.asarray(coeffs, dtype=float))

    def project_coeffs(self, u) -> np.ndarray:
        """Least-squares coefficients for one vector or the columns of a matrix."""
        u_, s, vt = self._factor()
        return vt.T @ ((u_.T @ np.asarray(u, dtype=float)) / (s[:, None] if np.ndim(u) == 2 else s))


def project(A: Subspace, u: Field) -> tuple[np.ndarray, float]:
    """Best L2 approximation of ``u`` in ``span(A)``.

    Returns the member coefficients and the residual norm. Gram directions
    with eigenvalue below ``1e-12 * max`` are dropped.
    """
    if u.basis != A.basis:
        raise BasisMismatch("field and subspace live in different bases")
    c = A.project_coeffs(u.coeffs)
    residual = float(np.linalg.norm(A.matrix @ c - u.coeffs))
    return c, residual


def kl_ensemble(measure: GaussianMeasure, J: int) -> Subspace:
    """Members ``mean + sqrt(lambda_j) phi_j`` for the ``J`` largest eigenvalues."""
    if J < 1:
        raise ValueError("J must be >= 1")
    if J > measure.eigenvalues.size:
        raise TooFewModes(f"J={J} exceeds the {measure.eigenvalues.size} stored eigenpairs")
    members = measure.mean.coeffs[:, None] + measure.eigvecs[:, :J] * np.sqrt(
        measure.eigenvalues[:J]
    )
    return Subspace(measure.basis, members)


def random_ensemble(measure: GaussianMeasure, J: int, seed: int, purpose: str = "ensemble") -> Subspace:
    """``J`` i.i.d. prior draws, member ``j`` taken from stream ``(purpose, j)``."""
    if J < 1:
        raise ValueError("J must be >= 1")
    m = measure.eigenvalues.size
    if m == 0:
        return Subspace(measure.basis, np.repeat(measure.mean.coeffs[:, None], J, axis=1))
    # same draws as sample_prior(measure, stream_j), synthesized in one product
    xi = np.column_stack([gaussian_draws(RandomStream(seed, purpose, member=j), m) for j in range(J)])
    members = measure.mean.coeffs[:, None] + measure.eigvecs @ (np.sqrt(measure.eigenvalues)[:, None] * xi)
    return Subspace(measure.basis, members)


@dataclass(frozen=True, eq=False)
class WeightedNorm:
    """``||r||_B = ||B^{-1/2} r||`` for a diagonal covariance ``B``.

    ``variance`` is either a scalar (white noise ``gamma^2 I``) or the
    diagonal of ``B``.
    """

    variance: np.ndarray | float

    def __post_init__(self):
        v = np.asarray(self.variance, dtype=float)
        if np.any(v <= 0) or not np.all(np.isfinite(v)):
            raise ValueError("weights must be strictly positive and finite")
        object.__setattr__(self, "variance", float(v) if v.ndim == 0 else _frozen(v))

    @classmethod
    def white(cls, gamma: float) -> "WeightedNorm":
        return cls(gamma**2)

    @property
    def is_scalar(self) -> bool:
        return np.ndim(self.variance) == 0

    def diagonal(self, size: int) -> np.ndarray:
        if self.is_scalar:
            return np.full(size, self.variance)
        if self.variance.size != size:
            raise DimensionMismatch(f"weights have length {self.variance.size}, data {size}")
        return np.asarray(self.variance)

    def matrix(self, size: int) -> np.ndarray:
        return np.diag(self.diagonal(size))

    def whiten(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        d = self.diagonal(r.shape[0])
        return r / (np.sqrt(d)[:, None] if r.ndim == 2 else np.sqrt(d))

    def norm(self, r) -> float:
        return float(np.linalg.norm(self.whiten(r)))

    def sample(self, stream: RandomStream, size: int) -> np.ndarray:
        return np.sqrt(self.diagonal(size)) * gaussian_draws(stream, size)


def weighted_misfit(y, Gu, gamma: WeightedNorm) -> float:
    """Square root of the data misfit, ``||gamma^{-1/2} (y - Gu)||``."""
    y = np.asarray(y, dtype=float)
    Gu = np.asarray(Gu, dtype=float)
    if y.shape != Gu.shape:
        raise DimensionMismatch(f"data shapes differ: {y.shape} vs {Gu.shape}")
    return gamma.norm(y - Gu)


@lru_cache(maxsize=16)
def _cell_evaluation(basis: Basis, m: int) -> np.ndarray:
    h = basis.length / m
    centres = (np.arange(m) + 0.5) * h
    xx, yy = np.meshgrid(centres, centres, indexing="xy")
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    mat = basis.evaluate(pts)
    mat.setflags(write=False)
    return mat


def synthesize_cells(u: Field, m: int) -> np.ndarray:
    """Values of a cosine-basis field at the centres of an ``m x m`` grid.

    Returned flattened with ``x`` varying fastest (row ``j`` is ``y_j``).
    """
    if u.basis.kind != COSINE_2D:
        raise BasisMismatch("cell synthesis needs a cosine-tensor-2d field")
    return _cell_evaluation(u.basis, m) @ u.coeffs


def synthesize_cells_matrix(basis: Basis, m: int) -> np.ndarray:
    return _cell_evaluation(basis, m)

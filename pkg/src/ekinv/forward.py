"""Forward response operators ``G: u -> data``.

Two models are built in: the 1d elliptic operator ``(-d^2/dx^2 + 1)^{-1}``
observed through all its sine coefficients, and steady Darcy flow on
``[0, 6]^2`` observed at well locations.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import BasisMismatch, NotLinearModel, PointOutsideDomain, SolveFailure
from .field import COSINE_2D, NODAL_2D, SINE_1D, Basis, Field, synthesize_cells_matrix

__all__ = [
    "DarcyGrid",
    "DarcyModel",
    "EllipticModel",
    "ForwardModel",
    "ObservationSpec",
    "darcy_assemble",
    "darcy_solve",
    "elliptic_apply",
    "forward_response",
    "observe",
    "recharge_source",
    "well_lattice",
]

ALL_COEFFICIENTS = "all-coefficients"
POINT_VALUES = "point-values"

DIRICHLET_HEAD = 100.0
LEFT_INFLOW = 500.0


@dataclass(frozen=True, eq=False)
class ObservationSpec:
    kind: str
    size: int
    points: np.ndarray | None = None

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("observation size must be >= 1")
        if self.kind == POINT_VALUES:
            pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
            if pts.shape[0] != self.size:
                raise ValueError("size must equal the number of points")
            pts.setflags(write=False)
            object.__setattr__(self, "points", pts)
        elif self.kind != ALL_COEFFICIENTS:
            raise ValueError(f"unknown observation kind {self.kind!r}")

    @classmethod
    def all_coefficients(cls, size: int) -> "ObservationSpec":
        return cls(ALL_COEFFICIENTS, size)

    @classmethod
    def point_values(cls, points) -> "ObservationSpec":
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        return cls(POINT_VALUES, pts.shape[0], pts)


def well_lattice(n: int = 10, length: float = 6.0) -> np.ndarray:
    """Regular ``n x n`` lattice of wells at ``((i - 0.5) h, (j - 0.5) h)``, ``h = length / n``."""
    h = length / n
    c = (np.arange(1, n + 1) - 0.5) * h
    xx, yy = np.meshgrid(c, c, indexing="xy")
    return np.column_stack([xx.ravel(), yy.ravel()])


@dataclass(frozen=True)
class DarcyGrid:
    m: int
    length: float = 6.0

    def __post_init__(self):
        if self.m < 8:
            raise ValueError("DarcyGrid needs at least 8 cells per side")

    @property
    def delta(self) -> float:
        return self.length / self.m

    @property
    def centres(self) -> np.ndarray:
        return (np.arange(self.m) + 0.5) * self.delta

    def cell_points(self) -> np.ndarray:
        xx, yy = np.meshgrid(self.centres, self.centres, indexing="xy")
        return np.column_stack([xx.ravel(), yy.ravel()])

    @property
    def basis(self) -> Basis:
        return Basis.nodal(self.m, self.length)


def elliptic_apply(u: Field) -> Field:
    """Apply ``(-d^2/dx^2 + 1)^{-1}`` with Dirichlet conditions on ``(0, pi)``."""
    if u.basis.kind != SINE_1D:
        raise BasisMismatch("elliptic operator acts on sine-1d fields")
    k = u.basis.modes.astype(float)
    return Field(u.basis, u.coeffs / (1.0 + k**2))


def recharge_source(x2) -> np.ndarray:
    """Piecewise-constant recharge: 0 below ``x2 = 4``, 137 up to 5, 274 above."""
    x2 = np.asarray(x2, dtype=float)
    return np.where(x2 <= 4.0, 0.0, np.where(x2 < 5.0, 137.0, 274.0))


def darcy_assemble(log_k, grid: DarcyGrid, source=None, dirichlet=None):
    """Assemble the cell-centred system for ``-div(exp(u) grad h) = f``.

    Parameters
    ----------
    log_k : array of shape (m*m,) or (m, m)
        Log-conductivity at cell centres, ``x`` varying fastest.
    grid : DarcyGrid
    source : array of shape (m*m,), optional
        Source ``f`` at cell centres. Defaults to the piecewise recharge.
    dirichlet : callable ``g(x, y)``, optional
        If given, ``h = g`` on all four sides and no inflow. Otherwise the
        aquifer conditions apply: ``h = 100`` at ``y = 0``, a flux of 500 per
        unit length entering through ``x = 0``, no flow on the other sides.

    Returns
    -------
    A : scipy.sparse.csc_matrix of shape (m*m, m*m)
    b : ndarray of shape (m*m,)
    """
    m, d = grid.m, grid.delta
    kc = np.exp(np.asarray(log_k, dtype=float).reshape(m, m))
    idx = np.arange(m * m).reshape(m, m)

    # harmonic-mean transmissibilities; face length / centre distance = 1
    tx = 2.0 * kc[:, :-1] * kc[:, 1:] / (kc[:, :-1] + kc[:, 1:])
    ty = 2.0 * kc[:-1, :] * kc[1:, :] / (kc[:-1, :] + kc[1:, :])
    a_idx = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    b_idx = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    t = np.concatenate([tx.ravel(), ty.ravel()])

    diag = np.zeros(m * m)
    np.add.at(diag, a_idx, t)
    np.add.at(diag, b_idx, t)

    if source is None:
        cy = grid.cell_points()[:, 1]
        source = recharge_source(cy)
    rhs = np.asarray(source, dtype=float).reshape(-1) * d * d

    def boundary(cells, values):
        # half-cell distance to the boundary face
        w = 2.0 * kc.ravel()[cells]
        np.add.at(diag, cells, w)
        np.add.at(rhs, cells, w * values)

    c = grid.centres
    if dirichlet is None:
        boundary(idx[0, :], np.full(m, DIRICHLET_HEAD))
        rhs[idx[:, 0]] += LEFT_INFLOW * d
    else:
        boundary(idx[0, :], dirichlet(c, np.zeros(m)))
        boundary(idx[-1, :], dirichlet(c, np.full(m, grid.length)))
        boundary(idx[:, 0], dirichlet(np.zeros(m), c))
        boundary(idx[:, -1], dirichlet(np.full(m, grid.length), c))

    rows = np.concatenate([np.arange(m * m), a_idx, b_idx])
    cols = np.concatenate([np.arange(m * m), b_idx, a_idx])
    vals = np.concatenate([diag, -t, -t])
    A = sp.csc_matrix((vals, (rows, cols)), shape=(m * m, m * m))
    return A, rhs


def darcy_solve(u, grid: DarcyGrid, source=None, dirichlet=None) -> Field:
    """Piezometric head at cell centres for log-conductivity ``u``.

    ``u`` is either a nodal :class:`Field` on ``grid`` or an array of cell
    values. See :func:`darcy_assemble` for the boundary conditions.
    """
    if isinstance(u, Field):
        if u.basis.kind != NODAL_2D or u.basis.grid != grid.m:
            raise BasisMismatch("darcy_solve needs a nodal field on the solver grid")
        u = u.coeffs
    A, b = darcy_assemble(u, grid, source, dirichlet)
    try:
        h = spla.splu(A).solve(b)
    except RuntimeError as exc:
        raise SolveFailure(str(exc)) from exc
    if not np.all(np.isfinite(h)):
        raise SolveFailure("non-finite head")
    return Field(grid.basis, h)


def _bilinear_weights(points: np.ndarray, m: int, length: float) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if np.any(pts < 0) or np.any(pts > length):
        raise PointOutsideDomain("observation point outside the domain")
    d = length / m
    w = np.zeros((pts.shape[0], m * m))
    f = pts / d - 0.5
    i0 = np.clip(np.floor(f).astype(int), 0, m - 2)
    t = np.clip(f - i0, 0.0, 1.0)
    for r, ((ix, iy), (tx, ty)) in enumerate(zip(i0, t)):
        w[r, iy * m + ix] += (1 - tx) * (1 - ty)
        w[r, iy * m + ix + 1] += tx * (1 - ty)
        w[r, (iy + 1) * m + ix] += (1 - tx) * ty
        w[r, (iy + 1) * m + ix + 1] += tx * ty
    return w


def observe(state: Field, spec: ObservationSpec) -> np.ndarray:
    """Read data off a state: its coefficients, or its values at points."""
    if spec.kind == ALL_COEFFICIENTS:
        if state.coeffs.size != spec.size:
            raise ValueError("state size does not match the observation size")
        return state.coeffs.copy()
    basis = state.basis
    if basis.kind == NODAL_2D:
        return _bilinear_weights(spec.points, basis.grid, basis.length) @ state.coeffs
    pts = spec.points
    if np.any(pts < 0) or np.any(pts > basis.length):
        raise PointOutsideDomain("observation point outside the domain")
    return basis.evaluate(pts) @ state.coeffs


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("EKI_THREADS", "1")))
    except ValueError:
        return 1


class ForwardModel:
    """Base class: maps an input field to an observation vector.

    Subclasses implement :meth:`evaluate`; :meth:`evaluate_many` maps the
    columns of a coefficient matrix and runs members on up to ``EKI_THREADS``
    worker threads.
    """

    name = "forward"
    linear = False

    def __init__(self, input_basis: Basis, observation: ObservationSpec):
        self.input_basis = input_basis
        self.observation = observation

    @property
    def data_size(self) -> int:
        return self.observation.size

    def evaluate(self, u: Field) -> np.ndarray:
        raise NotImplementedError

    def evaluate_many(self, coeffs: np.ndarray) -> np.ndarray:
        cols = [Field(self.input_basis, c) for c in np.asarray(coeffs).T]
        workers = _workers()
        if workers > 1 and len(cols) > 1:
            with ThreadPoolExecutor(workers) as pool:
                out = list(pool.map(self.evaluate, cols))
        else:
            out = [self.evaluate(c) for c in cols]
        return np.column_stack(out) if out else np.zeros((self.data_size, 0))

    def matrix(self) -> np.ndarray:
        raise NotLinearModel(f"{self.name} model is not linear")

    def to_dict(self) -> dict:
        return {"name": self.name}


class EllipticModel(ForwardModel):
    """``G = (-d^2/dx^2 + 1)^{-1}`` on ``(0, pi)``, all sine coefficients observed."""

    name = "elliptic"
    linear = True

    def __init__(self, modes: int = 512):
        super().__init__(Basis.sine(modes), ObservationSpec.all_coefficients(modes))
        self.modes = modes

    @cached_property
    def _diag(self) -> np.ndarray:
        k = self.input_basis.modes.astype(float)
        return 1.0 / (1.0 + k**2)

    def evaluate(self, u: Field) -> np.ndarray:
        return observe(elliptic_apply(u), self.observation)

    def evaluate_many(self, coeffs: np.ndarray) -> np.ndarray:
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[0] != self.input_basis.dim:
            raise BasisMismatch("coefficient matrix does not match the sine basis")
        return self._diag[:, None] * coeffs

    def matrix(self) -> np.ndarray:
        return np.diag(self._diag)

    def to_dict(self) -> dict:
        return {"name": self.name, "modes": self.modes}


class DarcyModel(ForwardModel):
    """Head at wells for log-conductivity ``mean + u``.

    ``u`` is a zero-mean cosine-basis field; it is evaluated at the cell
    centres of ``grid`` before the solve.
    """

    name = "darcy"

    def __init__(self, grid: DarcyGrid, truncation: int = 32, mean: float = 4.0, wells=None):
        wells = well_lattice(10, grid.length) if wells is None else np.asarray(wells, dtype=float)
        super().__init__(Basis.cosine(truncation, grid.length), ObservationSpec.point_values(wells))
        self.grid = grid
        self.truncation = truncation
        self.mean = float(mean)
        self._synth = synthesize_cells_matrix(self.input_basis, grid.m)
        self._interp = _bilinear_weights(self.observation.points, grid.m, grid.length)

    def log_conductivity(self, u: Field) -> np.ndarray:
        if u.basis != self.input_basis:
            raise BasisMismatch("field is not in the model's cosine basis")
        return self.mean + self._synth @ u.coeffs

    def head(self, u: Field) -> Field:
        return darcy_solve(self.log_conductivity(u), self.grid)

    def evaluate(self, u: Field) -> np.ndarray:
        return self._interp @ self.head(u).coeffs

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "grid": self.grid.m,
            "truncation": self.truncation,
            "mean": self.mean,
            "wells": self.observation.size,
        }


def forward_response(model: ForwardModel, u: Field) -> np.ndarray:
    """``G(u)``: the model's solve followed by its observation."""
    return model.evaluate(u)

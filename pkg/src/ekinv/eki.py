"""Iterative ensemble Kalman inversion.

The ensemble is held as two coefficient matrices: ``U`` (parameter block,
one column per member) and ``P`` (data-space block). Each iteration is a
prediction ``P <- G(U)`` followed by a Kalman analysis against perturbed
copies of the data.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from .errors import DimensionMismatch, EnsembleTooSmall
from .field import Field, Subspace, WeightedNorm
from .forward import ForwardModel
from .numerics import RandomStream, spd_solve

__all__ = [
    "Diagnostics",
    "EkiState",
    "InversionResult",
    "StoppingRule",
    "analyze",
    "ensemble_stats",
    "estimate",
    "init",
    "predict",
    "run",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Diagnostics:
    iteration: int
    misfit: float
    member_misfits: tuple[float, ...]
    relative_error: float | None = None

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "relative_error": self.relative_error,
            "misfit": self.misfit,
            "member_misfits": list(self.member_misfits),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Diagnostics":
        return cls(
            int(d["iteration"]),
            float(d["misfit"]),
            tuple(float(v) for v in d["member_misfits"]),
            None if d["relative_error"] is None else float(d["relative_error"]),
        )


@dataclass(frozen=True)
class StoppingRule:
    """Discrepancy principle: stop once ``misfit <= tau * noise_level``."""

    tau: float = 1.1
    noise_level: float = 0.0
    max_iterations: int = 30

    def __post_init__(self):
        if self.tau <= 1:
            raise ValueError("tau must exceed 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.noise_level < 0:
            raise ValueError("noise_level must be non-negative")

    @property
    def threshold(self) -> float:
        return self.tau * self.noise_level

    def satisfied(self, misfit: float) -> bool:
        return bool(misfit <= self.threshold)


@dataclass(frozen=True, eq=False)
class EkiState:
    """Ensemble ``{(u_j, p_j)}`` after ``iteration`` analysis steps.

    ``weights`` expresses the parameter block in the initial members:
    ``U = subspace.matrix @ weights`` up to rounding.
    """

    subspace: Subspace
    U: np.ndarray
    P: np.ndarray
    iteration: int = 0
    weights: np.ndarray | None = None
    history: tuple[Diagnostics, ...] = dc_field(default=())

    @property
    def size(self) -> int:
        return self.U.shape[1]

    @property
    def members(self) -> list[tuple[Field, np.ndarray]]:
        basis = self.subspace.basis
        return [(Field(basis, u), p.copy()) for u, p in zip(self.U.T, self.P.T)]


def init(A: Subspace, model: ForwardModel, track_weights: bool = True) -> EkiState:
    """Initial ensemble ``z_j = (psi_j, G(psi_j))``.

    ``track_weights=False`` skips the ``J x J`` weight matrix, which gets
    expensive for very large ensembles.
    """
    if A.basis != model.input_basis:
        raise DimensionMismatch("subspace basis differs from the model's input basis")
    U = np.array(A.matrix)
    return EkiState(A, U, model.evaluate_many(U), 0, np.eye(A.size) if track_weights else None)


def predict(state: EkiState, model: ForwardModel) -> EkiState:
    """Push the ensemble through ``(u, p) -> (u, G(u))``."""
    return replace(state, P=model.evaluate_many(state.U))


def ensemble_stats(state: EkiState):
    """Sample means and cross-covariances with ``1/J`` normalization.

    Returns
    -------
    u_mean : Field
    p_mean : ndarray of shape (kappa,)
    C_up : ndarray of shape (n, kappa)
    C_pp : ndarray of shape (kappa, kappa), symmetrized
    """
    J = state.size
    if J < 2:
        raise EnsembleTooSmall("ensemble statistics need J >= 2")
    p_mean = state.P.mean(axis=1)
    dP = state.P - p_mean[:, None]
    C_up = state.U @ dP.T / J
    C_pp = state.P @ dP.T / J
    C_pp = 0.5 * (C_pp + C_pp.T)
    return Field(state.subspace.basis, state.U.mean(axis=1)), p_mean, C_up, C_pp


def perturbations(gamma: WeightedNorm, stream: RandomStream, J: int, size: int, iteration: int) -> np.ndarray:
    """Noise ``eta_j ~ N(0, gamma)`` for each member, keyed by (member, iteration)."""
    return np.column_stack(
        [gamma.sample(stream.child(member=j, iteration=iteration), size) for j in range(J)]
    )


def analyze(state: EkiState, y, gamma: WeightedNorm, stream: RandomStream | None = None, perturb: bool = True) -> EkiState:
    """Kalman update of every member against (optionally perturbed) data.

    ``d_j = (C_pp + gamma)^{-1} (y + eta_j - p_j)``, then
    ``u_j += C_up d_j`` and ``p_j += C_pp d_j``.
    """
    y = np.asarray(y, dtype=float)
    kappa = state.P.shape[0]
    if y.shape != (kappa,):
        raise DimensionMismatch(f"data has shape {y.shape}, ensemble predicts {kappa}")
    _, p_mean, C_up, C_pp = ensemble_stats(state)
    J = state.size
    n_next = state.iteration + 1
    Y = np.repeat(y[:, None], J, axis=1)
    if perturb:
        if stream is None:
            raise ValueError("perturbed analysis needs a random stream")
        Y = Y + perturbations(gamma, stream, J, kappa, n_next)
    D = spd_solve(C_pp + gamma.matrix(kappa), Y - state.P)
    weights = None
    if state.weights is not None:
        dP = state.P - p_mean[:, None]
        weights = state.weights @ (np.eye(J) + dP.T @ D / J)
    return replace(
        state,
        U=state.U + C_up @ D,
        P=state.P + C_pp @ D,
        iteration=n_next,
        weights=weights,
    )


def estimate(state: EkiState) -> Field:
    """Ensemble mean of the parameter block."""
    return Field(state.subspace.basis, state.U.mean(axis=1))


@dataclass(eq=False)
class InversionResult:
    """Outcome of :func:`run`.

    ``estimates[n]`` is the ensemble mean after ``n`` analyses; ``estimate``
    is the one at ``stop_iteration`` (the first discrepancy crossing, or the
    last iteration when the rule never triggered).
    """

    estimate: Field
    stop_iteration: int
    converged: bool
    history: list[Diagnostics]
    estimates: np.ndarray
    final_state: EkiState
    ensembles: list[np.ndarray] | None = None

    @property
    def misfits(self) -> np.ndarray:
        return np.array([d.misfit for d in self.history])

    @property
    def relative_errors(self) -> np.ndarray:
        return np.array([np.nan if d.relative_error is None else d.relative_error for d in self.history])


def _diagnose(state: EkiState, model: ForwardModel, y, gamma: WeightedNorm, truth: Field | None) -> Diagnostics:
    u = estimate(state)
    member = gamma.whiten(y[:, None] - state.P)
    rel = None
    if truth is not None:
        rel = (u - truth).norm() / truth.norm()
    return Diagnostics(
        state.iteration,
        gamma.norm(y - model.evaluate(u)),
        tuple(float(v) for v in np.linalg.norm(member, axis=0)),
        rel,
    )


def run(
    A: Subspace,
    model: ForwardModel,
    y,
    gamma: WeightedNorm,
    rule: StoppingRule,
    stream: RandomStream | None = None,
    truth: Field | None = None,
    perturb: bool = True,
    stop_on_discrepancy: bool = True,
    keep_ensembles: bool = False,
    callback=None,
) -> InversionResult:
    """Iterate prediction and analysis until the discrepancy principle holds.

    With ``stop_on_discrepancy=False`` the loop carries on to
    ``rule.max_iterations`` and only records where the rule first held.
    ``callback(state)`` is called after every prediction step.
    """
    y = np.asarray(y, dtype=float)
    state = init(A, model)
    history: list[Diagnostics] = []
    estimates = []
    ensembles = [] if keep_ensembles else None
    stop = None
    while True:
        if callback is not None:
            callback(state)
        diag = _diagnose(state, model, y, gamma, truth)
        history.append(diag)
        estimates.append(state.U.mean(axis=1))
        if keep_ensembles:
            ensembles.append(np.array(state.U))
        if stop is None and rule.satisfied(diag.misfit):
            stop = state.iteration
            log.debug("discrepancy met at iteration %d (misfit %.6g)", stop, diag.misfit)
            if stop_on_discrepancy:
                break
        if state.iteration >= rule.max_iterations:
            break
        state = analyze(state, y, gamma, stream, perturb)
        state = predict(state, model)
    converged = stop is not None
    if not converged:
        log.info("discrepancy principle not met in %d iterations", rule.max_iterations)
        stop = state.iteration
    est = Field(A.basis, estimates[stop])
    state = replace(state, history=tuple(history))
    return InversionResult(est, stop, converged, history, np.array(estimates), state, ensembles)

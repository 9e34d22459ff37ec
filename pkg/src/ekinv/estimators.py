"""scikit-learn style wrappers around the solvers.

Each estimator is fitted on an initial ensemble ``X`` of shape
``(n_members, n_coefficients)`` (one member per row, coefficients in the
forward model's input basis) and a data vector ``y``.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import eki
from ._validation import check_ensemble, check_vector
from .baselines import LsSettings, best_approximation, subspace_ls
from .field import Basis, Field, Subspace, WeightedNorm
from .numerics import RandomStream

__all__ = ["BestApproximation", "EnsembleKalmanInversion", "SubspaceLeastSquares"]


def _noise(noise_std, size: int) -> WeightedNorm:
    std = np.asarray(noise_std, dtype=float)
    return WeightedNorm(std**2 if std.ndim == 0 else np.broadcast_to(std**2, (size,)))


class _SubspaceMixin(TransformerMixin):
    def transform(self, X):
        """Coordinates of each row of ``X`` in the initial ensemble."""
        check_is_fitted(self, "subspace_")
        X = check_ensemble(X, self.subspace_.basis.dim)
        return self.subspace_.project_coeffs(X.T).T

    def _forward_rows(self, X):
        X = check_ensemble(X, self.model.input_basis.dim)
        return self.model.evaluate_many(X.T).T


class EnsembleKalmanInversion(_SubspaceMixin, BaseEstimator):
    """Iterative ensemble Kalman inversion with discrepancy-principle stopping.

    Parameters
    ----------
    model : ForwardModel
        Forward response operator.
    noise_std : float or array-like
        Standard deviation(s) of the observational noise.
    tau : float, default=1.1
        Discrepancy multiplier, must exceed 1.
    max_iter : int, default=30
    noise_level : float, optional
        ``||eta||_Gamma`` if known; defaults to ``sqrt(n_observations)``.
    perturb : bool, default=True
        Perturb the data for each member and iteration.
    stop_on_discrepancy : bool, default=True
        If False, iterate to ``max_iter`` and only record the stopping index.
    random_state : int, default=0
        Seed of the perturbation streams.

    Attributes
    ----------
    coef_ : ndarray of shape (n_coefficients,)
        The estimate at the stopping iteration.
    subspace_coef_ : ndarray of shape (n_members,)
        The final ensemble mean written in the initial members.
    ensemble_ : ndarray of shape (n_members, n_coefficients)
    n_iter_ : int
    converged_ : bool
    history_ : list of Diagnostics
    """

    def __init__(self, model, noise_std=1.0, tau=1.1, max_iter=30, noise_level=None,
                 perturb=True, stop_on_discrepancy=True, random_state=0):
        self.model = model
        self.noise_std = noise_std
        self.tau = tau
        self.max_iter = max_iter
        self.noise_level = noise_level
        self.perturb = perturb
        self.stop_on_discrepancy = stop_on_discrepancy
        self.random_state = random_state

    def fit(self, X, y, truth=None):
        X = check_ensemble(X, self.model.input_basis.dim, min_members=2)
        y = check_vector(y, self.model.data_size)
        gamma = _noise(self.noise_std, y.size)
        level = np.sqrt(y.size) if self.noise_level is None else self.noise_level
        rule = eki.StoppingRule(self.tau, level, self.max_iter)
        self.subspace_ = Subspace(self.model.input_basis, X.T)
        if truth is not None and not isinstance(truth, Field):
            truth = Field(self.model.input_basis, truth)
        result = eki.run(
            self.subspace_, self.model, y, gamma, rule,
            RandomStream(self.random_state, "perturbation"),
            truth=truth, perturb=self.perturb,
            stop_on_discrepancy=self.stop_on_discrepancy,
        )
        self.result_ = result
        self.coef_ = np.array(result.estimate.coeffs)
        state = result.final_state
        self.ensemble_ = state.U.T.copy()
        self.subspace_coef_ = state.weights.mean(axis=1)
        self.n_iter_ = state.iteration
        self.converged_ = result.converged
        self.history_ = result.history
        return self

    def predict(self, X=None):
        """Forward responses of the rows of ``X``, or of the estimate if omitted."""
        check_is_fitted(self, "coef_")
        if X is None:
            X = self.coef_[None, :]
        return self._forward_rows(X)


class SubspaceLeastSquares(_SubspaceMixin, BaseEstimator):
    """Least squares over the span of the rows of ``X``.

    With ``prior`` the Tikhonov functional is minimized; otherwise the
    iteration stops by the discrepancy principle.
    """

    def __init__(self, model, noise_std=1.0, prior=None, tau=1.1, noise_level=None,
                 max_iter=50, initial_damping=1e-3, fd_step=1e-6):
        self.model = model
        self.noise_std = noise_std
        self.prior = prior
        self.tau = tau
        self.noise_level = noise_level
        self.max_iter = max_iter
        self.initial_damping = initial_damping
        self.fd_step = fd_step

    def fit(self, X, y):
        X = check_ensemble(X, self.model.input_basis.dim)
        y = check_vector(y, self.model.data_size)
        gamma = _noise(self.noise_std, y.size)
        level = np.sqrt(y.size) if self.noise_level is None else self.noise_level
        rule = None if self.prior is not None else eki.StoppingRule(self.tau, level, self.max_iter)
        settings = LsSettings(
            max_iterations=self.max_iter,
            initial_damping=self.initial_damping,
            fd_step=self.fd_step,
            stopping=rule,
        )
        self.subspace_ = Subspace(self.model.input_basis, X.T)
        res = subspace_ls(self.model, self.subspace_, y, gamma, settings, prior=self.prior)
        self.coef_ = np.array(res.field.coeffs)
        self.subspace_coef_ = res.coeffs
        self.misfit_ = res.misfit
        self.n_iter_ = res.iterations
        self.converged_ = res.converged
        return self

    def predict(self, X=None):
        check_is_fitted(self, "coef_")
        if X is None:
            X = self.coef_[None, :]
        return self._forward_rows(X)


class BestApproximation(_SubspaceMixin, BaseEstimator):
    """L2 projection of a known truth ``y`` onto the span of the rows of ``X``.

    Parameters
    ----------
    basis : Basis, optional
        Orthonormal basis of the coefficients. Any orthonormal basis gives the
        same projection, so by default a sine basis of matching size is used.
    """

    def __init__(self, basis=None):
        self.basis = basis

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        basis = Basis.sine(X.shape[1]) if self.basis is None else self.basis
        X = check_ensemble(X, basis.dim)
        y = check_vector(y, basis.dim, "truth")
        self.subspace_ = Subspace(basis, X.T)
        ba = best_approximation(self.subspace_, Field(basis, y))
        self.coef_ = np.array(ba.coeffs)
        self.subspace_coef_ = self.subspace_.project_coeffs(y)
        self.residual_ = float(np.linalg.norm(self.coef_ - y))
        return self

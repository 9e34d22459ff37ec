"""Iterative ensemble Kalman inversion with Gaussian random-field priors."""
from .baselines import LsSettings, best_approximation, subspace_ls, tikhonov_linear
from .eki import Diagnostics, EkiState, StoppingRule, analyze, ensemble_stats, estimate, init, predict, run
from .estimators import BestApproximation, EnsembleKalmanInversion, SubspaceLeastSquares
from .field import (
    Basis,
    Field,
    GaussianMeasure,
    Subspace,
    WeightedNorm,
    covariance_darcy,
    covariance_elliptic,
    kl_ensemble,
    project,
    random_ensemble,
    sample_prior,
    weighted_misfit,
)
from .forward import DarcyGrid, DarcyModel, EllipticModel, ForwardModel, ObservationSpec, forward_response
from .numerics import RandomStream

__version__ = "0.1.0"

"""Reference solutions to compare the ensemble estimate against.

* :func:`tikhonov_linear` -- closed-form regularized solution for linear models.
* :func:`subspace_ls` -- least squares over the span of the initial ensemble,
  solved by Levenberg-Marquardt on the member coefficients.
* :func:`best_approximation` -- L2 projection of the truth onto that span.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .eki import StoppingRule
from .errors import LmStalled, NotLinearModel
from .field import Field, GaussianMeasure, Subspace, WeightedNorm, project
from .forward import ForwardModel
from .numerics import spd_solve

__all__ = ["LsResult", "LsSettings", "best_approximation", "subspace_ls", "tikhonov_linear"]

log = logging.getLogger(__name__)

MAX_DAMPING = 1e12


def tikhonov_linear(model: ForwardModel, prior: GaussianMeasure, y, gamma: WeightedNorm) -> Field:
    """``mean + C G^T (G C G^T + gamma)^{-1} (y - G mean)``."""
    if not model.linear:
        raise NotLinearModel(f"{model.name} model is not linear")
    G = model.matrix()
    y = np.asarray(y, dtype=float)
    C = prior.covariance_matrix()
    m = prior.mean.coeffs
    CGt = C @ G.T
    S = G @ CGt
    S = 0.5 * (S + S.T) + gamma.matrix(y.size)
    return Field(prior.basis, m + CGt @ spd_solve(S, y - G @ m))


@dataclass(frozen=True)
class LsSettings:
    max_iterations: int = 50
    initial_damping: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 0.1
    fd_step: float = 1e-6
    stopping: StoppingRule | None = None
    # unregularized mode: keep ||r + J step|| >= rho ||r|| (regularizing LM)
    rho: float = 0.95
    ftol: float = 1e-15
    xtol: float = 1e-12

    def __post_init__(self):
        if self.initial_damping <= 0:
            raise ValueError("damping must be positive")
        if self.fd_step <= 0:
            raise ValueError("fd_step must be positive")
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if self.damping_up <= 1 or not 0 < self.damping_down < 1:
            raise ValueError("damping factors must satisfy down < 1 < up")


@dataclass(eq=False)
class LsResult:
    field: Field
    coeffs: np.ndarray
    misfit: float
    iterations: int
    converged: bool


def subspace_ls(
    model: ForwardModel,
    A: Subspace,
    y,
    gamma: WeightedNorm,
    settings: LsSettings = LsSettings(),
    prior: GaussianMeasure | None = None,
    start=None,
) -> LsResult:
    """Minimize ``||y - G(u)||_gamma^2 (+ ||u - mean||_C^2)`` over ``u`` in ``span(A)``.

    Without ``prior`` the iteration is regularized by stopping early, as soon
    as the misfit meets ``settings.stopping``, and by damping each step so the
    linearized residual keeps at least ``settings.rho`` of the current one.
    With ``prior`` it runs to convergence on the Tikhonov functional.

    The data Jacobian is taken by forward differences in the member
    coefficients; the prior term is linear and differentiated exactly. The
    default starting point is the ensemble mean.
    """
    y = np.asarray(y, dtype=float)
    Psi = A.matrix
    J = A.size
    c = np.full(J, 1.0 / J) if start is None else np.array(start, dtype=float)
    rule = settings.stopping
    regularizing = prior is None and rule is not None and rule.threshold > 0

    if prior is not None:
        prior_jac = prior.inv_sqrt_apply(Psi)
        prior_shift = prior.inv_sqrt_apply(prior.mean.coeffs)

    def data_residual(coeffs):
        return gamma.whiten(model.evaluate(A.combine(coeffs)) - y)

    def full_residual(coeffs, r_data):
        if prior is None:
            return r_data
        return np.concatenate([r_data, prior_jac @ coeffs - prior_shift])

    r_data = data_residual(c)
    r = full_residual(c, r_data)
    cost = r @ r
    mu = settings.initial_damping
    accepted = 0
    converged = False
    it = 0
    for it in range(1, settings.max_iterations + 1):
        if prior is None and rule is not None and rule.satisfied(np.linalg.norm(r_data)):
            converged = True
            it -= 1
            break
        jac = np.empty((r_data.size, J))
        for j in range(J):
            h = settings.fd_step * (1.0 + abs(c[j]))
            cj = c.copy()
            cj[j] += h
            jac[:, j] = (data_residual(cj) - r_data) / h
        if prior is not None:
            jac = np.vstack([jac, prior_jac])
        JtJ = jac.T @ jac
        g = jac.T @ r
        scale = np.maximum(np.diag(JtJ), 1e-12 * max(np.max(np.diag(JtJ)), 1e-300))
        while True:
            step = np.linalg.lstsq(JtJ + mu * np.diag(scale), -g, rcond=None)[0]
            if regularizing and np.linalg.norm(r + jac @ step) < settings.rho * np.linalg.norm(r):
                mu *= settings.damping_up
                continue
            c_new = c + step
            rd_new = data_residual(c_new)
            r_new = full_residual(c_new, rd_new)
            cost_new = r_new @ r_new
            if cost_new < cost:
                break
            mu *= settings.damping_up
            if mu > MAX_DAMPING:
                if accepted == 0:
                    raise LmStalled(f"damping exceeded {MAX_DAMPING:g} without an accepted step")
                log.debug("LM: damping ceiling reached after %d accepted steps", accepted)
                converged = True
                break
        if converged:
            break
        accepted += 1
        small_step = np.linalg.norm(step) <= settings.xtol * (np.linalg.norm(c) + settings.xtol)
        small_gain = cost - cost_new <= settings.ftol * cost
        c, r_data, r, cost = c_new, rd_new, r_new, cost_new
        mu = max(mu * settings.damping_down, 1e-15)
        if small_step or small_gain:
            converged = True
            break
    if prior is None and rule is not None:
        converged = rule.satisfied(np.linalg.norm(r_data))
    return LsResult(A.combine(c), c, float(np.linalg.norm(r_data)), it, bool(converged))


def best_approximation(A: Subspace, truth: Field) -> Field:
    """L2 projection of ``truth`` onto ``span(A)``."""
    coeffs, _ = project(A, truth)
    return A.combine(coeffs)

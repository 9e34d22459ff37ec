import numpy as np
import pytest

from conftest import ConstantModel, IdentityModel
from ekinv.baselines import LsSettings, best_approximation, subspace_ls, tikhonov_linear
from ekinv.eki import StoppingRule
from ekinv.errors import LmStalled, NotLinearModel
from ekinv.field import (
    Basis,
    Field,
    GaussianMeasure,
    Subspace,
    WeightedNorm,
    covariance_darcy,
    covariance_elliptic,
    kl_ensemble,
    random_ensemble,
    sample_prior,
)
from ekinv.forward import DarcyGrid, DarcyModel, EllipticModel
from ekinv.numerics import RandomStream


def unit_prior(n):
    return GaussianMeasure(Field.zeros(Basis.sine(n)), np.ones(n), np.eye(n))


class TestTikhonov:
    @pytest.mark.parametrize("gamma", [0.1, 1.0, 3.0])
    def test_scalar_reduction(self, gamma):
        u = tikhonov_linear(IdentityModel(1), unit_prior(1), [2.0], WeightedNorm.white(gamma))
        assert u.coeffs[0] == pytest.approx(2.0 / (1 + gamma**2), rel=1e-14)

    def test_data_at_prior_mean(self):
        prior = covariance_elliptic(10.0, 16)
        mean = Field(prior.basis, np.linspace(0, 1, 16))
        model = EllipticModel(16)
        u = tikhonov_linear(model, prior.with_mean(mean), model.evaluate(mean), WeightedNorm.white(0.1))
        np.testing.assert_allclose(u.coeffs, mean.coeffs, atol=1e-13)

    def test_per_mode_formula(self):
        K, beta, gamma = 64, 10.0, 0.01
        model = EllipticModel(K)
        y = np.random.default_rng(0).standard_normal(K)
        u = tikhonov_linear(model, covariance_elliptic(beta, K), y, WeightedNorm.white(gamma))
        k = np.arange(1, K + 1.0)
        g, lam = 1 / (1 + k**2), beta / k**2
        np.testing.assert_allclose(u.coeffs, lam * g * y / (lam * g**2 + gamma**2), rtol=1e-10)

    def test_vanishing_noise_limit(self):
        model = EllipticModel(8)
        truth = Field(model.input_basis, np.arange(1.0, 9.0))
        u = tikhonov_linear(model, covariance_elliptic(1.0, 8), model.evaluate(truth), WeightedNorm.white(1e-7))
        np.testing.assert_allclose(u.coeffs, truth.coeffs, rtol=1e-6)

    def test_rejects_nonlinear(self):
        with pytest.raises(NotLinearModel):
            tikhonov_linear(DarcyModel(DarcyGrid(8), 3), covariance_darcy(0.5, 1.3, 3), np.zeros(100), WeightedNorm.white(1.0))


class TestSubspaceLs:
    def test_prior_mode_matches_normal_equations(self):
        K, J = 32, 6
        prior = covariance_elliptic(10.0, K)
        model = EllipticModel(K)
        A = random_ensemble(prior, J, 3)
        y = np.random.default_rng(1).standard_normal(K) * 0.2
        gamma = WeightedNorm.white(0.05)
        res = subspace_ls(model, A, y, gamma, LsSettings(max_iterations=100), prior=prior)
        G, Psi = model.matrix(), A.matrix
        Cinv = np.diag(1 / prior.eigenvalues)
        lhs = Psi.T @ G.T @ G @ Psi / 0.05**2 + Psi.T @ Cinv @ Psi
        c = np.linalg.solve(lhs, Psi.T @ G.T @ y / 0.05**2)
        ref = Psi @ c
        assert np.linalg.norm(res.field.coeffs - ref) <= 1e-6 * np.linalg.norm(ref)
        assert res.converged

    def test_noiseless_exact_fit(self):
        prior = covariance_elliptic(10.0, 16)
        model = EllipticModel(16)
        A = kl_ensemble(prior, 4)
        y = model.evaluate(A.members[0])
        res = subspace_ls(model, A, y, WeightedNorm.white(1.0), LsSettings(max_iterations=200))
        assert res.misfit <= 1e-6

    def test_discrepancy_stop(self):
        prior = covariance_elliptic(10.0, 16)
        model = EllipticModel(16)
        A = kl_ensemble(prior, 6)
        y = model.evaluate(Field(prior.basis, np.eye(16)[0] * 2.0))
        rule = StoppingRule(noise_level=1.0)
        res = subspace_ls(model, A, y, WeightedNorm.white(0.01), LsSettings(stopping=rule, rho=0.5, max_iterations=100))
        assert res.converged and res.misfit <= rule.threshold

    def test_darcy_reduces_misfit(self):
        prior = covariance_darcy(0.5, 1.3, 8)
        model = DarcyModel(DarcyGrid(32), 8)
        truth = sample_prior(prior, RandomStream(0, "truth"))
        gamma = WeightedNorm.white(1.0)
        y = model.evaluate(truth)
        A = random_ensemble(prior, 10, 1)
        start = gamma.norm(y - model.evaluate(A.combine(np.full(10, 0.1))))
        res = subspace_ls(model, A, y, gamma, LsSettings(max_iterations=15))
        assert res.misfit < start

    def test_stalls_on_constant_model(self):
        A = Subspace(Basis.sine(2), np.eye(2))
        with pytest.raises(LmStalled):
            subspace_ls(ConstantModel(2), A, np.zeros(3), WeightedNorm.white(1.0))

    def test_settings_validation(self):
        with pytest.raises(ValueError):
            LsSettings(initial_damping=0.0)
        with pytest.raises(ValueError):
            LsSettings(rho=1.5)


class TestBestApproximation:
    def test_member_of_span(self):
        A = kl_ensemble(covariance_elliptic(10.0, 8), 3)
        truth = A.combine([1.0, -2.0, 0.5])
        np.testing.assert_allclose(best_approximation(A, truth).coeffs, truth.coeffs, atol=1e-13)

    def test_orthonormal_members(self):
        b = Basis.sine(5)
        A = Subspace(b, np.eye(5)[:, :2])
        truth = Field(b, [1.0, 2.0, 3.0, 4.0, 5.0])
        np.testing.assert_allclose(best_approximation(A, truth).coeffs, [1, 2, 0, 0, 0], atol=1e-15)

    def test_optimal_against_random_probes(self, rng):
        b = Basis.sine(20)
        A = Subspace(b, rng.standard_normal((20, 5)))
        truth = Field(b, rng.standard_normal(20))
        err = (best_approximation(A, truth) - truth).norm()
        for _ in range(100):
            probe = A.combine(rng.standard_normal(5))
            assert err <= (probe - truth).norm() + 1e-12

    def test_not_worse_than_other_baselines(self):
        prior = covariance_elliptic(10.0, 32)
        model = EllipticModel(32)
        truth = sample_prior(prior, RandomStream(0))
        A = random_ensemble(prior, 5, 2)
        gamma = WeightedNorm.white(0.01)
        y = model.evaluate(truth)
        ls = subspace_ls(model, A, y, gamma, LsSettings(), prior=prior)
        ba = best_approximation(A, truth)
        assert (ba - truth).norm() <= (ls.field - truth).norm() + 1e-12

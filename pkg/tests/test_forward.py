import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ekinv.errors import BasisMismatch, NotLinearModel, PointOutsideDomain
from ekinv.field import Basis, Field, covariance_darcy, sample_prior
from ekinv.forward import (
    DarcyGrid,
    DarcyModel,
    EllipticModel,
    ObservationSpec,
    darcy_assemble,
    darcy_solve,
    elliptic_apply,
    forward_response,
    observe,
    recharge_source,
    well_lattice,
)
from ekinv.numerics import RandomStream

coeff_arrays = arrays(float, 16, elements=st.floats(-1e3, 1e3))


class TestElliptic:
    def test_single_modes(self):
        b = Basis.sine(4)
        np.testing.assert_allclose(elliptic_apply(Field(b, [1, 0, 0, 0])).coeffs, [0.5, 0, 0, 0])
        np.testing.assert_allclose(elliptic_apply(Field(b, [0, 1, 0, 0])).coeffs, [0, 0.2, 0, 0])

    def test_solves_ode_pointwise(self):
        # -w'' + w = u with u = sin(3x): w = sin(3x) / 10
        b = Basis.sine(5)
        u = Field(b, np.eye(5)[2] / np.sqrt(2 / np.pi))
        x = np.linspace(0.1, 3.0, 7)
        w = b.evaluate(x) @ elliptic_apply(u).coeffs
        np.testing.assert_allclose(w, np.sin(3 * x) / 10, rtol=1e-13)

    @settings(max_examples=40)
    @given(coeff_arrays, coeff_arrays, st.floats(-10, 10))
    def test_linear(self, a, b, s):
        basis = Basis.sine(16)
        u, v = Field(basis, a), Field(basis, b)
        lhs = elliptic_apply(u + s * v).coeffs
        rhs = elliptic_apply(u).coeffs + s * elliptic_apply(v).coeffs
        np.testing.assert_allclose(lhs, rhs, atol=1e-9 * (1 + np.abs(a).max() + abs(s) * np.abs(b).max()))

    @settings(max_examples=40)
    @given(coeff_arrays)
    def test_contraction(self, a):
        u = Field(Basis.sine(16), a)
        assert elliptic_apply(u).norm() <= 0.5 * u.norm() + 1e-12

    def test_wrong_basis(self):
        with pytest.raises(BasisMismatch):
            elliptic_apply(Field.zeros(Basis.cosine(3)))

    def test_model_matrix_and_batch(self, rng):
        model = EllipticModel(8)
        U = rng.standard_normal((8, 5))
        np.testing.assert_allclose(model.evaluate_many(U), model.matrix() @ U, rtol=1e-15)
        np.testing.assert_allclose(model.evaluate(Field(model.input_basis, U[:, 0])), model.matrix() @ U[:, 0])
        assert forward_response(model, Field.zeros(model.input_basis)).tolist() == [0.0] * 8


def manufactured(m):
    a = np.pi / 6.0
    grid = DarcyGrid(m)
    pts = grid.cell_points()
    x, y = pts[:, 0], pts[:, 1]
    logk = 0.2 * x + 0.1 * y
    h = np.sin(a * x) * np.cos(a * y) + 1.0
    hx = a * np.cos(a * x) * np.cos(a * y)
    hy = -a * np.sin(a * x) * np.sin(a * y)
    f = -np.exp(logk) * (-2 * a * a * (h - 1.0) + 0.2 * hx + 0.1 * hy)

    def g(xb, yb):
        return np.sin(a * xb) * np.cos(a * yb) + 1.0

    num = darcy_solve(logk, grid, source=f, dirichlet=g).coeffs
    return np.max(np.abs(num - h))


class TestDarcySolver:
    def test_manufactured_second_order(self):
        e1, e2 = manufactured(32), manufactured(64)
        assert np.log2(e1 / e2) >= 1.8

    def test_flux_balance(self):
        grid = DarcyGrid(32)
        logk = sample_prior(covariance_darcy(0.5, 1.3, 8), RandomStream(2)).coeffs
        model = DarcyModel(grid, 8)
        lk = model.log_conductivity(Field(model.input_basis, logk))
        h = darcy_solve(lk, grid).coeffs.reshape(32, 32)
        kc = np.exp(lk).reshape(32, 32)
        outflow = np.sum(2 * kc[0, :] * (h[0, :] - 100.0))
        inflow = 500.0 * 6.0 + np.sum(recharge_source(grid.cell_points()[:, 1])) * grid.delta**2
        assert inflow == pytest.approx(500 * 6 + 137 * 6 + 274 * 6, rel=1e-12)
        assert outflow == pytest.approx(inflow, rel=1e-10)

    def test_mirror_symmetry(self):
        grid = DarcyGrid(24)
        pts = grid.cell_points()
        x, y = pts[:, 0], pts[:, 1]
        logk = np.cos(np.pi * x / 6.0) ** 2 + 0.3 * y
        src = np.sin(np.pi * x / 6.0)
        h = darcy_solve(logk, grid, source=src, dirichlet=lambda xb, yb: 1.0 + yb).coeffs.reshape(24, 24)
        np.testing.assert_allclose(h, h[:, ::-1], atol=1e-10 * np.abs(h).max())

    def test_matrix_spd(self, rng):
        grid = DarcyGrid(16)
        A, _ = darcy_assemble(rng.uniform(-2, 2, 256), grid)
        dense = A.toarray()
        np.testing.assert_allclose(dense, dense.T, atol=1e-12 * np.abs(dense).max())
        scipy.linalg.cholesky(dense)

    def test_conductivity_scaling(self):
        grid = DarcyGrid(16)
        h1 = darcy_solve(np.full(256, 4.0), grid).coeffs
        h2 = darcy_solve(np.full(256, 4.0 + np.log(10.0)), grid).coeffs
        assert np.all(h1 > 100.0)
        np.testing.assert_allclose(h2 - 100.0, (h1 - 100.0) / 10.0, rtol=1e-9)

    def test_grid_too_small(self):
        with pytest.raises(ValueError):
            DarcyGrid(4)

    def test_source_levels(self):
        np.testing.assert_array_equal(recharge_source([0.0, 4.0, 4.5, 5.0, 6.0]), [0, 0, 137, 274, 274])


class TestObserve:
    def test_all_coefficients(self):
        u = Field(Basis.sine(3), [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(observe(u, ObservationSpec.all_coefficients(3)), [1, 2, 3])

    def test_point_at_cell_centre(self):
        grid = DarcyGrid(8)
        vals = np.arange(64.0)
        u = Field(grid.basis, vals)
        pt = grid.cell_points()[19]
        assert observe(u, ObservationSpec.point_values([pt]))[0] == pytest.approx(19.0)

    def test_linear_field_reproduced(self):
        grid = DarcyGrid(10)
        pts = grid.cell_points()
        u = Field(grid.basis, 2 * pts[:, 0] - pts[:, 1])
        obs = np.array([[1.0, 2.0], [3.3, 4.4], [5.0, 0.5]])
        np.testing.assert_allclose(observe(u, ObservationSpec.point_values(obs)), 2 * obs[:, 0] - obs[:, 1], atol=1e-12)

    def test_constant_near_edges(self):
        grid = DarcyGrid(8)
        u = Field(grid.basis, np.full(64, 7.0))
        obs = np.array([[0.0, 0.0], [6.0, 6.0], [0.1, 5.95]])
        np.testing.assert_allclose(observe(u, ObservationSpec.point_values(obs)), 7.0)

    def test_outside(self):
        grid = DarcyGrid(8)
        with pytest.raises(PointOutsideDomain):
            observe(Field.zeros(grid.basis), ObservationSpec.point_values([[6.5, 1.0]]))

    def test_spectral_points(self):
        b = Basis.cosine(3)
        u = Field(b, np.ones(8))
        pts = np.array([[1.0, 2.0]])
        assert observe(u, ObservationSpec.point_values(pts))[0] == pytest.approx(b.evaluate(pts).sum())

    def test_well_lattice(self):
        w = well_lattice()
        assert w.shape == (100, 2)
        np.testing.assert_allclose(w[0], [0.3, 0.3])
        np.testing.assert_allclose(w[-1], [5.7, 5.7])


class TestDarcyModel:
    def test_deterministic(self):
        model = DarcyModel(DarcyGrid(16), 6)
        u = sample_prior(covariance_darcy(0.5, 1.3, 6), RandomStream(0))
        np.testing.assert_array_equal(model.evaluate(u), model.evaluate(u))
        assert model.evaluate(u).shape == (100,)

    def test_mean_offset(self):
        model = DarcyModel(DarcyGrid(16), 6, mean=4.0)
        np.testing.assert_allclose(model.log_conductivity(Field.zeros(model.input_basis)), 4.0)

    def test_threads_agree(self, monkeypatch):
        model = DarcyModel(DarcyGrid(16), 6)
        U = np.random.default_rng(0).standard_normal((35, 4)) * 0.3
        serial = model.evaluate_many(U)
        monkeypatch.setenv("EKI_THREADS", "3")
        np.testing.assert_array_equal(model.evaluate_many(U), serial)

    def test_not_linear(self):
        with pytest.raises(NotLinearModel):
            DarcyModel(DarcyGrid(8), 4).matrix()

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ekinv.errors import DimensionMismatch, NonSymmetric, NotSPD
from ekinv.numerics import RandomStream, derive_seed, gaussian_draws, spd_solve, sym_eigen


def random_spd(rng, n):
    m = rng.standard_normal((n, n))
    return m @ m.T + n * np.eye(n)


class TestSpdSolve:
    def test_identity(self):
        b = np.array([1.0, 2.0, 3.0])
        np.testing.assert_array_equal(spd_solve(np.eye(3), b), b)

    def test_diagonal(self):
        x = spd_solve(np.diag([2.0, 4.0]), np.array([2.0, 2.0]))
        np.testing.assert_allclose(x, [1.0, 0.5], rtol=1e-15)

    def test_random_residual(self, rng):
        for n in (5, 40, 200):
            a = random_spd(rng, n)
            b = rng.standard_normal((n, 3))
            x = spd_solve(a, b)
            assert np.linalg.norm(a @ x - b) <= 1e-10 * np.linalg.norm(b)

    def test_matches_dense_solve(self, rng):
        a = random_spd(rng, 12)
        b = rng.standard_normal(12)
        np.testing.assert_allclose(spd_solve(a, b), np.linalg.solve(a, b), rtol=1e-10)

    def test_singular_psd_rescued_by_jitter(self):
        v = np.array([1.0, 1.0])
        a = np.outer(v, v)
        x = spd_solve(a, v)
        assert np.all(np.isfinite(x))
        # (vv^T + d I) x = v gives x = v / (2 + d)
        np.testing.assert_allclose(x, v / 2.0, rtol=1e-9)

    def test_indefinite_raises(self):
        with pytest.raises(NotSPD):
            spd_solve(np.diag([1.0, -1.0]), np.ones(2))

    def test_nonsymmetric_raises(self):
        with pytest.raises(NonSymmetric):
            spd_solve(np.array([[2.0, 1.0], [0.0, 2.0]]), np.ones(2))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            spd_solve(np.eye(3), np.ones(4))


class TestSymEigen:
    def test_diagonal_sorted(self):
        vals, vecs = sym_eigen(np.diag([1.0, 3.0, 2.0]))
        np.testing.assert_allclose(vals, [3.0, 2.0, 1.0])
        np.testing.assert_allclose(np.abs(vecs), np.eye(3)[:, [1, 2, 0]])

    def test_identity(self):
        vals, vecs = sym_eigen(np.eye(4))
        np.testing.assert_allclose(vals, np.ones(4))
        np.testing.assert_allclose(vecs.T @ vecs, np.eye(4), atol=1e-14)

    def test_reconstruction(self, rng):
        a = rng.standard_normal((8, 8))
        a = a + a.T
        vals, vecs = sym_eigen(a)
        assert np.all(np.diff(vals) <= 0)
        np.testing.assert_allclose(vecs @ np.diag(vals) @ vecs.T, a, atol=1e-12)
        np.testing.assert_allclose(vecs.T @ vecs, np.eye(8), atol=1e-12)

    def test_nonsymmetric(self):
        with pytest.raises(NonSymmetric):
            sym_eigen(np.array([[1.0, 2.0], [0.0, 1.0]]))


class TestStreams:
    def test_deterministic(self):
        s = RandomStream(7, "eta", 3, 2)
        np.testing.assert_array_equal(gaussian_draws(s, 50), gaussian_draws(s, 50))

    def test_keys_separate(self):
        base = gaussian_draws(RandomStream(7, "eta", 0, 0), 20)
        for other in (RandomStream(8, "eta", 0, 0), RandomStream(7, "truth", 0, 0),
                      RandomStream(7, "eta", 1, 0), RandomStream(7, "eta", 0, 1)):
            assert not np.allclose(base, gaussian_draws(other, 20))

    def test_moments(self):
        z = gaussian_draws(RandomStream(1, "moments"), 100_000)
        assert abs(z.mean()) < 0.02
        assert abs(z.var() - 1.0) < 0.03

    def test_cross_correlation(self):
        a = gaussian_draws(RandomStream(1, "x", member=0), 20_000)
        b = gaussian_draws(RandomStream(1, "x", member=1), 20_000)
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.05

    def test_child_overrides(self):
        s = RandomStream(5, "a", 1, 2).child(member=4)
        assert (s.seed, s.purpose, s.member, s.iteration) == (5, "a", 4, 2)

    def test_negative_index(self):
        with pytest.raises(ValueError):
            RandomStream(0, "a", member=-1)

    def test_derive_seed(self):
        assert derive_seed(0, "truth") == derive_seed(0, "truth")
        assert derive_seed(0, "truth", 0) != derive_seed(0, "truth", 1)
        assert derive_seed(0, "truth") != derive_seed(0, "noise")
        assert 0 <= derive_seed(3, "x") < 2**64

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**63), st.text(max_size=8), st.integers(0, 1000), st.integers(0, 1000))
    def test_reproducible_any_key(self, seed, purpose, member, iteration):
        s = RandomStream(seed, purpose, member, iteration)
        np.testing.assert_array_equal(gaussian_draws(s, 4), gaussian_draws(s.child(), 4))

import jax.numpy as jnp
import numpy as np
from django.test import SimpleTestCase

from core import calculus
from core.bases import build_basis
from core.exceptions import RankMismatchError
from core.fields import SCALAR, SYM2, VECTOR, Grid, Quadrature, TensorField, resample, sample
from core.model_spaces import make_gaussian


class GridOperatorTests(SimpleTestCase):
    def setUp(self):
        self.model = make_gaussian(2)
        self.grid = Grid.box(2, 3.0, 13)

    def test_gradient_of_quadratic_is_exact(self):
        u = resample(TensorField.closed_form(SCALAR, self.model.chart, lambda x: x[0] ** 2 + x[0] * x[1]), self.grid)
        grad = calculus.gradient(u)
        nodes = self.grid.nodes()
        expected = np.stack([2.0 * nodes[:, 0] + nodes[:, 1], nodes[:, 0]], axis=-1)
        np.testing.assert_allclose(grad.values.reshape(-1, 2), expected, atol=1e-10)

    def test_grid_drift_laplacian_matches_closed_form(self):
        v = TensorField.closed_form(SCALAR, self.model.chart, lambda x: x[0] ** 2 - 2.0)
        on_grid = calculus.drift_laplacian(resample(v, self.grid)).values.ravel()
        np.testing.assert_allclose(on_grid, -(self.grid.nodes()[:, 0] ** 2 - 2.0), atol=1e-9)

    def test_rank_is_checked(self):
        u = TensorField.on_grid(SCALAR, self.model.chart, self.grid, np.zeros(self.grid.shape))
        with self.assertRaises(RankMismatchError):
            calculus.divf_sym2(u)


class WeightedPairingTests(SimpleTestCase):
    def setUp(self):
        self.model = make_gaussian(2)
        self.q = self.model.weighted_quadrature(6)

    def test_drift_laplacian_eigenfunction(self):
        v = TensorField.closed_form(SCALAR, self.model.chart, lambda x: x[0] * x[1])
        drift = calculus.drift_laplacian(v)
        np.testing.assert_allclose(drift.sample(self.q), -v.sample(self.q), atol=1e-10)

    def test_norm_of_constant_is_mass(self):
        one = TensorField.closed_form(SCALAR, self.model.chart, lambda x: 1.0 + 0.0 * x[0])
        self.assertAlmostEqual(calculus.weighted_norm(one, self.q) ** 2, self.q.total_mass(), places=10)
        self.assertAlmostEqual(calculus.sobolev_norm(one, self.q, 0), calculus.weighted_norm(one, self.q), places=12)
        self.assertAlmostEqual(calculus.sobolev_norm(one, self.q, 1), calculus.weighted_norm(one, self.q), places=10)

    def test_divf_star_is_adjoint_of_divf(self):
        rng = np.random.default_rng(0)
        sym = build_basis(self.model, SYM2, 2)
        vec = build_basis(self.model, VECTOR, 2)
        h = sym.field(rng.standard_normal(sym.size))
        y = vec.field(rng.standard_normal(vec.size))
        self.assertLess(calculus.adjointness_gap(h, y, self.q), 1e-10)

    def test_concentration_inequality(self):
        v = TensorField.closed_form(SCALAR, self.model.chart, lambda x: x[0] ** 2 - 2.0)
        lhs, rhs = calculus.concentration(v, self.q)
        self.assertLessEqual(lhs, rhs + 1e-10)

    def test_gradient_is_orthogonal_to_divergence_free_field(self):
        rotation = TensorField.closed_form(VECTOR, self.model.chart, lambda x: jnp.stack([x[1], -x[0]]))
        u = TensorField.closed_form(SCALAR, self.model.chart, lambda x: x[0] ** 2 + x[1])
        self.assertLess(abs(calculus.splitting_pairing(u, rotation, self.q)), 1e-10)

    def test_grid_quadrature_agrees_with_gauss_hermite(self):
        v = TensorField.closed_form(SCALAR, self.model.chart, lambda x: x[0] ** 2)
        grid_q = Quadrature.on_grid(Grid.box(2, 10.0, 41), self.model.chart)
        on_grid = grid_q.integrate(sample(v.function, grid_q.nodes))
        self.assertAlmostEqual(on_grid, self.q.integrate(v.sample(self.q)), places=8)

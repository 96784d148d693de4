import jax.numpy as jnp
import numpy as np
from django.test import SimpleTestCase

from core.bases import CONFORMAL_BLOCK, EUCLIDEAN_BLOCK, build_basis, multi_indices
from core.calculus import geometry
from core.convergence import fit_power, richardson
from core.exceptions import ChartError, FitError, ModelError, NotAnEigenfieldError, RankMismatchError
from core.fields import SCALAR, SYM2, VECTOR, TensorField, sample
from core.model_spaces import make_cylinder, make_gaussian
from core.spectral import (
    DRIFT,
    L,
    P,
    assemble,
    block_coupling,
    check_mu_lambda,
    clusters,
    conformal_perturbation,
    eigenfield_growth,
    eigenpairs,
    interpolation_checks,
    killing_growth,
    poisson_growth,
    relation_gaps,
    solve_P,
    spectral_gap_probe,
    z_decompose,
)
from core.suites import expected_block_spectrum


class BasisTests(SimpleTestCase):
    def test_multi_indices_by_degree(self):
        self.assertEqual(multi_indices(2, 1), [(0, 0), (1, 0), (0, 1)])

    def test_orthonormal(self):
        basis = build_basis(make_gaussian(2), SCALAR, 3)
        nodes = basis.orthonormal_nodes()
        w = basis.quadrature.weights
        np.testing.assert_allclose(np.einsum("na,nb,n->ab", nodes, nodes, w), np.eye(basis.size), atol=1e-10)
        self.assertLess(basis.gram_drift, 1e-8)

    def test_projection_reproduces_span(self):
        model = make_gaussian(2)
        basis = build_basis(model, SCALAR, 2)
        v = TensorField.closed_form(SCALAR, model.chart, lambda x: x[0] * x[1] + 3.0)
        self.assertLess(basis.projection_residual(v), 1e-5)


class DriftSpectrumTests(SimpleTestCase):
    def test_gaussian_scalar_spectrum(self):
        operator = assemble(build_basis(make_gaussian(1), SCALAR, 4), DRIFT)
        values = [pair.eigenvalue for pair in eigenpairs(operator)]
        np.testing.assert_allclose(values, [0.0, 0.5, 1.0, 1.5, 2.0], atol=1e-9)
        self.assertLess(operator.symmetry_gap, 1e-9)

    def test_p_needs_vectors(self):
        with self.assertRaises(RankMismatchError):
            assemble(build_basis(make_gaussian(1), SCALAR, 2), P)

    def test_clusters(self):
        self.assertEqual(clusters([0.0, 0.5, 0.5 + 1e-9, 1.0]), [[0], [1, 2], [3]])

    def test_cylinder_half_multiplicity(self):
        model = make_cylinder(2, 3)
        probe = spectral_gap_probe(model, 0.0, degree=2, sphere_degree=2)
        self.assertEqual(probe.half_multiplicity, model.m)
        self.assertAlmostEqual(probe.eigenvalues[0], 0.0, places=9)

    def test_cylinder_sym2_blocks(self):
        model = make_cylinder(2, 3)
        basis = build_basis(model, SYM2, 1, sphere_degree=1)
        self.assertLess(basis.gram_drift, 1e-8)
        self.assertLess(assemble(basis, L).symmetry_gap, 1e-8)
        self.assertLess(block_coupling(model, L, 1, 1), 1e-8)

        conformal = assemble(build_basis(model, SYM2, 1, sphere_degree=1, block=CONFORMAL_BLOCK), L)
        values = np.sort(conformal.sign * np.linalg.eigvalsh(conformal.symmetric()))
        # v g^1 with v a first sphere harmonic spans the kernel
        np.testing.assert_allclose(values, [-1.0, -0.5, 0.0, 0.0, 0.0, 0.5, 0.5, 0.5], atol=1e-8)
        for block in (CONFORMAL_BLOCK, EUCLIDEAN_BLOCK):
            with self.subTest(block=block):
                part = assemble(build_basis(model, SYM2, 1, sphere_degree=1, block=block), DRIFT)
                computed = np.sort(part.sign * np.linalg.eigvalsh(part.symmetric()))
                np.testing.assert_allclose(computed, expected_block_spectrum(model, DRIFT, block, 1, 1), atol=1e-8)

    def test_sym2_block_arguments(self):
        with self.assertRaises(ModelError):
            build_basis(make_gaussian(2), SYM2, 1, block=EUCLIDEAN_BLOCK)
        with self.assertRaises(ModelError):
            build_basis(make_cylinder(2, 3), SYM2, 1, sphere_degree=1, block="trace")
        with self.assertRaises(RankMismatchError):
            build_basis(make_cylinder(2, 3), VECTOR, 1, sphere_degree=1, block=EUCLIDEAN_BLOCK)

    def test_perturbed_cylinder_spectrum(self):
        model = make_cylinder(2, 3)
        gap = spectral_gap_probe(model, 1e-2, degree=2, sphere_degree=2)
        self.assertEqual(gap.amplitude, 1e-2)
        self.assertAlmostEqual(gap.eigenvalues[0], 0.0, places=9)
        self.assertLess(max(abs(d) for d in gap.drift), 0.1)
        with self.assertRaises(ChartError):
            spectral_gap_probe(model, -5.0, degree=1, sphere_degree=1)

    def test_conformal_perturbation_is_a_multiple_of_the_metric(self):
        model = make_cylinder(2, 3)
        points = model.sample_points()
        values = sample(conformal_perturbation(model, seed=4).function, points)
        metric = sample(model.chart.metric_eval, points)
        scale = values[:, 2, 2] / metric[:, 2, 2]
        np.testing.assert_allclose(values, scale[:, None, None] * metric, atol=1e-12)
        self.assertTrue(np.all(np.abs(scale) <= 1.0))


class PoissonTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.model = make_gaussian(2)
        cls.basis = build_basis(cls.model, VECTOR, 2)

    def test_kernel_is_killing(self):
        values = np.linalg.eigvalsh(assemble(self.basis, P).symmetric())
        self.assertEqual(int((values < 1e-8).sum()), 3)
        self.assertGreaterEqual(values[values >= 1e-8].min(), 0.25 - 1e-8)

    def test_mu_lambda(self):
        report = check_mu_lambda(self.basis)
        self.assertLessEqual(report.max_gap, 0.5 + 1e-8)
        self.assertEqual(report.violations, 0)
        self.assertEqual(report.inconsistencies, 0)

    def test_pure_gauge_recovers_generator(self):
        rng = np.random.default_rng(1)
        coeffs = rng.standard_normal(self.basis.size)
        star = geometry(self.model.chart).divf_star(self.basis.combine(coeffs))
        h = TensorField.closed_form(SYM2, self.model.chart, lambda x: -2.0 * star(x))
        solution = solve_P(h, self.basis)
        self.assertLess(solution.relative_residual, 1e-8)
        self.assertLess(solution.killing_pairing, 1e-8)

        values, vectors = np.linalg.eigh(assemble(self.basis, P).symmetric())
        kernel = vectors[:, values < 1e-8]
        target = -(coeffs - kernel @ (kernel.T @ coeffs))
        np.testing.assert_allclose(solution.Y.coeffs, target, atol=1e-8)

    def test_rank_checks(self):
        v = TensorField.closed_form(VECTOR, self.model.chart, lambda x: x)
        with self.assertRaises(RankMismatchError):
            solve_P(v, self.basis)

    def test_relations(self):
        for name, gap in relation_gaps(self.basis).items():
            with self.subTest(relation=name):
                self.assertLess(gap, 1e-6)
        scalars = build_basis(self.model, SCALAR, 2)
        self.assertLess(relation_gaps(scalars)["P_grad"], 1e-6)

    def test_interpolation_inequality(self):
        rows = interpolation_checks(self.basis)
        self.assertEqual(rows.shape, (self.basis.size, 2))
        self.assertTrue(np.all(rows[:, 0] <= rows[:, 1] + 1e-10))

    def test_poisson_growth_of_a_linear_generator(self):
        star = geometry(self.model.chart).divf_star(lambda x: jnp.stack([x[0], 0.0 * x[1]]))
        h = TensorField.closed_form(SYM2, self.model.chart, lambda x: -2.0 * star(x))
        profile = poisson_growth(solve_P(h, self.basis), self.model)
        # grad div_f Y = (x1, 0)
        self.assertAlmostEqual(profile.slope, 2.0, places=6)
        self.assertAlmostEqual(profile.bound, 0.4)
        self.assertFalse(profile.within(0.05))


class GrowthTests(SimpleTestCase):
    def test_killing_growth_exponents(self):
        profiles = {p.label: p for p in killing_growth(make_gaussian(2))}
        self.assertAlmostEqual(profiles["d1"].slope, 0.0, places=6)
        self.assertAlmostEqual(profiles["rot12"].slope, 2.0, places=6)
        self.assertTrue(all(p.within(0.05) for p in profiles.values()))

    def test_translation_splits_into_gradient_part(self):
        model = make_gaussian(2)
        q = model.weighted_quadrature(4)
        Y = TensorField.closed_form(VECTOR, model.chart, lambda x: jnp.array([1.0, 0.0]) + 0.0 * x)
        split = z_decompose(Y, 0.0, q)
        self.assertLess(split.eigen_residual, 1e-12)
        self.assertLess(split.divf_Z, 1e-12)
        self.assertLess(split.pythagoras_gap, 1e-9)
        self.assertLess(split.grad_div_relation, 1e-12)
        np.testing.assert_allclose(split.Z.sample(q), 0.0, atol=1e-12)

        grad_div, z = eigenfield_growth(Y, 0.0, model)
        self.assertAlmostEqual(grad_div.slope, 0.0, places=6)
        self.assertTrue(grad_div.within(0.05))
        self.assertTrue(z.vanishing)

    def test_z_needs_an_eigenfield(self):
        model = make_gaussian(2)
        q = model.weighted_quadrature(4)
        Y = TensorField.closed_form(VECTOR, model.chart, lambda x: jnp.stack([x[0] ** 2, 0.0 * x[1]]))
        with self.assertRaises(NotAnEigenfieldError):
            z_decompose(Y, 0.0, q)
        with self.assertRaises(NotAnEigenfieldError):
            z_decompose(Y, -0.5, q)


class ConvergenceTests(SimpleTestCase):
    def test_fit_power(self):
        xs = np.array([1.0, 2.0, 4.0])
        slope, intercept = fit_power(xs, 3.0 * xs**1.5)
        self.assertAlmostEqual(slope, 1.5)
        self.assertAlmostEqual(intercept, np.log(3.0))
        with self.assertRaises(FitError):
            fit_power([1.0], [1.0])
        with self.assertRaises(FitError):
            fit_power([0.0, 1.0], [1.0, 2.0])

    def test_richardson_second_order(self):
        steps = [0.1, 0.05, 0.025]
        result = richardson([s**2 for s in steps], steps)
        self.assertAlmostEqual(result.order, 2.0, places=8)
        self.assertTrue(result.monotone)
        self.assertFalse(result.floor_reached)

    def test_richardson_flags_floor(self):
        self.assertTrue(richardson([1e-12, 1e-12, 1e-12]).floor_reached)
        self.assertTrue(np.isnan(richardson([0.0, 0.0]).order))

    def test_richardson_exact_zero_before_finest(self):
        for residuals in ([0.0, 1e-17], [0.0, 1e-17, 1e-17], [1e-6, 0.0, 1e-17]):
            with self.subTest(residuals=residuals):
                result = richardson(residuals)
                self.assertTrue(np.isnan(result.order))
                self.assertTrue(result.floor_reached)
        self.assertEqual(richardson([1e-6, 0.0]).order, np.inf)

import math

import jax.numpy as jnp
import numpy as np
from django.test import SimpleTestCase

from core.exceptions import ModelError, SmallnessError
from core.fields import SCALAR, TensorField
from core.model_spaces import k_basis, make_cylinder, make_gaussian
from core.variation import (
    GENERAL,
    SOLITON,
    PerturbationPath,
    center_of_mass,
    first_variation_gap,
    jacobi_approx_probe,
    jacobi_decompose,
    jacobi_field_defects,
    jacobi_orthogonality,
    jacobi_tensor,
    k_constant_sample,
    kfield_identities,
    moment_bound,
    nonintegrability_pairing,
    parse_direction,
    phi_of_t,
    phi_second_variation,
    project_K,
    second_variation_gap,
    stability_probe,
)


class FirstVariationTests(SimpleTestCase):
    def test_block_direction_on_gaussian(self):
        model = make_gaussian(2)
        path = PerturbationPath.block(model.chart, 0, 1, amplitude=0.3)
        for formula in (GENERAL, SOLITON):
            with self.subTest(formula=formula):
                result = first_variation_gap(path, [0.4, -0.7], formula=formula)
                self.assertLess(result.gap, 1e-8)
                self.assertAlmostEqual(result.formula_norm, 0.15, places=10)

    def test_jacobi_direction_on_cylinder(self):
        model = make_cylinder(2, 3)
        path = parse_direction(model, "jacobi:x1^2-2", amplitude=0.5)
        x = [0.2, -0.1, 0.8]
        general = first_variation_gap(path, x, formula=GENERAL)
        soliton = first_variation_gap(path, x, formula=SOLITON)
        self.assertLess(general.gap, 1e-5)
        self.assertLess(soliton.gap, 1e-5)

    def test_phi_along_a_constant_block(self):
        path = PerturbationPath.block(make_gaussian(2).chart, 0, 1, amplitude=0.3)
        x = [0.4, -0.7]
        np.testing.assert_allclose(phi_of_t(path, 0.0, x), 0.0, atol=1e-10)
        np.testing.assert_allclose(phi_of_t(path, 1.0, x), [[0.0, 0.15], [0.15, 0.0]], atol=1e-10)

    def test_unknown_formula(self):
        path = PerturbationPath.block(make_gaussian(2).chart, 0, 0)
        with self.assertRaises(ValueError):
            first_variation_gap(path, [0.0, 0.0], formula="other")


class DirectionParsingTests(SimpleTestCase):
    def test_errors(self):
        gaussian = make_gaussian(2)
        for text in ("bogus", "block:dx3dx1", "gauge:x1^2-2", "gauge:W=grad(x9^2-2)"):
            with self.subTest(text=text), self.assertRaises(ModelError):
                parse_direction(gaussian, text)
        with self.assertRaises(ModelError):
            parse_direction(gaussian, "jacobi:x1^2-2")

    def test_labels(self):
        path = parse_direction(make_gaussian(2), "block:dx1dx2")
        self.assertEqual(path.label, "block:dx1dx2")
        np.testing.assert_allclose(path.h(jnp.zeros(2)), [[0.0, 1.0], [1.0, 0.0]])


class KernelTests(SimpleTestCase):
    def test_k_field_identities(self):
        report = kfield_identities(2, [1.0, 0.5, -0.3])
        for name, gap in report.gaps.items():
            self.assertLess(gap, 1e-8, name)
        self.assertGreater(report.constant, 0.0)

    def test_projection_onto_k(self):
        model = make_gaussian(2)
        v = k_basis(2).field(model.chart, [0.0, 0.0, 1.0])
        projection = project_K(model, v)
        np.testing.assert_allclose(projection.coefficients, [0.0, 0.0, 1.0], atol=1e-10)
        self.assertLess(projection.remainder, 1e-5)
        self.assertLess(projection.idempotence, 1e-10)

    def test_center_of_mass(self):
        model = make_gaussian(2)
        q = model.weighted_quadrature(4)
        k = TensorField.closed_form(SCALAR, model.chart, lambda x: x[0])
        center = center_of_mass(model, None, k, q)
        np.testing.assert_allclose(center.vector, [8.0 * math.pi, 0.0], atol=1e-9)
        np.testing.assert_allclose(center.balancing_translation(), [-2.0, 0.0], atol=1e-12)

    def test_moment_bound(self):
        result = moment_bound(2, lambda x: 1.0 + 0.0 * x[0], p=1.0, q_exp=0.0, epsilon=0.25)
        self.assertTrue(result.holds)
        with self.assertRaises(ValueError):
            moment_bound(2, lambda x: 1.0 + 0.0 * x[0], p=1.0, q_exp=0.0, epsilon=0.7)


class CylinderTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.model = make_cylinder(2, 3)

    def test_jacobi_fields_are_in_the_kernel(self):
        defects = jacobi_field_defects(self.model, [1.0])
        self.assertLess(defects["divf"], 1e-8)
        self.assertLess(defects["L"], 1e-8)

    def test_decomposition(self):
        v = k_basis(1).on(self.model).element(0)
        h = jacobi_tensor(self.model, v)
        parts = jacobi_decompose(self.model, h)
        self.assertLess(parts.reconstruction_error, 1e-12)
        self.assertLess(parts.trace_free_defect, 1e-12)

    def test_stability_needs_small_data(self):
        v = k_basis(1).on(self.model).element(0)
        h = jacobi_tensor(self.model, v)
        k = TensorField.closed_form(SCALAR, self.model.chart, lambda x: v(x))
        with self.assertRaises(SmallnessError):
            stability_probe(self.model, h, k)

    def test_second_variation_along_a_jacobi_direction(self):
        u = k_basis(1).on(self.model).element(0)
        gap = second_variation_gap(self.model, u, [0.2, -0.1, 0.8])
        self.assertLess(gap.gap, 1e-5)
        spot = np.asarray(phi_second_variation(self.model.geometry, 2, u)(jnp.zeros(3)))
        np.testing.assert_allclose(spot, np.diag([0.0, 0.0, 8.0]), atol=1e-10)

    def test_second_variation_needs_euclidean_directions(self):
        with self.assertRaises(ModelError):
            second_variation_gap(self.model, lambda x: x[0] * x[2], [0.2, -0.1, 0.8])

    def test_nonintegrability_pairing(self):
        result = nonintegrability_pairing(self.model, [1.0])
        self.assertLess(result.expected, 0.0)
        self.assertLess(result.relative_gap, 1e-3)

    def test_jacobi_fields_are_orthogonal_to_gauge_directions(self):
        result = jacobi_orthogonality(self.model, [1.0])
        self.assertLess(result.worst, 1e-9)
        self.assertGreater(result.directions, 0)

    def test_k_constant_is_positive(self):
        constants = k_constant_sample(2, count=4, seed=5)
        self.assertEqual(constants.shape, (4,))
        self.assertTrue(np.all(constants > 0.0))

    def test_decompose_needs_sym2(self):
        u = TensorField.closed_form(SCALAR, self.model.chart, lambda x: x[2])
        with self.assertRaises(ModelError):
            jacobi_decompose(self.model, u)


class JacobiApproximationTests(SimpleTestCase):
    def test_jacobi_tensor_is_its_own_approximation(self):
        model = make_cylinder(2, 3)
        basis = k_basis(model.m).on(model)
        v = basis.evaluator(np.array([1.0]))
        result = jacobi_approx_probe(model, jacobi_tensor(model, v))
        self.assertLess(result.lhs, 1e-8)
        np.testing.assert_allclose(result.coefficients, [1.0], atol=1e-10)

    def test_needs_a_cylinder(self):
        model = make_gaussian(2)
        h = TensorField.closed_form("sym2", model.chart, lambda x: jnp.zeros((2, 2)) + 0.0 * x[0])
        with self.assertRaises(ModelError):
            jacobi_approx_probe(model, h)

import math

import numpy as np
from django.test import SimpleTestCase

from core.exceptions import ModelError, QuadratureError
from core.fields import sample
from core.model_spaces import (
    cutoff,
    cutoff_gradient_bound,
    k_basis,
    killing_fields,
    make_cylinder,
    make_gaussian,
    parse_model,
)


class ModelTests(SimpleTestCase):
    def test_parse_model(self):
        self.assertEqual(parse_model("gaussian:3").descriptor, "gaussian:3")
        cylinder = parse_model(" cylinder: 2, 4 ")
        self.assertEqual((cylinder.ell, cylinder.n, cylinder.m), (2, 4, 2))
        for text in ("torus:2", "cylinder:1,3", "cylinder:3,3", "gaussian"):
            with self.subTest(text=text), self.assertRaises(ModelError):
                parse_model(text)

    def test_cylinder_radius(self):
        self.assertAlmostEqual(make_cylinder(3, 4).sphere_radius, 2.0)
        self.assertAlmostEqual(make_cylinder(2, 3).sphere_radius, math.sqrt(2.0))

    def test_weighted_quadrature_mass(self):
        for model in (make_gaussian(2), make_cylinder(2, 3)):
            with self.subTest(model=model.descriptor):
                q = model.weighted_quadrature(4, 4)
                self.assertAlmostEqual(q.total_mass() / model.total_mass(), 1.0, places=10)

    def test_second_moment_of_gaussian(self):
        model = make_gaussian(2)
        q = model.weighted_quadrature(4)
        self.assertAlmostEqual(q.integrate(q.nodes[:, 0] ** 2) / q.total_mass(), 2.0, places=10)

    def test_level_set_quadrature(self):
        model = make_gaussian(2)
        q = model.level_set_quad(3.0, 6)
        np.testing.assert_allclose(np.linalg.norm(q.nodes, axis=1), 3.0)
        self.assertAlmostEqual(q.total_mass(), 6.0 * math.pi, places=10)
        with self.assertRaises(QuadratureError):
            model.level_set_quad(0.0, 6)
        with self.assertRaises(QuadratureError):
            make_cylinder(2, 3).level_set_quad(1.0, 4)


class KernelTests(SimpleTestCase):
    def test_labels(self):
        basis = k_basis(2)
        self.assertEqual(basis.labels, ("x1^2-2", "x2^2-2", "x1*x2"))
        self.assertEqual(basis.size, 3)

    def test_offset_on_cylinder(self):
        model = make_cylinder(2, 3)
        basis = k_basis(1).on(model)
        v = basis.element(0)
        self.assertAlmostEqual(float(v(np.array([0.3, 0.1, 2.0]))), 2.0)
        with self.assertRaises(ModelError):
            k_basis(2).on(model)

    def test_killing_fields(self):
        fields = killing_fields(make_gaussian(3))
        self.assertEqual(sorted(fields), ["d1", "d2", "d3", "rot12", "rot13", "rot23"])


class CutoffTests(SimpleTestCase):
    def test_profile(self):
        model = make_gaussian(2)
        eta = cutoff(model, 5.0)
        radii = np.array([0.0, 2.0, 3.99, 4.5, 5.0, 7.0])
        values = sample(eta, np.stack([radii, np.zeros_like(radii)], axis=-1))
        np.testing.assert_allclose(values[:3], 1.0, atol=1e-12)
        np.testing.assert_allclose(values[4:], 0.0, atol=1e-12)
        self.assertTrue(0.0 < values[3] < 1.0)

    def test_gradient_bound(self):
        model = make_gaussian(1)
        eta = cutoff(model, 4.0)
        x = np.linspace(2.5, 4.5, 401)[:, None]
        slopes = np.abs(np.diff(sample(eta, x))) / (x[1, 0] - x[0, 0])
        self.assertLessEqual(slopes.max(), cutoff_gradient_bound() + 1e-6)

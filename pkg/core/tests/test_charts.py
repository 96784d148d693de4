import numpy as np
from django.test import SimpleTestCase

from core.charts import Chart
from core.differentiation import JetMode
from core.exceptions import ChartError
from core.geometry import Geometry, curvature_at, curvature_symmetry_gaps, jet_at, normalization_spread
from core.model_spaces import make_cylinder, make_gaussian


class JetModeTests(SimpleTestCase):
    def test_parse_and_describe(self):
        mode = JetMode.parse("finite_difference(0.001)")
        self.assertEqual(mode.step, 1e-3)
        self.assertEqual(JetMode.parse(mode.describe()), mode)
        self.assertTrue(JetMode.parse("analytic").is_analytic)

    def test_halving(self):
        self.assertEqual(JetMode.finite_difference(0.02).halved().step, 0.01)
        self.assertEqual(JetMode.analytic().halved(), JetMode.analytic())

    def test_rejects_bad_modes(self):
        with self.assertRaises(ChartError):
            JetMode.parse("spline")
        with self.assertRaises(ChartError):
            JetMode.finite_difference(0.0)


class ChartTests(SimpleTestCase):
    def test_descriptor_round_trip(self):
        chart = Chart.random_torus(3, seed=5)
        again = Chart.from_descriptor(chart.descriptor())
        self.assertEqual(again.digest(), chart.digest())
        x = np.array([0.3, 1.1, 2.5])
        np.testing.assert_allclose(again.metric_eval(x), chart.metric_eval(x), atol=1e-15)

    def test_custom_charts_have_no_descriptor(self):
        chart = Chart.flat(2)
        custom = chart.with_evaluators(chart.metric_eval, lambda x: x @ x)
        with self.assertRaises(ChartError):
            custom.descriptor()

    def test_trig_amplitude_must_keep_metric_positive(self):
        with self.assertRaises(ChartError):
            Chart.random_torus(3, seed=1, amplitude=0.5)

    def test_point_checks(self):
        chart = Chart.flat(2, half_width=1.0)
        with self.assertRaises(ChartError):
            chart.check_point([0.0, 0.0, 0.0])
        with self.assertRaises(ChartError):
            chart.check_point([2.0, 0.0])
        torus = Chart.random_torus(2, seed=0)
        self.assertTrue(torus.contains([100.0, -3.0]))

    def test_random_torus_metric_is_spd(self):
        chart = Chart.random_torus(3, seed=2)
        for x in np.random.default_rng(0).uniform(0, 2 * np.pi, size=(5, 3)):
            chart.check_spd(x)


class GeometryTests(SimpleTestCase):
    def test_flat_chart_has_no_curvature(self):
        geo = Geometry(Chart.flat(3))
        x = np.array([0.4, -0.2, 1.0])
        np.testing.assert_allclose(geo.riemann(x), 0.0, atol=1e-14)

    def test_gaussian_is_a_shrinker(self):
        model = make_gaussian(2)
        self.assertLess(model.soliton_defect(), 1e-12)
        self.assertLess(normalization_spread(model.chart, model.sample_points()), 1e-12)

    def test_cylinder_scalar_curvature(self):
        model = make_cylinder(2, 3)
        x = np.array([0.3, -0.4, 1.2])
        self.assertAlmostEqual(float(model.geometry.scalar_curvature(x)), 1.0, places=10)
        self.assertLess(model.normal_ricci_defect(), 1e-10)
        self.assertLess(normalization_spread(model.chart, model.sample_points()), 1e-10)

    def test_riemann_symmetries_on_random_torus(self):
        chart = Chart.random_torus(3, seed=4)
        pack = curvature_at(jet_at(chart, np.array([1.0, 2.0, 0.5]), order=2))
        for name, gap in curvature_symmetry_gaps(pack).items():
            self.assertLess(gap, 1e-10, name)

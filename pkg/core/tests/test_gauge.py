import math

import jax.numpy as jnp
import numpy as np
from django.test import SimpleTestCase

from core.bases import build_basis
from core.calculus import geometry
from core.exceptions import FlowError, ModelError, RepresentationError
from core.fields import SCALAR, SYM2, VECTOR, Grid, TensorField, resample, sample
from core.gauge import (
    GaugeRecord,
    GaugeState,
    balance_fix,
    cb_derivative_gap,
    center_derivative,
    discretization_floor,
    divf_quadratic_gap,
    flow_time_one,
    gauge_iterate,
    interpolate,
    lie_derivative,
    linearization_gap,
    measure,
    pullback,
    pulled_back,
    pure_gauge,
    quadratic_generator,
    rk4_flow,
    round_trip,
)
from core.model_spaces import make_gaussian


def _rotation(x):
    return 0.3 * jnp.stack([x[1], -x[0]])


def _shear(x):
    return 0.2 * jnp.stack([jnp.sin(x[1]), 0.25 * x[0] * x[1]])


class FlowTests(SimpleTestCase):
    def setUp(self):
        self.model = make_gaussian(2)
        self.geo = geometry(self.model.chart)

    def test_zero_field_is_identity(self):
        flow = rk4_flow(self.geo, lambda x: 0.0 * x, 4)
        x = jnp.array([0.3, -1.2])
        np.testing.assert_allclose(flow(x), x, atol=0.0)

    def test_constant_field_translates(self):
        flow = rk4_flow(self.geo, lambda x: jnp.array([0.5, 0.0]) + 0.0 * x, 8)
        np.testing.assert_allclose(flow(jnp.array([1.0, 2.0])), [1.5, 2.0], atol=1e-14)
        np.testing.assert_allclose(flow(jnp.array([1.0, 2.0]), -1.0), [0.5, 2.0], atol=1e-14)

    def test_killing_field_leaves_the_soliton_fixed(self):
        metric, weight = pulled_back(self.model.chart, _rotation, steps=16)
        x = jnp.array([0.8, -0.5])
        np.testing.assert_allclose(metric(x, 1.0), 0.0, atol=1e-7)
        self.assertLess(abs(float(weight(x, 1.0))), 1e-7)
        np.testing.assert_allclose(sample(lie_derivative(self.geo, _rotation), np.array([[0.8, -0.5]])), 0.0, atol=1e-12)

    def test_lie_derivative_matches_flow(self):
        def h(x):
            return 0.05 * jnp.exp(-(x @ x) / 8.0) * jnp.array([[0.5, 1.0], [1.0, 0.0]])

        sweep = linearization_gap(self.model.chart, _shear, self.model.sample_points(), h)
        self.assertLess(sweep.finest, 1e-4)
        self.assertGreater(sweep.power, 1.5)


class GridMapTests(SimpleTestCase):
    def setUp(self):
        self.model = make_gaussian(2)
        self.grid = Grid.box(2, 2.0, 9)

    def test_identity_map(self):
        diffeo = flow_time_one(lambda x: 0.0 * x, self.grid, self.model.chart, steps=2)
        self.assertEqual(diffeo.max_displacement, 0.0)
        self.assertAlmostEqual(diffeo.min_determinant, 1.0)

    def test_leaving_the_box(self):
        with self.assertRaises(FlowError):
            flow_time_one(lambda x: jnp.array([0.5, 0.0]) + 0.0 * x, self.grid, self.model.chart, steps=2)

    def test_grid_generators_are_refused(self):
        v = TensorField.on_grid(VECTOR, self.model.chart, self.grid, np.zeros((9, 9, 2)))
        with self.assertRaises(RepresentationError):
            flow_time_one(v, self.grid, self.model.chart)

    def test_pullback_by_identity(self):
        chart = self.model.chart
        h = resample(TensorField.closed_form(SYM2, chart, lambda x: 0.1 * jnp.outer(x, x)), self.grid)
        k = resample(TensorField.closed_form(SCALAR, chart, lambda x: jnp.sin(x[0])), self.grid)
        diffeo = flow_time_one(lambda x: 0.0 * x, self.grid, chart, steps=2)
        result = pullback(diffeo, h, k)
        np.testing.assert_allclose(result.h.values, h.values, atol=1e-10)
        np.testing.assert_allclose(result.k.values, k.values, atol=1e-10)
        self.assertLess(result.interpolation_error, 1e-10)


class GaugeLoopTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.model = make_gaussian(2)
        cls.grid = Grid.box(2, 10.0, 41)

    def test_balance_fix_cancels_the_center(self):
        chart = self.model.chart
        h = TensorField.on_grid(SYM2, chart, self.grid, np.zeros(self.grid.shape + (2, 2)))
        k = resample(TensorField.closed_form(SCALAR, chart, lambda x: x[0]), self.grid)
        balanced = balance_fix(self.model, h, k, build_basis(self.model, VECTOR, 1))
        np.testing.assert_allclose(balanced.translation, [-2.0, 0.0], atol=1e-8)
        self.assertLess(balanced.balance_gap, 1e-8)

    def test_zero_input_is_already_in_gauge(self):
        chart = self.model.chart
        h = TensorField.on_grid(SYM2, chart, self.grid, np.zeros(self.grid.shape + (2, 2)))
        k = TensorField.on_grid(SCALAR, chart, self.grid, np.zeros(self.grid.shape))
        states = gauge_iterate(self.model, h, k, radius=8.0, degree=1)
        self.assertEqual(len(states), 1)
        self.assertEqual(states[0].record.divf_w12, 0.0)

    def test_loop_needs_grid_input(self):
        h = TensorField.closed_form(SYM2, self.model.chart, lambda x: jnp.zeros((2, 2)) + 0.0 * x[0])
        k = TensorField.closed_form(SCALAR, self.model.chart, lambda x: 0.0 * x[0])
        with self.assertRaises(RepresentationError):
            gauge_iterate(self.model, h, k)

    def test_interpolation_reproduces_nodes(self):
        chart = self.model.chart
        k = resample(TensorField.closed_form(SCALAR, chart, lambda x: jnp.cos(x[0]) * x[1]), self.grid)
        nodes = self.grid.nodes()[::97]
        np.testing.assert_allclose(interpolate(k, nodes), k.values.reshape(-1)[::97], atol=1e-10)

    def test_state_history_must_end_with_record(self):
        h = TensorField.on_grid(SYM2, self.model.chart, self.grid, np.zeros(self.grid.shape + (2, 2)))
        k = TensorField.on_grid(SCALAR, self.model.chart, self.grid, np.zeros(self.grid.shape))
        first = GaugeRecord(0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0)
        second = GaugeRecord(1, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0)
        with self.assertRaises(ValueError):
            GaugeState(1, h, k, 8.0, second, (first,))
        with self.assertRaises(ValueError):
            bad = GaugeRecord(0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0)
            GaugeState(0, h, k, 8.0, bad, (bad,))

    def test_quadratic_generator_needs_two_directions(self):
        with self.assertRaises(ModelError):
            quadratic_generator(make_gaussian(1))

    def _pure_gauge_input(self):
        generator = quadratic_generator(self.model, 1e-2)
        return generator, pure_gauge(self.model, generator, self.grid, radius=8.0)

    def test_round_trip_is_within_interpolation_error(self):
        generator, _ = self._pure_gauge_input()
        back = round_trip(self.model, generator, self.grid, radius=8.0)
        self.assertGreater(back.interpolation_error, 0.0)
        self.assertLessEqual(back.residual, back.bound + 1e-10)

    def test_floor_is_below_the_input(self):
        generator, start = self._pure_gauge_input()
        initial = measure(self.model, start.h, start.k, 8.0)
        floor = discretization_floor(self.model, start.h, start.k, generator, radius=8.0)
        self.assertLess(floor.divf_w12, 0.1 * initial.divf_w12)

    def test_loop_reduces_pure_gauge_input(self):
        _, start = self._pure_gauge_input()
        states = gauge_iterate(self.model, start.h, start.k, radius=8.0, max_iter=2)
        self.assertGreater(len(states), 1)
        self.assertLess(states[1].record.divf_w12, 0.5 * states[0].record.divf_w12)
        self.assertEqual(states[-1].history[0], states[0].record)


class CenterDerivativeTests(SimpleTestCase):
    def test_translation_moves_center_by_mass(self):
        model = make_gaussian(2)
        q = model.weighted_quadrature(4)
        formula, translation, bound = center_derivative(model, lambda x: jnp.array([1.0, 0.0]) + 0.0 * x, None, None, q)
        np.testing.assert_allclose(formula, [4.0 * math.pi, 0.0], atol=1e-10)
        np.testing.assert_allclose(translation, formula, atol=1e-12)
        np.testing.assert_allclose(bound, 0.0, atol=1e-12)


def _linear(x):
    return jnp.stack([0.3 * x[0] + 0.1 * x[1], 0.2 * x[0] - 0.1 * x[1]])


class AmplitudeSweepTests(SimpleTestCase):
    def test_divf_gap_is_quadratic(self):
        sweep = divf_quadratic_gap(make_gaussian(2), _linear, amplitude=1e-1)
        self.assertEqual(sweep.label, "divf_quadratic")
        self.assertAlmostEqual(sweep.power, 2.0, delta=0.1)
        self.assertLess(sweep.finest, sweep.residuals[0])

    def test_center_derivative_of_a_linear_flow(self):
        result = cb_derivative_gap(make_gaussian(2), _linear, k=lambda x: x[0], step=1e-1)
        np.testing.assert_allclose(result.formula, 8.0 * math.pi * np.array([0.3, 0.1]), rtol=1e-10)
        np.testing.assert_allclose(result.translation_part, 0.0, atol=1e-10)
        self.assertTrue(result.bound_holds)
        self.assertAlmostEqual(result.sweep.power, 2.0, delta=0.1)

import math
import tempfile
from pathlib import Path

import jax.numpy as jnp
import numpy as np
from django.test import SimpleTestCase

from core.charts import Chart
from core.exceptions import QuadratureError, RankMismatchError, RepresentationError
from core.fields import (
    SCALAR,
    SYM2,
    UNWEIGHTED,
    VECTOR,
    Grid,
    Quadrature,
    TensorField,
    add,
    read_field,
    read_field_csv,
    resample,
    write_field,
    write_field_csv,
)
from core.model_spaces import make_gaussian


class GridTests(SimpleTestCase):
    def test_box_grid(self):
        grid = Grid.box(2, 1.0, 5)
        self.assertEqual(grid.shape, (5, 5))
        self.assertEqual(grid.size, 25)
        self.assertEqual(grid.spacing, (0.5, 0.5))
        np.testing.assert_allclose(grid.nodes()[1], [-1.0, -0.5])

    def test_description_round_trip(self):
        for grid in (Grid.box(3, 2.0, 7), Grid.periodic_box(2, 8)):
            with self.subTest(periodic=grid.periodic):
                self.assertTrue(Grid.from_description(grid.describe()).same_as(grid))


class QuadratureTests(SimpleTestCase):
    def test_rejects_bad_weights(self):
        chart = Chart.flat(1)
        with self.assertRaises(QuadratureError):
            Quadrature(np.zeros((2, 1)), np.array([1.0, -1.0]), UNWEIGHTED, chart)
        with self.assertRaises(QuadratureError):
            Quadrature(np.zeros((2, 1)), np.ones(3), UNWEIGHTED, chart)

    def test_grid_mass_of_gaussian(self):
        model = make_gaussian(2)
        q = Quadrature.on_grid(Grid.box(2, 10.0, 41), model.chart)
        self.assertAlmostEqual(q.total_mass(), 4.0 * math.pi, places=8)
        self.assertAlmostEqual(q.total_mass(), model.weighted_quadrature(4).total_mass(), places=8)


class TensorFieldTests(SimpleTestCase):
    def setUp(self):
        self.chart = make_gaussian(2).chart
        self.grid = Grid.box(2, 2.0, 9)

    def test_grid_shape_is_validated(self):
        with self.assertRaises(RepresentationError):
            TensorField.on_grid(VECTOR, self.chart, self.grid, np.zeros((9, 9)))
        values = np.zeros((9, 9, 2, 2))
        values[..., 0, 1] = 1.0
        with self.assertRaises(RepresentationError):
            TensorField.on_grid(SYM2, self.chart, self.grid, values)

    def test_closed_form_needs_evaluator(self):
        with self.assertRaises(RepresentationError):
            TensorField(SCALAR, self.chart, "closed_form")

    def test_grid_fields_have_no_function(self):
        field = TensorField.on_grid(SCALAR, self.chart, self.grid, np.zeros((9, 9)))
        with self.assertRaises(RepresentationError):
            field.function

    def test_add_and_scale(self):
        u = resample(TensorField.closed_form(SCALAR, self.chart, lambda x: x[0] ** 2), self.grid)
        doubled = add(u, u)
        np.testing.assert_allclose(doubled.values, u.scaled(2.0).values)
        with self.assertRaises(RankMismatchError):
            add(u, TensorField.on_grid(VECTOR, self.chart, self.grid, np.zeros((9, 9, 2))))
        with self.assertRaises(RepresentationError):
            add(u, TensorField.closed_form(SCALAR, self.chart, lambda x: x[0]))

    def test_grid_to_grid_resampling_is_refused(self):
        u = TensorField.on_grid(SCALAR, self.chart, self.grid, np.zeros((9, 9)))
        with self.assertRaises(RepresentationError):
            resample(u, Grid.box(2, 2.0, 11))


class FieldFileTests(SimpleTestCase):
    def setUp(self):
        self.chart = make_gaussian(2).chart
        self.grid = Grid.box(2, 3.0, 7)
        self.h = resample(
            TensorField.closed_form(SYM2, self.chart, lambda x: 0.1 * jnp.outer(x, x)), self.grid
        )
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def test_binary_round_trip(self):
        path = Path(self.tmp.name) / "h.field"
        write_field(path, self.h)
        again = read_field(path, self.chart)
        self.assertEqual(again.rank, SYM2)
        self.assertTrue(again.grid.same_as(self.grid))
        np.testing.assert_array_equal(again.values, self.h.values)

    def test_binary_file_checks_the_chart(self):
        path = Path(self.tmp.name) / "h.field"
        write_field(path, self.h)
        with self.assertRaises(RepresentationError):
            read_field(path, Chart.flat(2))

    def test_truncated_payload(self):
        path = Path(self.tmp.name) / "h.field"
        write_field(path, self.h)
        path.write_bytes(path.read_bytes()[:-8])
        with self.assertRaises(RepresentationError):
            read_field(path, self.chart)

    def test_closed_forms_are_not_written(self):
        with self.assertRaises(RepresentationError):
            write_field(Path(self.tmp.name) / "x.field", TensorField.closed_form(SCALAR, self.chart, lambda x: x[0]))

    def test_csv_round_trip(self):
        path = Path(self.tmp.name) / "h.csv"
        write_field_csv(path, self.h)
        again = read_field_csv(path, self.chart, SYM2)
        np.testing.assert_array_equal(again.values, self.h.values)

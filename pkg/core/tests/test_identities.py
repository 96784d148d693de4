import numpy as np
from django.test import SimpleTestCase

from core.charts import Chart
from core.exceptions import SolitonGateError, UnknownIdentityError
from core.identities import IDENTITIES, IdentityRunner, TestFields, get_identity, identity_residual
from core.model_spaces import make_gaussian


class IdentityTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.chart = Chart.random_torus(3, seed=11)
        cls.fields = TestFields.random(3, seed=11)
        cls.point = np.array([0.7, 2.1, 4.0])

    def test_registry(self):
        self.assertIn("ricci_identity", IDENTITIES)
        self.assertTrue(IDENTITIES["adjoint_formula"].soliton_only)
        with self.assertRaises(UnknownIdentityError):
            get_identity("not_an_identity")

    def test_analytic_residuals_vanish(self):
        for name in ("ricci_identity", "bochner_grad", "divf_riemann", "dvast"):
            with self.subTest(identity=name):
                residual = IdentityRunner(self.chart, name, self.fields).residual(self.point)
                self.assertLess(residual, 1e-9)

    def test_finite_difference_order(self):
        result = identity_residual(self.chart, self.point, "ricci_identity", step=2e-2, fields=self.fields)
        self.assertGreater(result.coarse_residual, result.fine_residual)
        self.assertGreater(result.order_estimate, 1.5)

    def test_soliton_only_identity_is_gated(self):
        runner = IdentityRunner(self.chart, "hess_commute", self.fields)
        with self.assertRaises(SolitonGateError):
            runner.residual(self.point)

    def test_soliton_only_identity_on_gaussian(self):
        model = make_gaussian(2)
        runner = IdentityRunner(model.chart, "hess_commute", TestFields.random(2, seed=3))
        self.assertLess(runner.residual(np.array([0.5, -1.0])), 1e-9)

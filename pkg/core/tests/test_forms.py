from django.conf import settings
from django.test import SimpleTestCase

from core.conf import option
from core.forms import ExperimentConfigForm


class ExperimentConfigFormTests(SimpleTestCase):
    def test_minimal(self):
        form = ExperimentConfigForm({"command": "spectrum"})
        self.assertTrue(form.is_valid(), form.errors)
        self.assertEqual(form.config(), {"command": "spectrum"})

    def test_model_is_normalized(self):
        form = ExperimentConfigForm({"command": "identities", "model": " torus : 3 ", "degree": "4"})
        self.assertTrue(form.is_valid(), form.errors)
        self.assertEqual(form.config(), {"command": "identities", "model": "torus:3", "degree": 4})

    def test_bad_model(self):
        form = ExperimentConfigForm({"command": "spectrum", "model": "sphere:2"})
        self.assertFalse(form.is_valid())
        self.assertIn("model", form.errors)

    def test_unknown_command(self):
        self.assertFalse(ExperimentConfigForm({"command": "flow"}).is_valid())

    def test_step_must_be_positive(self):
        form = ExperimentConfigForm({"command": "identities", "step": "0"})
        self.assertFalse(form.is_valid())
        self.assertIn("step", form.errors)

    def test_window_needs_both_ends_in_order(self):
        self.assertFalse(ExperimentConfigForm({"command": "growth", "window_lo": "4"}).is_valid())
        self.assertFalse(ExperimentConfigForm({"command": "growth", "window_lo": "8", "window_hi": "4"}).is_valid())
        form = ExperimentConfigForm({"command": "growth", "window_lo": "4", "window_hi": "8"})
        self.assertTrue(form.is_valid(), form.errors)

    def test_input_k_needs_input(self):
        form = ExperimentConfigForm({"command": "gauge_fix", "input_k": "k.bin"})
        self.assertFalse(form.is_valid())
        self.assertIn("__all__", form.errors)


class WorkbenchSettingsTests(SimpleTestCase):
    def test_option_falls_back_to_workbench_defaults(self):
        self.assertEqual(option("kappa"), 0.5)
        self.assertEqual(option("degree", 3), 3)
        self.assertEqual(option("gauge_degree"), settings.WORKBENCH["gauge_degree"])

    def test_core_logs_through_the_workbench_formatter(self):
        self.assertEqual(settings.LOGGING["handlers"]["console"]["formatter"], "workbench")
        self.assertEqual(settings.LOGGING["loggers"]["core"]["handlers"], ["console"])

from __future__ import annotations

import re

from django import forms

from .exceptions import ModelError
from .model_spaces import parse_model
from .spectral import DRIFT, L, P
from .identities import IDENTITY_IDS

COMMANDS = ("identities", "spectrum", "growth", "variation", "gauge_fix", "all")
RANK_CHOICES = [("scalar", "Scalar"), ("vector", "Vector"), ("sym2", "Symmetric 2-tensor")]
OPERATOR_CHOICES = [(DRIFT, "Drift Laplacian"), (P, "P = div_f div_f*"), (L, "L = drift + 2R")]

_TORUS = re.compile(r"^\s*torus\s*:\s*(\d+)\s*$")


class ExperimentConfigForm(forms.Form):
    """Validates one experiment configuration; unset keys fall back to the WORKBENCH defaults."""

    command = forms.ChoiceField(choices=[(c, c) for c in COMMANDS])
    model = forms.CharField(required=False, help_text="gaussian:n, cylinder:l,n or torus:n")
    seed = forms.IntegerField(required=False, min_value=0)

    # chart geometry
    points = forms.IntegerField(required=False, min_value=1)
    step = forms.FloatField(required=False, min_value=0.0)
    identity = forms.ChoiceField(required=False, choices=[("", "all")] + [(i, i) for i in IDENTITY_IDS])

    # spectral
    degree = forms.IntegerField(required=False, min_value=1, max_value=10)
    sphere_degree = forms.IntegerField(required=False, min_value=0, max_value=6)
    op = forms.ChoiceField(required=False, choices=[("", "default")] + OPERATOR_CHOICES)
    rank = forms.ChoiceField(required=False, choices=[("", "default")] + RANK_CHOICES)
    k = forms.IntegerField(required=False, min_value=1)
    samples = forms.IntegerField(required=False, min_value=1)
    window_lo = forms.FloatField(required=False, min_value=0.0)
    window_hi = forms.FloatField(required=False, min_value=0.0)

    # variation
    direction = forms.CharField(required=False, help_text="jacobi:x1^2-2, gauge:W=grad(x1^2-2) or block:dx1dx1")
    amplitude = forms.FloatField(required=False, min_value=0.0)

    # gauge
    input = forms.CharField(required=False)
    input_k = forms.CharField(required=False)
    R = forms.FloatField(required=False, min_value=0.0)
    iters = forms.IntegerField(required=False, min_value=1)
    grid_points = forms.IntegerField(required=False, min_value=5)
    half_width = forms.FloatField(required=False, min_value=0.0)
    epsilon = forms.FloatField(required=False, min_value=0.0)

    # output
    json = forms.CharField(required=False)
    emit_csv = forms.CharField(required=False)

    def clean_model(self):
        text = self.cleaned_data.get("model", "").strip()
        if not text:
            return ""
        torus = _TORUS.match(text)
        if torus:
            if int(torus.group(1)) < 1:
                raise forms.ValidationError("Torus dimension must be positive.")
            return f"torus:{int(torus.group(1))}"
        try:
            return parse_model(text).descriptor
        except ModelError as exc:
            raise forms.ValidationError(str(exc)) from exc

    def clean_step(self):
        return self._positive("step")

    def clean_amplitude(self):
        return self._positive("amplitude")

    def clean_R(self):
        return self._positive("R")

    def clean_half_width(self):
        return self._positive("half_width")

    def clean_epsilon(self):
        return self._positive("epsilon")

    def _positive(self, name):
        value = self.cleaned_data.get(name)
        if value is not None and value <= 0.0:
            raise forms.ValidationError(f"{name} must be positive.")
        return value

    def clean(self):
        cleaned = super().clean()
        lo, hi = cleaned.get("window_lo"), cleaned.get("window_hi")
        if (lo is None) != (hi is None):
            raise forms.ValidationError("Give both window_lo and window_hi, or neither.")
        if lo is not None and hi is not None and hi <= lo:
            raise forms.ValidationError("Fit window must satisfy window_lo < window_hi.")
        if cleaned.get("input_k") and not cleaned.get("input"):
            raise forms.ValidationError("input_k needs an accompanying input field.")
        return cleaned

    def config(self) -> dict:
        """Cleaned values with empty entries dropped, so WORKBENCH defaults apply."""
        return {key: value for key, value in self.cleaned_data.items() if value not in (None, "")}

"""Coordinate charts: a metric and a weight on one coordinate patch.

Charts are immutable.  Named families can be serialised as ``key = value``
descriptor text; charts built from arbitrary evaluators (perturbations, pulled
back metrics) are ``custom`` and carry no descriptor.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field, replace
from typing import Any

import jax.numpy as jnp
import numpy as np

from .differentiation import Evaluator, JetMode
from .exceptions import ChartError

logger = logging.getLogger(__name__)

PERIODIC_BOX = "periodic_box"
BOX = "box"
SPHERE_PRODUCT = "sphere_product"
TOPOLOGIES = (PERIODIC_BOX, BOX, SPHERE_PRODUCT)

NORTH = "north"
SOUTH = "south"


# ---------------------------------------------------------------------------
# Closed-form families
# ---------------------------------------------------------------------------


def trig_modes(dim: int, seed: int, modes: int, rank: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Seeded wave vectors and raw cosine/sine coefficients."""
    rng = np.random.default_rng(seed)
    waves = rng.integers(-2, 3, size=(modes, dim))
    for row in waves:
        if not row.any():
            row[rng.integers(dim)] = 1
    shape = (modes,) + (dim,) * rank
    cos_coef = rng.uniform(-1.0, 1.0, size=shape)
    sin_coef = rng.uniform(-1.0, 1.0, size=shape)
    if rank == 2:
        cos_coef = 0.5 * (cos_coef + np.swapaxes(cos_coef, 1, 2))
        sin_coef = 0.5 * (sin_coef + np.swapaxes(sin_coef, 1, 2))
    return waves.astype(float), cos_coef, sin_coef


def trig_metric(dim: int, seed: int, amplitude: float, modes: int) -> Evaluator:
    """Identity plus a trigonometric polynomial with entries bounded by ``amplitude``."""
    if amplitude * dim >= 1.0:
        raise ChartError("trig metric amplitude must stay below 1/dim to keep g positive definite.")
    waves, cos_coef, sin_coef = trig_modes(dim, seed, modes, rank=2)
    scale = (np.abs(cos_coef) + np.abs(sin_coef)).sum(axis=0).max()
    cos_coef = jnp.asarray(cos_coef * amplitude / scale)
    sin_coef = jnp.asarray(sin_coef * amplitude / scale)
    waves = jnp.asarray(waves)
    eye = jnp.eye(dim)

    def metric(x):
        phase = waves @ x
        return eye + jnp.einsum("m,mij->ij", jnp.cos(phase), cos_coef) + jnp.einsum(
            "m,mij->ij", jnp.sin(phase), sin_coef
        )

    return metric


def trig_scalar(dim: int, seed: int, amplitude: float, modes: int) -> Evaluator:
    waves, cos_coef, sin_coef = trig_modes(dim, seed, modes, rank=0)
    scale = (np.abs(cos_coef) + np.abs(sin_coef)).sum()
    cos_coef = jnp.asarray(cos_coef * amplitude / scale)
    sin_coef = jnp.asarray(sin_coef * amplitude / scale)
    waves = jnp.asarray(waves)

    def scalar(x):
        phase = waves @ x
        return jnp.cos(phase) @ cos_coef + jnp.sin(phase) @ sin_coef

    return scalar


def stereographic_embedding(ell: int, radius: float, patch: str) -> Evaluator:
    """Map patch coordinates y in R^ell to the sphere of ``radius`` in R^(ell+1)."""
    sign = -1.0 if patch == NORTH else 1.0

    def embed(y):
        norm2 = y @ y
        return radius * jnp.concatenate([2.0 * y, jnp.atleast_1d(sign * (1.0 - norm2))]) / (1.0 + norm2)

    return embed


def sphere_product_metric(ell: int, radius: float, dim: int) -> Evaluator:
    euclidean = dim - ell

    def metric(x):
        y = x[:ell]
        conformal = 4.0 * radius**2 / (1.0 + y @ y) ** 2
        top = conformal * jnp.eye(ell)
        return jnp.block(
            [
                [top, jnp.zeros((ell, euclidean))],
                [jnp.zeros((euclidean, ell)), jnp.eye(euclidean)],
            ]
        )

    return metric


def quadratic_weight(start: int, offset: float) -> Evaluator:
    def weight(x):
        tail = x[start:]
        return tail @ tail / 4.0 + offset

    return weight


def _build_metric(dim: int, family: str, params: dict[str, Any]) -> Evaluator:
    if family == "euclidean":
        eye = jnp.eye(dim)
        return lambda x: eye + 0.0 * x[0]
    if family == "trig":
        return trig_metric(dim, int(params["seed"]), float(params["amplitude"]), int(params["modes"]))
    if family == "sphere_product":
        return sphere_product_metric(int(params["ell"]), float(params["radius"]), dim)
    raise ChartError(f"Unknown metric family {family!r}.")


def _build_weight(dim: int, family: str, params: dict[str, Any]) -> Evaluator:
    if family == "zero":
        return lambda x: 0.0 * x[0]
    if family == "quadratic":
        return quadratic_weight(int(params.get("start", 0)), float(params.get("offset", 0.0)))
    if family == "trig":
        return trig_scalar(dim, int(params["seed"]), float(params["amplitude"]), int(params["modes"]))
    raise ChartError(f"Unknown weight family {family!r}.")


# ---------------------------------------------------------------------------
# Chart
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Chart:
    dim: int
    topology: str
    bounds: tuple[tuple[float, float], ...]
    metric_eval: Evaluator = field(repr=False, compare=False)
    weight_eval: Evaluator = field(repr=False, compare=False)
    jet_mode: JetMode = JetMode()
    kappa: float = 0.5
    metric_family: str = "custom"
    metric_params: dict[str, Any] = field(default_factory=dict, compare=False)
    weight_family: str = "custom"
    weight_params: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ChartError("Chart dimension must be at least 1.")
        if self.topology not in TOPOLOGIES:
            raise ChartError(f"Unknown topology {self.topology!r}.")
        if len(self.bounds) != self.dim:
            raise ChartError("One bound interval per coordinate is required.")

    # -- construction -------------------------------------------------------

    @classmethod
    def from_families(
        cls,
        dim: int,
        topology: str,
        bounds,
        metric: str,
        weight: str,
        metric_params: dict[str, Any] | None = None,
        weight_params: dict[str, Any] | None = None,
        jet_mode: JetMode | None = None,
        kappa: float = 0.5,
    ) -> "Chart":
        metric_params = dict(metric_params or {})
        weight_params = dict(weight_params or {})
        return cls(
            dim=dim,
            topology=topology,
            bounds=tuple((float(lo), float(hi)) for lo, hi in bounds),
            metric_eval=_build_metric(dim, metric, metric_params),
            weight_eval=_build_weight(dim, weight, weight_params),
            jet_mode=jet_mode or JetMode.analytic(),
            kappa=float(kappa),
            metric_family=metric,
            metric_params=metric_params,
            weight_family=weight,
            weight_params=weight_params,
        )

    @classmethod
    def flat(cls, dim: int, half_width: float = 50.0, **kwargs) -> "Chart":
        return cls.from_families(dim, BOX, [(-half_width, half_width)] * dim, "euclidean", "zero", **kwargs)

    @classmethod
    def random_torus(
        cls, dim: int, seed: int, amplitude: float = 0.1, modes: int = 3, weight_amplitude: float = 1.0, **kwargs
    ) -> "Chart":
        """Seeded trigonometric metric and weight on the periodic box [0, 2pi)^dim."""
        return cls.from_families(
            dim,
            PERIODIC_BOX,
            [(0.0, 2.0 * np.pi)] * dim,
            "trig",
            "trig",
            metric_params={"seed": seed, "amplitude": amplitude, "modes": modes},
            weight_params={"seed": seed + 1, "amplitude": weight_amplitude, "modes": modes},
            **kwargs,
        )

    def with_jet_mode(self, jet_mode: JetMode) -> "Chart":
        return replace(self, jet_mode=jet_mode)

    def with_evaluators(self, metric_eval: Evaluator, weight_eval: Evaluator) -> "Chart":
        """Same coordinates, new (g, f); the result is a custom chart."""
        return replace(
            self,
            metric_eval=metric_eval,
            weight_eval=weight_eval,
            metric_family="custom",
            metric_params={},
            weight_family="custom",
            weight_params={},
        )

    # -- queries ------------------------------------------------------------

    @property
    def is_custom(self) -> bool:
        return "custom" in (self.metric_family, self.weight_family)

    def contains(self, x) -> bool:
        if self.topology == PERIODIC_BOX:
            return True
        x = np.asarray(x, dtype=float)
        return all(lo <= xi <= hi for xi, (lo, hi) in zip(x, self.bounds))

    def check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ChartError(f"Expected a point with {self.dim} coordinates, got shape {x.shape}.")
        if not self.contains(x):
            raise ChartError(f"Point {x.tolist()} lies outside the chart bounds.")
        return x

    def check_spd(self, x, margin: float = 0.0) -> None:
        g = np.asarray(self.metric_eval(jnp.asarray(x, dtype=jnp.float64)))
        if not np.allclose(g, g.T, atol=1e-12):
            raise ChartError(f"Metric is not symmetric at {np.asarray(x).tolist()}.")
        if np.linalg.eigvalsh(g).min() <= margin:
            raise ChartError(f"Metric is not positive definite at {np.asarray(x).tolist()}.")

    # -- descriptors --------------------------------------------------------

    def descriptor(self) -> str:
        if self.is_custom:
            raise ChartError("Custom charts have no descriptor.")
        lines = [
            f"dim = {self.dim}",
            f"topology = {self.topology}",
            "bounds = " + ", ".join(f"{lo!r}:{hi!r}" for lo, hi in self.bounds),
            f"metric = {self.metric_family}",
        ]
        lines += [f"metric.{key} = {value}" for key, value in sorted(self.metric_params.items())]
        lines.append(f"weight = {self.weight_family}")
        lines += [f"weight.{key} = {value}" for key, value in sorted(self.weight_params.items())]
        lines += [f"jet_mode = {self.jet_mode.describe()}", f"kappa = {self.kappa!r}"]
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.descriptor().encode("utf-8")).hexdigest()

    @classmethod
    def from_descriptor(cls, text: str) -> "Chart":
        values: dict[str, str] = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ChartError(f"Malformed descriptor line {raw!r}.")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key] = value
        try:
            dim = int(values["dim"])
            bounds = [tuple(float(v) for v in item.split(":")) for item in values["bounds"].split(",")]
            metric_params = {k[len("metric.") :]: _coerce(v) for k, v in values.items() if k.startswith("metric.")}
            weight_params = {k[len("weight.") :]: _coerce(v) for k, v in values.items() if k.startswith("weight.")}
            return cls.from_families(
                dim,
                values["topology"],
                bounds,
                values["metric"],
                values["weight"],
                metric_params=metric_params,
                weight_params=weight_params,
                jet_mode=JetMode.parse(values.get("jet_mode", "analytic")),
                kappa=float(values.get("kappa", 0.5)),
            )
        except KeyError as exc:
            raise ChartError(f"Descriptor is missing key {exc.args[0]!r}.") from exc


def _coerce(value: str) -> Any:
    for kind in (int, float):
        try:
            return kind(value)
        except ValueError:
            continue
    return value

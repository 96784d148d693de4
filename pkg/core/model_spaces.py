"""The Gaussian soliton and the round cylinders S^l x R^(n-l).

Both are gradient shrinkers with kappa = 1/2 in the normalisation
S + |grad f|^2 = f.  On the cylinder that normalisation forces the sphere
radius sqrt(2(l - 1)) and f = |x|^2 / 4 + l / 2 on the Euclidean factor.
"""
from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from functools import cached_property

import jax.numpy as jnp
import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.special import roots_jacobi

from .charts import BOX, NORTH, SOUTH, SPHERE_PRODUCT, Chart, stereographic_embedding
from .exceptions import ModelError, QuadratureError
from .fields import LEVEL_SET, SCALAR, VECTOR, WEIGHTED, Quadrature, TensorField, sample
from .geometry import Field, Geometry

logger = logging.getLogger(__name__)

GAUSSIAN = "gaussian"
CYLINDER = "cylinder"

EUCLIDEAN_HALF_WIDTH = 60.0
PATCH_HALF_WIDTH = 1e6
SOLITON_TOLERANCE = 1e-8


# ---------------------------------------------------------------------------
# Quadrature rules
# ---------------------------------------------------------------------------


def hermite_rule(order: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Hermite rule against e^{-|x|^2/4} dx on R^dim.

    Exact for polynomials of degree at most 2 * order - 1 in each variable.
    """
    if dim == 0:
        return np.zeros((1, 0)), np.ones(1)
    t, w = hermegauss(order)
    x, w = math.sqrt(2.0) * t, math.sqrt(2.0) * w
    mesh = np.meshgrid(*([x] * dim), indexing="ij")
    weights = np.multiply.reduce(np.meshgrid(*([w] * dim), indexing="ij"))
    return np.stack([m.ravel() for m in mesh], axis=-1), weights.ravel()


def sphere_rule(dim: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Product rule on the unit sphere S^dim in R^(dim+1).

    S^0 is the pair of points +-1, S^1 the trapezoid rule with 2 * order + 2
    angles, and S^d peels off its last coordinate with Gauss-Jacobi nodes for
    the weight (1 - t^2)^((d-2)/2).  Weights sum to the sphere's area.
    """
    if dim == 0:
        return np.array([[-1.0], [1.0]]), np.ones(2)
    if dim == 1:
        count = 2 * order + 2
        angles = 2.0 * np.pi * np.arange(count) / count
        return np.stack([np.cos(angles), np.sin(angles)], axis=-1), np.full(count, 2.0 * np.pi / count)
    alpha = 0.5 * (dim - 2)
    t, wt = roots_jacobi(order + 1, alpha, alpha)
    inner, wi = sphere_rule(dim - 1, order)
    scale = np.sqrt(1.0 - t**2)
    points = np.concatenate(
        [
            (scale[:, None, None] * inner[None, :, :]).reshape(-1, dim),
            np.repeat(t, inner.shape[0])[:, None],
        ],
        axis=1,
    )
    return points, np.outer(wt, wi).ravel()


def sphere_area(dim: int, radius: float = 1.0) -> float:
    return 2.0 * math.pi ** ((dim + 1) / 2.0) / math.gamma((dim + 1) / 2.0) * radius**dim


def stereographic_inverse(points: np.ndarray, radius: float, patch: str = NORTH) -> np.ndarray:
    """Patch coordinates of points on the sphere of ``radius``."""
    sign = -1.0 if patch == NORTH else 1.0
    return points[:, :-1] / (radius + sign * points[:, -1:])


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelGeometry:
    variant: str
    n: int
    ell: int
    chart: Chart
    sphere_radius: float | None = None

    @property
    def m(self) -> int:
        return self.n - self.ell

    @property
    def descriptor(self) -> str:
        if self.variant == GAUSSIAN:
            return f"{GAUSSIAN}:{self.n}"
        return f"{CYLINDER}:{self.ell},{self.n}"

    @cached_property
    def geometry(self) -> Geometry:
        return Geometry(self.chart)

    def f(self, x):
        return self.chart.weight_eval(x)

    def b(self, x):
        # floor keeps the derivative finite at the Gaussian origin
        return 2.0 * jnp.sqrt(jnp.maximum(self.chart.weight_eval(x), 1e-300))

    def euclidean(self, x):
        return x[self.ell :]

    def total_mass(self) -> float:
        """Closed-form integral of e^{-f} dvol."""
        gaussian = (4.0 * math.pi) ** (self.m / 2.0)
        if self.variant == GAUSSIAN:
            return gaussian
        return sphere_area(self.ell, self.sphere_radius) * gaussian * math.exp(-self.ell / 2.0)

    def patch_chart(self, patch: str) -> Chart:
        if self.variant != CYLINDER:
            raise ModelError("Only cylinders carry stereographic patches.")
        if patch not in (NORTH, SOUTH):
            raise ModelError(f"Unknown patch {patch!r}.")
        return _cylinder_chart(self.ell, self.n, self.sphere_radius, patch)

    def embed_sphere(self, y, patch: str = NORTH):
        return stereographic_embedding(self.ell, self.sphere_radius, patch)(y)

    # -- quadrature ---------------------------------------------------------

    def weighted_quadrature(self, order: int, sphere_order: int | None = None) -> Quadrature:
        """Exact rule for e^{-f} dvol on the polynomial (times sphere polynomial) degrees in play."""
        x, wx = hermite_rule(order, self.m)
        if self.variant == GAUSSIAN:
            return Quadrature(x, wx, WEIGHTED, self.chart)
        z, wz = sphere_rule(self.ell, sphere_order if sphere_order is not None else order)
        y = stereographic_inverse(self.sphere_radius * z, self.sphere_radius)
        wz = wz * self.sphere_radius**self.ell
        nodes = np.concatenate([np.repeat(y, x.shape[0], axis=0), np.tile(x, (y.shape[0], 1))], axis=1)
        weights = np.outer(wz, wx).ravel() * math.exp(-self.ell / 2.0)
        return Quadrature(nodes, weights, WEIGHTED, self.chart)

    def level_set_quad(self, r: float, order: int) -> Quadrature:
        """Nodes on {b = r}; weights are area element times |grad b|."""
        if self.variant == GAUSSIAN:
            if r <= 0:
                raise QuadratureError("Level sets of b need r > 0.")
            points, weights = sphere_rule(self.n - 1, order)
            return Quadrature(r * points, weights * r ** (self.n - 1), LEVEL_SET, self.chart, level=r)
        floor = math.sqrt(2.0 * self.ell)
        if r <= floor:
            raise QuadratureError(f"b is at least {floor:.6g} on this cylinder; got r = {r}.")
        rho = math.sqrt(r * r - 2.0 * self.ell)
        z, wz = sphere_rule(self.ell, order)
        y = stereographic_inverse(self.sphere_radius * z, self.sphere_radius)
        wz = wz * self.sphere_radius**self.ell
        e, we = sphere_rule(self.m - 1, order)
        e, we = rho * e, we * rho ** (self.m - 1)
        nodes = np.concatenate([np.repeat(y, e.shape[0], axis=0), np.tile(e, (y.shape[0], 1))], axis=1)
        weights = np.outer(wz, we).ravel() * (rho / r)
        return Quadrature(nodes, weights, LEVEL_SET, self.chart, level=r)

    # -- checks -------------------------------------------------------------

    def soliton_defect(self, points=None) -> float:
        """max |phi| over ``points`` (default: a fixed spread of sample points)."""
        points = self.sample_points() if points is None else np.asarray(points, dtype=float)
        return float(np.abs(sample(self.geometry.phi, points)).max())

    def normal_ricci_defect(self, points=None) -> float:
        """max |Ric_N - g^1 / 2| over the sphere block; zero for Gaussians."""
        if self.variant == GAUSSIAN:
            return 0.0
        points = self.sample_points() if points is None else np.asarray(points, dtype=float)
        ric = sample(self.geometry.ricci, points)
        g = sample(self.chart.metric_eval, points)
        block = slice(0, self.ell)
        return float(np.abs(ric[:, block, block] - 0.5 * g[:, block, block]).max())

    def sample_points(self) -> np.ndarray:
        rng = np.random.default_rng(7)
        return rng.uniform(-1.5, 1.5, size=(4, self.n))

    def check(self) -> "ModelGeometry":
        defect = max(self.soliton_defect(), self.normal_ricci_defect())
        if defect > SOLITON_TOLERANCE:
            raise ModelError(f"{self.descriptor} is not a normalised shrinker: defect {defect:.3e}.")
        logger.debug("model %s verified, defect %.2e", self.descriptor, defect)
        return self


def _cylinder_chart(ell: int, n: int, radius: float, patch: str) -> Chart:
    bounds = [(-PATCH_HALF_WIDTH, PATCH_HALF_WIDTH)] * ell + [(-EUCLIDEAN_HALF_WIDTH, EUCLIDEAN_HALF_WIDTH)] * (n - ell)
    return Chart.from_families(
        n,
        SPHERE_PRODUCT,
        bounds,
        "sphere_product",
        "quadratic",
        metric_params={"ell": ell, "radius": radius, "patch": patch},
        weight_params={"start": ell, "offset": ell / 2.0},
    )


def make_gaussian(n: int) -> ModelGeometry:
    if n < 1:
        raise ModelError("The Gaussian soliton needs n >= 1.")
    chart = Chart.from_families(
        n,
        BOX,
        [(-EUCLIDEAN_HALF_WIDTH, EUCLIDEAN_HALF_WIDTH)] * n,
        "euclidean",
        "quadratic",
        weight_params={"start": 0, "offset": 0.0},
    )
    return ModelGeometry(GAUSSIAN, n, 0, chart).check()


def make_cylinder(ell: int, n: int) -> ModelGeometry:
    if ell < 2:
        raise ModelError("Cylinders need a sphere factor of dimension at least 2.")
    if n <= ell:
        raise ModelError("Cylinders need a Euclidean factor: n > l.")
    radius = math.sqrt(2.0 * (ell - 1))
    return ModelGeometry(CYLINDER, n, ell, _cylinder_chart(ell, n, radius, NORTH), sphere_radius=radius).check()


_MODEL = re.compile(r"^\s*(gaussian)\s*:\s*(\d+)\s*$|^\s*(cylinder)\s*:\s*(\d+)\s*,\s*(\d+)\s*$")


def parse_model(text: str) -> ModelGeometry:
    """``gaussian:n`` or ``cylinder:l,n``."""
    match = _MODEL.match(text or "")
    if not match:
        raise ModelError(f"Cannot parse model {text!r}; use gaussian:n or cylinder:l,n.")
    if match.group(1):
        return make_gaussian(int(match.group(2)))
    return make_cylinder(int(match.group(4)), int(match.group(5)))


# ---------------------------------------------------------------------------
# Kernel of L + 1 on the Euclidean factor
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KBasis:
    """x_i^2 - 2 and x_i x_j (i < j) on the Euclidean coordinates from ``offset`` on."""

    m: int
    offset: int = 0

    @property
    def labels(self) -> tuple[str, ...]:
        squares = [f"x{i + 1}^2-2" for i in range(self.m)]
        products = [f"x{i + 1}*x{j + 1}" for i in range(self.m) for j in range(i + 1, self.m)]
        return tuple(squares + products)

    @property
    def size(self) -> int:
        return self.m * (self.m + 1) // 2

    def matrices(self) -> list[np.ndarray]:
        """Symmetric a with v = a_ij x_i x_j - 2 tr a for each element."""
        out = []
        for i in range(self.m):
            a = np.zeros((self.m, self.m))
            a[i, i] = 1.0
            out.append(a)
        for i in range(self.m):
            for j in range(i + 1, self.m):
                a = np.zeros((self.m, self.m))
                a[i, j] = a[j, i] = 0.5
                out.append(a)
        return out

    def evaluator(self, coeffs) -> Field:
        a = sum(c * mat for c, mat in zip(np.asarray(coeffs, dtype=float), self.matrices()))
        a = jnp.asarray(a)
        trace = float(np.trace(a))
        start = self.offset

        def v(x):
            e = x[start:]
            return e @ a @ e - 2.0 * trace

        return v

    def element(self, index: int) -> Field:
        coeffs = np.zeros(self.size)
        coeffs[index] = 1.0
        return self.evaluator(coeffs)

    def field(self, chart: Chart, coeffs) -> TensorField:
        return TensorField.closed_form(SCALAR, chart, self.evaluator(coeffs))

    def on(self, model: ModelGeometry) -> "KBasis":
        if model.m != self.m:
            raise ModelError(f"KBasis for R^{self.m} used on a model with Euclidean dimension {model.m}.")
        return KBasis(self.m, model.ell)


def k_basis(m: int) -> KBasis:
    if m < 1:
        raise ModelError("The Euclidean factor must have dimension at least 1.")
    basis = KBasis(m)
    geo = make_gaussian(m).geometry
    points = np.random.default_rng(3).uniform(-2.0, 2.0, size=(3, m))
    for index in range(basis.size):
        v = basis.element(index)
        defect = np.abs(sample(geo.drift_laplacian(v), points) + sample(v, points)).max()
        if defect > SOLITON_TOLERANCE:
            raise ModelError(f"{basis.labels[index]} is not an eigenfunction with eigenvalue 1: {defect:.3e}.")
    return basis


# ---------------------------------------------------------------------------
# Killing fields and cutoff
# ---------------------------------------------------------------------------


def killing_fields(model: ModelGeometry) -> dict[str, TensorField]:
    """Translations d/dx_i and rotations x_j e_i - x_i e_j of the Euclidean factor."""
    n, ell = model.n, model.ell
    out: dict[str, TensorField] = {}
    for i in range(model.m):
        unit = jnp.zeros(n).at[ell + i].set(1.0)
        out[f"d{i + 1}"] = TensorField.closed_form(VECTOR, model.chart, lambda x, unit=unit: unit + 0.0 * x)
    for i in range(model.m):
        for j in range(i + 1, model.m):
            a, b = ell + i, ell + j

            def rotation(x, a=a, b=b):
                return jnp.zeros(n).at[a].set(x[b]).at[b].set(-x[a])

            out[f"rot{i + 1}{j + 1}"] = TensorField.closed_form(VECTOR, model.chart, rotation)
    return out


CUTOFF_RAMP = 0.05


def _ramp_primitive(s):
    """Primitive of a C^2 step: zero below 0, x - 1/2 above 1."""
    y = jnp.clip(s, 0.0, 1.0)
    return y**6 - 3.0 * y**5 + 2.5 * y**4 + jnp.maximum(s - 1.0, 0.0)


def cutoff_profile(s, delta: float = CUTOFF_RAMP):
    """Monotone C^2 profile: 0 for s <= 0, 1 for s >= 1, slope at most 1 / (1 - delta)."""
    return delta * (_ramp_primitive(s / delta) - _ramp_primitive((s - 1.0 + delta) / delta)) / (1.0 - delta)


def cutoff(model: ModelGeometry, radius: float, delta: float = CUTOFF_RAMP) -> Field:
    """eta(b): one on {b <= radius - 1}, zero on {b >= radius}."""

    def eta(x):
        return 1.0 - cutoff_profile(model.b(x) - (radius - 1.0), delta)

    return eta


def cutoff_gradient_bound(delta: float = CUTOFF_RAMP) -> float:
    return 1.0 / (1.0 - delta)

"""Variations of phi along g + t h, f + t k, and the Jacobi-field toolkit on cylinders.

Every closed formula below has a finite-difference counterpart in ``t``; the
gap between the two is what the workbench reports.  On a cylinder S^l x R^m,
g^1 is the metric of the sphere factor extended by zero and the kernel K of
L + 1 on the Euclidean factor is spanned by x_i^2 - 2 and x_i x_j.
"""
from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from functools import cached_property

import jax
import jax.numpy as jnp
import numpy as np
from scipy import linalg

from .bases import build_basis, gram
from .calculus import (
    divf_sym2,
    geometry,
    inner_values,
    l_op,
    nabla_values,
    sobolev_norm,
    weighted_norm,
)
from .charts import Chart
from .conf import option
from .convergence import richardson
from .exceptions import ChartError, ModelError, SmallnessError
from .fields import SCALAR, SYM2, VECTOR, Quadrature, TensorField, sample
from .geometry import Field, Geometry, contract
from .model_spaces import CYLINDER, KBasis, ModelGeometry, k_basis, make_gaussian
from .spectral import basis_images

logger = logging.getLogger(__name__)

GENERAL = "general"
SOLITON = "soliton"
FORMULAS = (GENERAL, SOLITON)

STABILITY_EPSILON = 0.1


def _zero_scalar(x):
    return 0.0 * x[0]


def normal_mask(dim: int, ell: int) -> jnp.ndarray:
    return jnp.zeros((dim, dim)).at[:ell, :ell].set(1.0)


def normal_metric(chart: Chart, ell: int) -> Field:
    """g^1: the sphere block of the metric, zero on every other slot."""
    mask = normal_mask(chart.dim, ell)
    return lambda x: chart.metric_eval(x) * mask


def normal_trace(chart: Chart, ell: int, h: Field) -> Field:
    """(1/l) Tr_{g^1} h."""
    geo = geometry(chart)
    mask = normal_mask(chart.dim, ell)
    return lambda x: jnp.sum(geo.inverse_metric(x) * mask * h(x)) / ell


def _require_cylinder(model: ModelGeometry) -> None:
    if model.variant != CYLINDER:
        raise ModelError(f"This operation needs a cylinder, not {model.descriptor}.")


# ---------------------------------------------------------------------------
# Paths
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PerturbationPath:
    """The pair g(t) = g + t h, f(t) = f + t k on a fixed chart."""

    chart: Chart
    h: Field = field(repr=False)
    k: Field = field(repr=False)
    label: str = "custom"

    @classmethod
    def along(cls, h: TensorField, k: TensorField | None = None, label: str = "custom") -> "PerturbationPath":
        if h.rank != SYM2:
            raise ModelError("Metric directions are symmetric 2-tensors.")
        return cls(h.chart, h.function, k.function if k is not None else _zero_scalar, label)

    @classmethod
    def jacobi(cls, model: ModelGeometry, v: Field, amplitude: float = 1.0, label: str = "jacobi") -> "PerturbationPath":
        """h = a v g^1, k = a (l/2) v."""
        _require_cylinder(model)
        g1 = normal_metric(model.chart, model.ell)
        half = 0.5 * model.ell
        return cls(
            model.chart,
            lambda x: amplitude * v(x) * g1(x),
            lambda x: amplitude * half * v(x),
            label,
        )

    @classmethod
    def gauge(cls, chart: Chart, vector: Field, amplitude: float = 1.0, label: str = "gauge") -> "PerturbationPath":
        """h = -2 div_f* W, k = <grad f, W> for a lower-index vector field W."""
        geo = geometry(chart)
        star = geo.divf_star(vector)
        return cls(
            chart,
            lambda x: -2.0 * amplitude * star(x),
            lambda x: amplitude * geo.grad_weight_raised(x) @ vector(x),
            label,
        )

    @classmethod
    def block(cls, chart: Chart, i: int, j: int, amplitude: float = 1.0, label: str = "block") -> "PerturbationPath":
        e = np.zeros((chart.dim, chart.dim))
        e[i, j] = e[j, i] = 1.0
        tensor = jnp.asarray(amplitude * e)
        return cls(chart, lambda x: tensor + 0.0 * x[0], _zero_scalar, label)

    def chart_at(self, t) -> Chart:
        g, f, h, k = self.chart.metric_eval, self.chart.weight_eval, self.h, self.k
        return self.chart.with_evaluators(lambda x: g(x) + t * h(x), lambda x: f(x) + t * k(x))

    @property
    def w(self) -> Field:
        """1/2 Tr_g h - k."""
        geo = geometry(self.chart)
        return lambda x: 0.5 * contract(self.h(x), geo.inverse_metric(x), 0, 1) - self.k(x)

    def quantity(self, name: str):
        """(t, x) -> the Geometry primitive ``name`` of the chart at time t."""

        def value(t, x):
            return getattr(Geometry(self.chart_at(t)), name)(x)

        return value

    @cached_property
    def phi(self):
        return jax.jit(self.quantity("phi"))

    @cached_property
    def phi_nodes(self):
        return jax.jit(jax.vmap(self.quantity("phi"), in_axes=(None, 0)))

    def check_spd(self, t: float, points) -> None:
        metric = sample(self.chart_at(float(t)).metric_eval, np.atleast_2d(points))
        if np.linalg.eigvalsh(metric).min() <= 0.0:
            raise ChartError(f"g + t h is not positive definite at t = {t} on the {self.label} path.")


def phi_of_t(path: PerturbationPath, t: float, x) -> np.ndarray:
    x = path.chart.check_point(x)
    path.chart_at(float(t)).check_spd(x)
    return np.asarray(path.phi(float(t), jnp.asarray(x)))


def phi_nodes(path: PerturbationPath, t: float, nodes: np.ndarray) -> np.ndarray:
    path.check_spd(t, nodes)
    return np.asarray(path.phi_nodes(float(t), jnp.asarray(nodes)))


# ---------------------------------------------------------------------------
# Closed first and second variations
# ---------------------------------------------------------------------------


def christoffel_variation(geo: Geometry, h: Field) -> Field:
    """Gamma'[k, i, j] = 1/2 g^{kl} (h_{li,j} + h_{lj,i} - h_{ij,l})."""
    dh = geo.nabla(h)

    def evaluate(x):
        d = dh(x)
        combo = d + jnp.einsum("lji->lij", d) - jnp.einsum("ijl->lij", d)
        return 0.5 * jnp.einsum("kl,lij->kij", geo.inverse_metric(x), combo)

    return evaluate


def ricci_variation(geo: Geometry, h: Field) -> Field:
    """Ric' = 1/2 (h_{jk,ki} + h_{ik,kj} - 2 R(h) + Ric h + h Ric - Delta h - Hess Tr h)."""
    d2h = geo.nabla(geo.nabla(h))
    hess_trace = geo.hessian(geo.trace(h))
    curvature = geo.curvature_operator(h)

    def evaluate(x):
        g_inv = geo.inverse_metric(x)
        d2 = d2h(x)
        cross = jnp.einsum("jkmi,km->ij", d2, g_inv)
        ric_h = geo.ricci(x) @ g_inv @ h(x)
        lap = jnp.einsum("ijkm,km->ij", d2, g_inv)
        return 0.5 * (cross + cross.T - 2.0 * curvature(x) + ric_h + ric_h.T - lap - hess_trace(x))

    return evaluate


def scalar_variation(geo: Geometry, h: Field) -> Field:
    """S' = -Delta Tr h + h_{jk,jk} - <Ric, h>."""
    d2h = geo.nabla(geo.nabla(h))
    hess_trace = geo.hessian(geo.trace(h))

    def evaluate(x):
        g_inv = geo.inverse_metric(x)
        double_div = jnp.einsum("jkab,ja,kb->", d2h(x), g_inv, g_inv)
        pairing = jnp.trace(g_inv @ geo.ricci(x) @ g_inv @ h(x))
        return -contract(hess_trace(x), g_inv, 0, 1) + double_div - pairing

    return evaluate


def weight_hessian_variation(geo: Geometry, h: Field, k: Field) -> Field:
    """Hess_f' = Hess_k - Gamma'^m_{ij} f_m."""
    hess_k = geo.hessian(k)
    gamma = christoffel_variation(geo, h)
    return lambda x: hess_k(x) - jnp.einsum("mij,m->ij", gamma(x), geo.grad_weight(x))


def phi_variation(geo: Geometry, h: Field, k: Field) -> Field:
    """kappa h - Ric' - Hess_f'; valid on any background."""
    ric = ricci_variation(geo, h)
    hess = weight_hessian_variation(geo, h, k)
    return lambda x: geo.kappa * h(x) - ric(x) - hess(x)


def phi_variation_soliton(geo: Geometry, h: Field, k: Field) -> Field:
    """1/2 L h + Hess_w + div_f* div_f h with w = 1/2 Tr h - k; valid on shrinkers."""
    lh = geo.l_operator(h)
    hess_w = geo.hessian(lambda x: 0.5 * contract(h(x), geo.inverse_metric(x), 0, 1) - k(x))
    star_div = geo.divf_star(geo.divf_sym2(h))
    return lambda x: 0.5 * lh(x) + hess_w(x) + star_div(x)


def phi_second_variation(geo: Geometry, ell: int, u: Field) -> Field:
    """phi'' along h = u g^1, k = (l/2) u:  -|grad u|^2 g^1 - l u Hess_u - (l/2) du du."""
    grad = geo.gradient(u)
    hess = geo.hessian(u)
    mask = normal_mask(geo.dim, ell)

    def evaluate(x):
        du = grad(x)
        norm2 = du @ geo.inverse_metric(x) @ du
        return -norm2 * geo.metric(x) * mask - ell * u(x) * hess(x) - 0.5 * ell * jnp.outer(du, du)

    return evaluate


QUANTITIES = {
    "christoffel": ("christoffel", lambda geo, path: christoffel_variation(geo, path.h)),
    "ricci": ("ricci", lambda geo, path: ricci_variation(geo, path.h)),
    "scalar": ("scalar_curvature", lambda geo, path: scalar_variation(geo, path.h)),
    "hessian": ("hess_weight", lambda geo, path: weight_hessian_variation(geo, path.h, path.k)),
    "phi": ("phi", lambda geo, path: phi_variation(geo, path.h, path.k)),
    "phi_soliton": ("phi", lambda geo, path: phi_variation_soliton(geo, path.h, path.k)),
}


@dataclass(frozen=True)
class VariationGap:
    quantity: str
    point: tuple[float, ...]
    formula_norm: float
    steps: tuple[float, ...]
    gaps: tuple[float, ...]
    order: float

    @property
    def gap(self) -> float:
        return self.gaps[-1]

    def as_dict(self) -> dict:
        return {
            "quantity": self.quantity,
            "point": list(self.point),
            "formula_norm": self.formula_norm,
            "steps": list(self.steps),
            "gaps": list(self.gaps),
            "order": self.order,
        }


def _step_levels(step: float | None, levels: int) -> tuple[float, ...]:
    step = float(step if step is not None else option("t_step"))
    return tuple(step / 2**j for j in range(levels))


def variation_gap(
    path: PerturbationPath, x, quantity: str = "phi_soliton", step: float | None = None, levels: int = 2
) -> VariationGap:
    """Centered t-difference of a geometric quantity against its closed first variation."""
    try:
        attr, build = QUANTITIES[quantity]
    except KeyError:
        raise ValueError(f"Unknown quantity {quantity!r}; choose from {sorted(QUANTITIES)}.") from None
    x = path.chart.check_point(x)
    steps = _step_levels(step, levels)
    path.check_spd(steps[0], x)
    path.check_spd(-steps[0], x)

    value = jax.jit(path.quantity(attr))
    expected = np.asarray(build(geometry(path.chart), path)(jnp.asarray(x)))
    gaps = []
    for s in steps:
        fd = (np.asarray(value(s, x)) - np.asarray(value(-s, x))) / (2.0 * s)
        gaps.append(float(np.abs(fd - expected).max()))
    order = richardson(gaps, steps).order
    logger.debug("%s variation on %s: gaps %s, order %.2f", quantity, path.label, gaps, order)
    return VariationGap(quantity, tuple(x.tolist()), float(np.abs(expected).max()), steps, tuple(gaps), order)


def first_variation_gap(
    path: PerturbationPath, x, step: float | None = None, formula: str = SOLITON, levels: int = 2
) -> VariationGap:
    if formula not in FORMULAS:
        raise ValueError(f"Unknown formula {formula!r}; use one of {FORMULAS}.")
    return variation_gap(path, x, "phi_soliton" if formula == SOLITON else "phi", step, levels)


def _check_euclidean_only(model: ModelGeometry, u: Field, points) -> None:
    grad = sample(model.geometry.gradient(u), points)
    leak = float(np.abs(grad[:, : model.ell]).max())
    if leak > 1e-12:
        raise ModelError(f"u varies along the sphere factor (|d_y u| = {leak:.3e}).")


def second_variation_gap(
    model: ModelGeometry, u: Field, x, step: float | None = None, levels: int = 2
) -> VariationGap:
    """Second centered t-difference of phi along h = u g^1, k = (l/2) u against the closed phi''."""
    _require_cylinder(model)
    x = model.chart.check_point(x)
    _check_euclidean_only(model, u, np.vstack([x, model.sample_points()]))
    path = PerturbationPath.jacobi(model, u)
    steps = _step_levels(step, levels)
    path.check_spd(steps[0], x)
    path.check_spd(-steps[0], x)

    expected = np.asarray(phi_second_variation(model.geometry, model.ell, u)(jnp.asarray(x)))
    center = np.asarray(path.phi(0.0, x))
    gaps = []
    for s in steps:
        fd = (np.asarray(path.phi(s, x)) - 2.0 * center + np.asarray(path.phi(-s, x))) / s**2
        gaps.append(float(np.abs(fd - expected).max()))
    order = richardson(gaps, steps).order
    return VariationGap("phi_second", tuple(x.tolist()), float(np.abs(expected).max()), steps, tuple(gaps), order)


# ---------------------------------------------------------------------------
# Jacobi decomposition and the kernel K
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class JacobiDecomposition:
    u: TensorField
    h0: TensorField
    h2: TensorField
    psi: TensorField | None
    reconstruction_error: float
    orthogonality: float
    trace_free_defect: float


def jacobi_decompose(
    model: ModelGeometry, h: TensorField, k: TensorField | None = None, order: int = 4
) -> JacobiDecomposition:
    """h = u g^1 + h0 + h2: sphere trace part, trace-free sphere block, everything else."""
    _require_cylinder(model)
    if h.rank != SYM2:
        raise ModelError("Only symmetric 2-tensors decompose.")
    chart, ell = model.chart, model.ell
    hf = h.function
    mask = normal_mask(chart.dim, ell)
    g1 = normal_metric(chart, ell)
    u = normal_trace(chart, ell, hf)

    def h0(x):
        return hf(x) * mask - u(x) * g1(x)

    def h2(x):
        return hf(x) * (1.0 - mask)

    psi = None
    if k is not None:
        kf = k.function
        psi = TensorField.closed_form(SCALAR, chart, lambda x: kf(x) - 0.5 * ell * u(x))

    q = model.weighted_quadrature(order, 2)
    g_inv = sample(geometry(chart).inverse_metric, q.nodes)
    values = h.sample(q)
    pure = sample(lambda x: u(x) * g1(x), q.nodes)
    block = sample(h0, q.nodes)
    rest = sample(h2, q.nodes)
    error = float(np.abs(pure + block + rest - values).max())
    orthogonality = max(
        float(np.abs(inner_values(a, b, g_inv)).max()) for a, b in ((pure, block), (pure, rest), (block, rest))
    )
    trace_free = float(np.abs(np.einsum("nab,nab->n", block, g_inv)).max())
    return JacobiDecomposition(
        u=TensorField.closed_form(SCALAR, chart, u),
        h0=TensorField.closed_form(SYM2, chart, h0),
        h2=TensorField.closed_form(SYM2, chart, h2),
        psi=psi,
        reconstruction_error=error,
        orthogonality=orthogonality,
        trace_free_defect=trace_free,
    )


@dataclass(frozen=True, eq=False)
class KProjection:
    basis: KBasis
    chart: Chart
    coefficients: np.ndarray
    remainder: float
    source_norm: float
    projected_norm: float
    idempotence: float

    @property
    def labels(self) -> tuple[str, ...]:
        return self.basis.labels

    @property
    def field(self) -> TensorField:
        return self.basis.field(self.chart, self.coefficients)

    def as_dict(self) -> dict:
        return {
            "coefficients": dict(zip(self.labels, self.coefficients.tolist())),
            "remainder": self.remainder,
            "source_norm": self.source_norm,
            "projected_norm": self.projected_norm,
        }


def _k_quadrature(model: ModelGeometry, order: int | None) -> Quadrature:
    return model.weighted_quadrature(order or 8, 2 if model.variant == CYLINDER else None)


def project_K(model: ModelGeometry, u: TensorField, order: int | None = None) -> KProjection:
    """Weighted L^2 projection of a scalar field onto span K."""
    if u.rank != SCALAR:
        raise ModelError("Only scalar fields project onto K.")
    basis = k_basis(model.m).on(model)
    q = _k_quadrature(model, order)
    w = q.weights * q.density()
    elements = np.stack([sample(basis.element(i), q.nodes) for i in range(basis.size)])
    values = u.sample(q)
    matrix = (elements * w) @ elements.T
    coeffs = linalg.solve(matrix, (elements * w) @ values, assume_a="pos")
    total = float(np.sum(w * values**2))
    captured = float(coeffs @ matrix @ coeffs)
    again = linalg.solve(matrix, (elements * w) @ (coeffs @ elements), assume_a="pos")
    return KProjection(
        basis=basis,
        chart=model.chart,
        coefficients=coeffs,
        remainder=math.sqrt(max(total - captured, 0.0)),
        source_norm=math.sqrt(total),
        projected_norm=math.sqrt(max(captured, 0.0)),
        idempotence=float(np.abs(again - coeffs).max()),
    )


@dataclass(frozen=True)
class CenterOfMass:
    vector: np.ndarray
    mass: float

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))

    def balancing_translation(self) -> np.ndarray:
        """Euclidean translation a whose pullback cancels the vector to first order."""
        return -self.vector / self.mass


def center_of_mass(
    model: ModelGeometry, h: TensorField | None, k: TensorField | None, q: Quadrature
) -> CenterOfMass:
    """B_i = integral of x_i (k - 1/2 Tr h) e^{-f} on the Euclidean coordinates."""
    integrand = np.zeros(q.size)
    if k is not None:
        integrand = integrand + k.sample(q)
    if h is not None:
        g_inv = sample(geometry(q.chart).inverse_metric, q.nodes)
        integrand = integrand - 0.5 * np.einsum("nab,nab->n", h.sample(q), g_inv)
    coords = q.nodes[:, model.ell :]
    vector = np.array([q.integrate(coords[:, i] * integrand) for i in range(model.m)])
    return CenterOfMass(vector, q.total_mass())


def _ratio(lhs: float, rhs: float) -> float:
    if rhs > 0.0:
        return lhs / rhs
    return 0.0 if lhs == 0.0 else math.inf


def jacobi_tensor(model: ModelGeometry, v: Field) -> TensorField:
    g1 = normal_metric(model.chart, model.ell)
    return TensorField.closed_form(SYM2, model.chart, lambda x: v(x) * g1(x))


@dataclass(frozen=True)
class JacobiApproximation:
    coefficients: np.ndarray
    lhs: float
    l_norm: float
    divf_norm: float

    @property
    def rhs(self) -> float:
        return self.l_norm + self.divf_norm

    @property
    def ratio(self) -> float:
        return _ratio(self.lhs, self.rhs)


def jacobi_approx_probe(
    model: ModelGeometry, h: TensorField, order: int = 6, sphere_order: int = 2
) -> JacobiApproximation:
    """||h - v g^1||_{W^{2,2}} against ||L h|| + ||div_f h||, v the K-projection of the sphere trace."""
    _require_cylinder(model)
    trace = TensorField.closed_form(SCALAR, model.chart, normal_trace(model.chart, model.ell, h.function))
    projection = project_K(model, trace, order)
    v = projection.basis.evaluator(projection.coefficients)
    jf = jacobi_tensor(model, v).function
    hf = h.function
    residual = TensorField.closed_form(SYM2, model.chart, lambda x: hf(x) - jf(x))
    q = model.weighted_quadrature(order, sphere_order)
    return JacobiApproximation(
        coefficients=projection.coefficients,
        lhs=sobolev_norm(residual, q, 2),
        l_norm=weighted_norm(l_op(h), q),
        divf_norm=weighted_norm(divf_sym2(h), q),
    )


# -- K identities on the Gaussian factor ------------------------------------


def _quadratic(a, x):
    return x @ a @ x - 2.0 * jnp.trace(a)


_grad_quadratic = jax.grad(_quadratic, argnums=1)
_hess_quadratic = jax.hessian(_quadratic, argnums=1)


def _grad_squared(a, x):
    du = _grad_quadratic(a, x)
    return du @ du


def _k_pieces(a, x):
    # the Euclidean factor is flat, so covariant derivatives are partials
    lap = jnp.trace(jax.hessian(_grad_squared, argnums=1)(a, x))
    return _quadratic(a, x), _grad_quadratic(a, x), _hess_quadratic(a, x), _grad_squared(a, x) - lap


_K_SWEEP = jax.jit(jax.vmap(_k_pieces, in_axes=(None, 0)))


@dataclass(frozen=True)
class KFieldReport:
    coefficients: np.ndarray
    v_norm2: float
    grad_norm2: float
    hess_norm2: float
    u_norm2: float
    u_pairing: float
    membership_remainder: float

    @property
    def constant(self) -> float:
        """||u||^2 / ||v||^4."""
        return _ratio(self.u_norm2, self.v_norm2**2)

    @property
    def gaps(self) -> dict[str, float]:
        scale = max(self.v_norm2, 1e-300)
        return {
            "grad": abs(self.grad_norm2 - self.v_norm2) / scale,
            "hess": abs(2.0 * self.hess_norm2 - self.v_norm2) / scale,
            "pairing": abs(self.u_pairing - self.u_norm2) / max(self.u_norm2, 1e-300),
            "membership": self.membership_remainder / max(math.sqrt(self.u_norm2), 1e-300),
        }


def kfield_identities(m: int, coeffs, order: int = 6) -> KFieldReport:
    """Norm identities of v in K and of u = |grad v|^2 - Delta |grad v|^2 on the Gaussian R^m."""
    basis = k_basis(m)
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (basis.size,):
        raise ModelError(f"Expected {basis.size} K coefficients, got {coeffs.shape}.")
    a = sum(c * mat for c, mat in zip(coeffs, basis.matrices()))
    q = make_gaussian(m).weighted_quadrature(order)
    v, grad, hess, u = (np.asarray(part) for part in _K_SWEEP(jnp.asarray(a), jnp.asarray(q.nodes)))
    grad_sq = np.sum(grad**2, axis=1)

    w = q.weights
    elements = np.stack([sample(basis.element(i), q.nodes) for i in range(basis.size)])
    matrix = (elements * w) @ elements.T
    projection = linalg.solve(matrix, (elements * w) @ u, assume_a="pos")
    remainder = math.sqrt(max(float(np.sum(w * (u - projection @ elements) ** 2)), 0.0))
    return KFieldReport(
        coefficients=coeffs,
        v_norm2=q.integrate(v**2),
        grad_norm2=q.integrate(grad_sq),
        hess_norm2=q.integrate(np.sum(hess**2, axis=(1, 2))),
        u_norm2=q.integrate(u**2),
        u_pairing=q.integrate(u * grad_sq),
        membership_remainder=remainder,
    )


def k_constant_sample(m: int, count: int = 16, seed: int | None = None) -> np.ndarray:
    """||u||^2 / ||v||^4 over random directions of K normalised to ||v|| = 1."""
    rng = np.random.default_rng(option("seed") if seed is None else seed)
    size = k_basis(m).size
    out = []
    for _ in range(count):
        coeffs = rng.standard_normal(size)
        first = kfield_identities(m, coeffs)
        out.append(kfield_identities(m, coeffs / math.sqrt(first.v_norm2)).constant)
    return np.array(out)


# -- stability and non-integrability ------------------------------------------


@dataclass(frozen=True)
class StabilityReport:
    hhat_w22: float
    grad_psi_w12: float
    phi_norm: float
    phi_moment: float
    divf_w12: float
    center: float
    u_norm: float
    c2_size: float
    epsilon: float

    @property
    def first_lhs(self) -> float:
        return self.hhat_w22**2 + self.grad_psi_w12**2

    @property
    def first_rhs(self) -> float:
        return self.phi_norm**2 + self.divf_w12**2 + self.center**2 + self.u_norm**4

    @property
    def second_lhs(self) -> float:
        return self.u_norm**2

    @property
    def second_rhs(self) -> float:
        p = 2.0 - self.epsilon
        return (
            self.u_norm**3 + self.phi_moment + self.phi_norm**p + self.center**p + self.divf_w12**p
        )

    @property
    def first_constant(self) -> float:
        return _ratio(self.first_lhs, self.first_rhs)

    @property
    def second_constant(self) -> float:
        return _ratio(self.second_lhs, self.second_rhs)

    def as_dict(self) -> dict:
        return {
            "hhat_w22": self.hhat_w22,
            "grad_psi_w12": self.grad_psi_w12,
            "phi_norm": self.phi_norm,
            "phi_moment": self.phi_moment,
            "divf_w12": self.divf_w12,
            "center": self.center,
            "u_norm": self.u_norm,
            "c2_size": self.c2_size,
            "first_constant": self.first_constant,
            "second_constant": self.second_constant,
        }


def _c2_size(h: TensorField, k: TensorField, q: Quadrature) -> float:
    g_inv = sample(geometry(q.chart).inverse_metric, q.nodes)
    total = np.zeros(q.size)
    for values in nabla_values(h, q, 2):
        total += np.sqrt(np.maximum(inner_values(values, values, g_inv), 0.0))
    for values in nabla_values(k, q, 2)[1:]:
        total += np.sqrt(np.maximum(inner_values(values, values, g_inv), 0.0))
    return float(total.max())


def stability_probe(
    model: ModelGeometry,
    h: TensorField,
    k: TensorField,
    order: int = 6,
    sphere_order: int = 2,
    smallness: float | None = None,
    epsilon: float = STABILITY_EPSILON,
) -> StabilityReport:
    """Every term of the two stability inequalities for the pair (h, k); constants are recorded, not asserted."""
    _require_cylinder(model)
    chart, ell = model.chart, model.ell
    q = model.weighted_quadrature(order, sphere_order)
    limit = float(smallness if smallness is not None else option("smallness"))
    size = _c2_size(h, k, q)
    if size > limit:
        raise SmallnessError(f"||h||_C2 + ||grad k||_C1 = {size:.3e} exceeds {limit:.3e}.")

    trace = TensorField.closed_form(SCALAR, chart, normal_trace(chart, ell, h.function))
    projection = project_K(model, trace, order)
    u = projection.basis.evaluator(projection.coefficients)
    jf = jacobi_tensor(model, u).function
    hf, kf = h.function, k.function
    hhat = TensorField.closed_form(SYM2, chart, lambda x: hf(x) - jf(x))
    psi = TensorField.closed_form(SCALAR, chart, lambda x: kf(x) - 0.5 * ell * u(x))

    g_inv = sample(geometry(chart).inverse_metric, q.nodes)
    psi_terms = nabla_values(psi, q, 2)[1:]
    grad_psi = math.sqrt(max(sum(q.integrate(inner_values(v, v, g_inv)) for v in psi_terms), 0.0))

    phi1 = phi_nodes(PerturbationPath.along(h, k, "stability"), 1.0, q.nodes)
    pointwise = np.sqrt(np.maximum(inner_values(phi1, phi1, g_inv), 0.0))
    radial = 1.0 + np.sum(q.nodes[:, ell:] ** 2, axis=1)

    u_values = sample(u, q.nodes)
    return StabilityReport(
        hhat_w22=sobolev_norm(hhat, q, 2),
        grad_psi_w12=grad_psi,
        phi_norm=math.sqrt(max(q.integrate(pointwise**2), 0.0)),
        phi_moment=q.integrate(pointwise * radial),
        divf_w12=sobolev_norm(divf_sym2(h), q, 1),
        center=center_of_mass(model, h, k, q).norm,
        u_norm=math.sqrt(max(q.integrate(u_values**2), 0.0)),
        c2_size=size,
        epsilon=epsilon,
    )


@dataclass(frozen=True)
class NonIntegrability:
    pairing: float
    expected: float

    @property
    def relative_gap(self) -> float:
        return abs(self.pairing - self.expected) / max(abs(self.expected), 1e-300)


def nonintegrability_pairing(
    model: ModelGeometry, coeffs, step: float | None = None, order: int = 4, sphere_order: int = 2
) -> NonIntegrability:
    """Weighted pairing of phi'' (by t-differences) with u g^1 against -l times the integral of u |grad v|^2."""
    _require_cylinder(model)
    v = KBasis(model.m).on(model).evaluator(coeffs)
    geo = model.geometry

    def grad_sq(x):
        du = geo.gradient(v)(x)
        return du @ geo.inverse_metric(x) @ du

    lap = geo.trace(geo.hessian(grad_sq))

    def u(x):
        return grad_sq(x) - lap(x)

    q = model.weighted_quadrature(order, sphere_order)
    s = float(step if step is not None else option("t_step"))
    path = PerturbationPath.jacobi(model, v)
    second = (phi_nodes(path, s, q.nodes) - 2.0 * phi_nodes(path, 0.0, q.nodes) + phi_nodes(path, -s, q.nodes)) / s**2

    g_inv = sample(geo.inverse_metric, q.nodes)
    u_values = sample(u, q.nodes)
    direction = u_values[:, None, None] * sample(normal_metric(model.chart, model.ell), q.nodes)
    pairing = q.integrate(inner_values(second, direction, g_inv))
    expected = -model.ell * q.integrate(u_values * sample(grad_sq, q.nodes))
    return NonIntegrability(pairing, expected)


def jacobi_field_defects(model: ModelGeometry, coeffs, order: int = 4) -> dict[str, float]:
    """Weighted norms of div_f(v g^1) and L(v g^1)."""
    _require_cylinder(model)
    tensor = jacobi_tensor(model, KBasis(model.m).on(model).evaluator(coeffs))
    q = model.weighted_quadrature(order, 2)
    return {"divf": weighted_norm(divf_sym2(tensor), q), "L": weighted_norm(l_op(tensor), q)}


@dataclass(frozen=True)
class JacobiOrthogonality:
    hessian_pairing: float
    star_pairing: float
    directions: int

    @property
    def worst(self) -> float:
        return max(self.hessian_pairing, self.star_pairing)


def jacobi_orthogonality(
    model: ModelGeometry, coeffs, degree: int = 2, sphere_degree: int = 1
) -> JacobiOrthogonality:
    """Largest weighted pairing of v g^1 with Hess of scalar elements and div_f* of vector elements."""
    _require_cylinder(model)
    jf = jacobi_tensor(model, KBasis(model.m).on(model).evaluator(coeffs)).function
    out = []
    directions = 0
    for rank, name in ((SCALAR, "hess"), (VECTOR, "divf_star")):
        basis = build_basis(model, rank, degree, sphere_degree)
        images = basis_images(basis, name)
        values = sample(jf, basis.quadrature.nodes)[:, None]
        out.append(float(np.abs(gram(values, images, basis.quadrature)).max()))
        directions += basis.size
    return JacobiOrthogonality(out[0], out[1], directions)


# -- moment inequality --------------------------------------------------------


@dataclass(frozen=True)
class MomentBound:
    lhs: float
    norm_power: float
    constant: float
    envelope_excess: float

    @property
    def rhs(self) -> float:
        return self.constant * self.norm_power

    @property
    def holds(self) -> bool:
        return self.envelope_excess <= 0.0 and self.lhs <= self.rhs


def moment_bound(m: int, eta: Field, p: float, q_exp: float, epsilon: float, order: int = 40) -> MomentBound:
    """Both sides of the Holder bound on the Gaussian R^m:
    int eta^2 |x|^p <= c ||eta||^(2 - eps) with c = ||(1 + |x|^q) |x|^p||_{L^(2/eps)},
    valid whenever |eta| <= 1 + |x|^q.
    """
    if not 0.0 < epsilon < 0.5:
        raise ValueError("epsilon must lie in (0, 1/2).")
    q = make_gaussian(m).weighted_quadrature(order)
    radius = np.linalg.norm(q.nodes, axis=1)
    values = sample(eta, q.nodes)
    envelope = 1.0 + radius**q_exp
    weight = envelope * radius**p
    return MomentBound(
        lhs=q.integrate(values**2 * radius**p),
        norm_power=q.integrate(values**2) ** ((2.0 - epsilon) / 2.0),
        constant=q.integrate(weight ** (2.0 / epsilon)) ** (epsilon / 2.0),
        envelope_excess=float((np.abs(values) - envelope).max()),
    )


# ---------------------------------------------------------------------------
# Named directions
# ---------------------------------------------------------------------------

_DIRECTION = re.compile(r"^\s*(jacobi|gauge|block)\s*:\s*(.+?)\s*$")
_GRADIENT = re.compile(r"^W\s*=\s*grad\((.+)\)$")
_BLOCK = re.compile(r"^dx(\d+)\s*dx(\d+)$")


def _k_element(model: ModelGeometry, label: str) -> Field:
    basis = KBasis(model.m).on(model)
    try:
        return basis.element(basis.labels.index(label.replace(" ", "")))
    except ValueError:
        raise ModelError(f"Unknown K element {label!r}; choose from {basis.labels}.") from None


def parse_direction(model: ModelGeometry, text: str, amplitude: float = 1.0) -> PerturbationPath:
    """``jacobi:x1^2-2``, ``gauge:W=grad(x1^2-2)`` or ``block:dx1dx1``."""
    match = _DIRECTION.match(text or "")
    if not match:
        raise ModelError(f"Cannot parse direction {text!r}.")
    kind, body = match.groups()
    if kind == "jacobi":
        return PerturbationPath.jacobi(model, _k_element(model, body), amplitude, label=text)
    if kind == "gauge":
        inner = _GRADIENT.match(body)
        if not inner:
            raise ModelError(f"Gauge directions are written W=grad(<K element>), got {body!r}.")
        vector = model.geometry.gradient(_k_element(model, inner.group(1)))
        return PerturbationPath.gauge(model.chart, vector, amplitude, label=text)
    block = _BLOCK.match(body.replace(" ", ""))
    if not block:
        raise ModelError(f"Block directions are written dx<i>dx<j>, got {body!r}.")
    i, j = (model.ell + int(index) - 1 for index in block.groups())
    if not (model.ell <= i < model.n and model.ell <= j < model.n):
        raise ModelError(f"Block indices in {body!r} exceed the Euclidean dimension {model.m}.")
    return PerturbationPath.block(model.chart, i, j, amplitude, label=text)

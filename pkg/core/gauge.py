"""Diffeomorphism flows, pullbacks and the iterative gauge fix.

Flows are time-one maps of a covector field, raised with the background
metric and integrated with classical RK4; Jacobians come from forward-mode
differentiation through the integrator.  The gauge loop works on grid
samples over a box and solves P Y = div_f h / 2 in the spectral basis.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field

import jax
import jax.numpy as jnp
import numpy as np
from scipy import ndimage

from .bases import SpectralBasis, build_basis
from .calculus import divf_sym2, geometry, inner_values, same_chart, sobolev_norm
from .charts import Chart
from .conf import option
from .convergence import richardson
from .exceptions import FlowError, GaugeDivergenceError, ModelError, RepresentationError
from .fields import SCALAR, SYM2, VECTOR, Grid, Quadrature, TensorField, sample
from .geometry import Field, Geometry, contract
from .model_spaces import ModelGeometry, cutoff
from .spectral import PoissonSolution, solve_P
from .variation import center_of_mass

logger = logging.getLogger(__name__)

SPLINE_ORDER = 3
ROUND_TRIP_FACTOR = 10.0


# ---------------------------------------------------------------------------
# Pointwise flows
# ---------------------------------------------------------------------------


def rk4_flow(geo: Geometry, vector: Field, steps: int):
    """(x, s) -> time-one RK4 image of x under the flow of s V^sharp."""
    dt = 1.0 / steps

    def velocity(y, s):
        return s * (geo.inverse_metric(y) @ vector(y))

    def flow(x, s=1.0):
        def step(y, _):
            k1 = velocity(y, s)
            k2 = velocity(y + 0.5 * dt * k1, s)
            k3 = velocity(y + 0.5 * dt * k2, s)
            k4 = velocity(y + dt * k3, s)
            return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), None

        y, _ = jax.lax.scan(step, x, None, length=steps)
        return y

    return flow


def pulled_back(chart: Chart, vector: Field, h: Field | None = None, k: Field | None = None, steps: int | None = None):
    """Closed forms (x, s) -> Phi_s^*(g + h) - g and (f + k) o Phi_s - f."""
    geo = geometry(chart)
    flow = rk4_flow(geo, vector, int(option("flow_steps", steps)))
    jacobian = jax.jacfwd(flow)
    g, f = chart.metric_eval, chart.weight_eval

    def metric(x, s):
        y = flow(x, s)
        j = jacobian(x, s)
        total = g(y) if h is None else g(y) + h(y)
        return j.T @ total @ j - g(x)

    def weight(x, s):
        y = flow(x, s)
        total = f(y) if k is None else f(y) + k(y)
        return total - f(x)

    return metric, weight


def lie_derivative(geo: Geometry, vector: Field, h: Field | None = None) -> Field:
    """d/dt of Phi_t^*(g + h) at t = 0: -2 div_f* V + V^k_i h_jk + V^k h_ij,k + V^k_j h_ik."""
    star = geo.divf_star(vector)
    if h is None:
        return lambda x: -2.0 * star(x)
    dv = geo.nabla(vector)
    dh = geo.nabla(h)

    def evaluate(x):
        g_inv = geo.inverse_metric(x)
        transport = (g_inv @ dv(x)).T @ h(x)
        return -2.0 * star(x) + transport + transport.T + jnp.einsum("k,ijk->ij", g_inv @ vector(x), dh(x))

    return evaluate


@dataclass(frozen=True)
class AmplitudeSweep:
    label: str
    amplitudes: tuple[float, ...]
    residuals: tuple[float, ...]
    power: float

    @property
    def finest(self) -> float:
        return self.residuals[-1]

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "amplitudes": list(self.amplitudes),
            "residuals": list(self.residuals),
            "power": self.power,
        }


def _dyadic(start: float, levels: int) -> tuple[float, ...]:
    return tuple(start / 2**j for j in range(levels))


def linearization_gap(
    chart: Chart,
    vector: Field,
    points,
    h: Field | None = None,
    step: float = 1e-2,
    levels: int = 4,
    steps: int | None = None,
) -> AmplitudeSweep:
    """Centered t-difference of the pulled-back metric against the Lie-derivative formula."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    metric, _ = pulled_back(chart, vector, h, None, steps)
    sweep = jax.jit(jax.vmap(metric, in_axes=(0, None)))
    expected = sample(lie_derivative(geometry(chart), vector, h), points)
    amplitudes = _dyadic(step, levels)
    gaps = []
    for s in amplitudes:
        fd = (np.asarray(sweep(points, s)) - np.asarray(sweep(points, -s))) / (2.0 * s)
        gaps.append(float(np.abs(fd - expected).max()))
    return AmplitudeSweep("linearization", amplitudes, tuple(gaps), richardson(gaps, amplitudes).order)


def divf_quadratic_gap(
    model: ModelGeometry,
    vector: Field,
    h: Field | None = None,
    amplitude: float = 1e-1,
    levels: int = 4,
    order: int = 4,
    steps: int | None = None,
) -> AmplitudeSweep:
    """||div_f(Phi^*(g + a h) - g) - a div_f h + 2 a P V|| for the flow of a V, over dyadic a."""
    geo = model.geometry
    chart = model.chart
    q = model.weighted_quadrature(order, 2 if model.ell else None)
    flow = rk4_flow(geo, vector, int(option("flow_steps", steps)))
    jacobian = jax.jacfwd(flow)
    g = chart.metric_eval
    p_v = geo.p_operator(vector)
    div_h = geo.divf_sym2(h) if h is not None else None

    def residual(x, a):
        def pulled(y):
            total = g(flow(y, a)) if h is None else g(flow(y, a)) + a * h(flow(y, a))
            j = jacobian(y, a)
            return j.T @ total @ j - g(y)

        out = geo.divf_sym2(pulled)(x) + 2.0 * a * p_v(x)
        return out if div_h is None else out - a * div_h(x)

    sweep = jax.jit(jax.vmap(residual, in_axes=(0, None)))
    g_inv = sample(geo.inverse_metric, q.nodes)
    amplitudes = _dyadic(amplitude, levels)
    norms = []
    for a in amplitudes:
        values = np.asarray(sweep(jnp.asarray(q.nodes), a))
        norms.append(math.sqrt(max(q.integrate(inner_values(values, values, g_inv)), 0.0)))
    return AmplitudeSweep("divf_quadratic", amplitudes, tuple(norms), richardson(norms, amplitudes).order)


@dataclass(frozen=True)
class CenterDerivative:
    formula: np.ndarray
    translation_part: np.ndarray
    bound: np.ndarray
    sweep: AmplitudeSweep

    @property
    def bound_holds(self) -> bool:
        return bool(np.all(np.abs(self.formula - self.translation_part) <= self.bound * (1.0 + 1e-9) + 1e-14))


def center_derivative(model: ModelGeometry, vector: Field, h: Field | None, k: Field | None, q: Quadrature):
    """F^i(V) = int <x_i grad(k - Tr h / 2) + div_f(x_i h) + d_i, V> e^{-f}, its translation part and bound."""
    geo = model.geometry
    ell = model.ell
    g_inv = sample(geo.inverse_metric, q.nodes)
    metric = sample(geo.metric, q.nodes)
    v = sample(vector, q.nodes)
    v_norm = np.sqrt(np.maximum(np.einsum("na,nab,nb->n", v, g_inv, v), 0.0))
    coords = q.nodes[:, ell:]

    def potential(x):
        out = 0.0 * x[0] if k is None else k(x)
        if h is not None:
            out = out - 0.5 * contract(h(x), geo.inverse_metric(x), 0, 1)
        return out

    grad_w = sample(geo.gradient(potential), q.nodes)
    formula, translation, bound = [], [], []
    for i in range(model.m):
        unit = metric[:, :, ell + i]
        translation.append(q.integrate(np.einsum("na,nab,nb->n", unit, g_inv, v)))
        if h is None:
            div_xh = np.zeros_like(v)
        else:
            div_xh = sample(geo.divf_sym2(lambda x, i=i: x[ell + i] * h(x)), q.nodes)
        covector = coords[:, i : i + 1] * grad_w + div_xh + unit
        formula.append(q.integrate(np.einsum("na,nab,nb->n", covector, g_inv, v)))
        size = np.abs(coords[:, i]) * _pointwise_norm(grad_w, g_inv) + _pointwise_norm(div_xh, g_inv)
        bound.append(q.integrate(v_norm * size))
    return np.array(formula), np.array(translation), np.array(bound)


def _pointwise_norm(values: np.ndarray, g_inv: np.ndarray) -> np.ndarray:
    return np.sqrt(np.maximum(inner_values(values, values, g_inv), 0.0))


def cb_derivative_gap(
    model: ModelGeometry,
    vector: Field,
    h: Field | None = None,
    k: Field | None = None,
    step: float = 1e-2,
    levels: int = 4,
    order: int = 6,
    steps: int | None = None,
) -> CenterDerivative:
    """Centered t-difference of the center of mass along the flow of V against F(V)."""
    q = model.weighted_quadrature(order, 2 if model.ell else None)
    metric, weight = pulled_back(model.chart, vector, h, k, steps)
    sweep_h = jax.jit(jax.vmap(metric, in_axes=(0, None)))
    sweep_k = jax.jit(jax.vmap(weight, in_axes=(0, None)))
    nodes = jnp.asarray(q.nodes)
    g_inv = sample(model.geometry.inverse_metric, q.nodes)
    coords = q.nodes[:, model.ell :]

    # e^{-f} stays the background one
    def center(s):
        trace = np.einsum("nab,nab->n", np.asarray(sweep_h(nodes, s)), g_inv)
        integrand = np.asarray(sweep_k(nodes, s)) - 0.5 * trace
        return np.array([q.integrate(coords[:, i] * integrand) for i in range(model.m)])

    formula, translation, bound = center_derivative(model, vector, h, k, q)
    amplitudes = _dyadic(step, levels)
    gaps = []
    for s in amplitudes:
        fd = (center(s) - center(-s)) / (2.0 * s)
        gaps.append(float(np.abs(fd - formula).max()))
    sweep = AmplitudeSweep("center_derivative", amplitudes, tuple(gaps), richardson(gaps, amplitudes).order)
    return CenterDerivative(formula, translation, bound, sweep)


# ---------------------------------------------------------------------------
# Grid maps
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DiffeoMap:
    grid: Grid
    chart: Chart
    positions: np.ndarray = field(repr=False)
    jacobian: np.ndarray = field(repr=False)
    generators: tuple[tuple[str, float], ...] = ()

    @property
    def displacement(self) -> np.ndarray:
        return (self.positions - self.grid.nodes()).reshape(self.grid.shape + (self.grid.dim,))

    @property
    def max_displacement(self) -> float:
        return float(np.linalg.norm(self.positions - self.grid.nodes(), axis=1).max())

    @property
    def min_determinant(self) -> float:
        return float(np.linalg.det(self.jacobian).min())


def _vector_function(vector) -> Field:
    if isinstance(vector, TensorField):
        if vector.rank != VECTOR:
            raise ModelError("Flows are generated by vector fields.")
        if vector.is_grid:
            raise RepresentationError("Flows need a differentiable generator; resample grids into a basis first.")
        return vector.function
    return vector


def flow_time_one(
    vector,
    grid: Grid,
    chart: Chart,
    steps: int | None = None,
    label: str = "V",
    min_determinant: float | None = None,
) -> DiffeoMap:
    """Time-one flow of V from every grid node, with its Jacobian."""
    fn = _vector_function(vector)
    flow = rk4_flow(geometry(chart), fn, int(option("flow_steps", steps)))
    nodes = jnp.asarray(grid.nodes())
    positions = np.asarray(jax.jit(jax.vmap(flow))(nodes))
    jacobian = np.asarray(jax.jit(jax.vmap(jax.jacfwd(flow)))(nodes))

    lo = np.array([axis[0] for axis in grid.axes])
    hi = np.array([axis[-1] for axis in grid.axes])
    if not grid.periodic and (np.any(positions < lo) or np.any(positions > hi)):
        raise FlowError(f"Trajectories of {label} leave the grid box.")
    threshold = float(option("min_jacobian_det", min_determinant))
    diffeo = DiffeoMap(grid, chart, positions, jacobian, ((label, 1.0),))
    if diffeo.min_determinant < threshold:
        raise FlowError(f"Jacobian determinant of {label} drops to {diffeo.min_determinant:.3e}.")
    logger.debug("flow %s: max displacement %.3e, min det %.6f", label, diffeo.max_displacement, diffeo.min_determinant)
    return diffeo


def _grid_coordinates(grid: Grid, points: np.ndarray) -> np.ndarray:
    lo = np.array([axis[0] for axis in grid.axes])
    return ((points - lo) / np.array(grid.spacing)).T


def interpolate(tensor: TensorField, points: np.ndarray, order: int = SPLINE_ORDER) -> np.ndarray:
    """Spline values of a grid field at arbitrary points, shape (count, *component)."""
    coords = _grid_coordinates(tensor.grid, points)
    dim = tensor.grid.dim
    components = tensor.values.reshape(tensor.grid.shape + (-1,))
    mode = "grid-wrap" if tensor.grid.periodic else "nearest"
    out = []
    for c in range(components.shape[-1]):
        data = components[..., c]
        if order > 1:
            data = ndimage.spline_filter(data, order=order, mode=mode)
        out.append(ndimage.map_coordinates(data, coords, order=order, mode=mode, prefilter=False))
    return np.stack(out, axis=-1).reshape((points.shape[0],) + tensor.values.shape[dim:])


@dataclass(frozen=True, eq=False)
class Pullback:
    h: TensorField
    k: TensorField
    interpolation_error: float


def _values_at(tensor: TensorField | None, points: np.ndarray, shape) -> tuple[np.ndarray, float]:
    if tensor is None:
        return np.zeros((points.shape[0],) + shape), 0.0
    if not tensor.is_grid:
        return sample(tensor.function, points), 0.0
    cubic = interpolate(tensor, points)
    linear = interpolate(tensor, points, order=1)
    return cubic, float(np.abs(cubic - linear).max()) if cubic.size else 0.0


def pullback(diffeo: DiffeoMap, h: TensorField | None = None, k: TensorField | None = None) -> Pullback:
    """h' = Phi^*(g + h) - g and k' = (f + k) o Phi - f on the map's grid."""
    chart, grid = diffeo.chart, diffeo.grid
    for tensor in (h, k):
        if tensor is None:
            continue
        if not same_chart(tensor.chart, chart):
            raise RepresentationError("Pulled-back fields must live on the map's chart.")
        if tensor.is_grid and not tensor.grid.same_as(grid):
            raise RepresentationError("Pulled-back grid fields must share the map's grid.")
    n = chart.dim
    nodes = grid.nodes()
    image = diffeo.positions
    h_image, h_error = _values_at(h, image, (n, n))
    k_image, k_error = _values_at(k, image, ())
    total = sample(chart.metric_eval, image) + h_image
    j = diffeo.jacobian
    metric = np.einsum("nai,nab,nbj->nij", j, total, j) - sample(chart.metric_eval, nodes)
    metric = 0.5 * (metric + np.swapaxes(metric, -1, -2))
    weight = sample(chart.weight_eval, image) + k_image - sample(chart.weight_eval, nodes)
    return Pullback(
        TensorField.on_grid(SYM2, chart, grid, metric.reshape(grid.shape + (n, n))),
        TensorField.on_grid(SCALAR, chart, grid, weight.reshape(grid.shape)),
        max(h_error, k_error),
    )


# ---------------------------------------------------------------------------
# Balancing and the gauge loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BalancedGenerator:
    solution: PoissonSolution
    translation: np.ndarray
    field: TensorField
    divergence_gap: float
    balance_gap: float


def _rhs_quadrature(model: ModelGeometry, h: TensorField, basis: SpectralBasis) -> Quadrature:
    return Quadrature.on_grid(h.grid, model.chart) if h.is_grid else basis.quadrature


def _translation_pairing(model: ModelGeometry, values: np.ndarray, q: Quadrature) -> np.ndarray:
    """int <d_i, V> e^{-f} for each Euclidean direction, V given by lower-index node values."""
    return np.array([q.integrate(values[:, model.ell + i]) for i in range(model.m)])


def balance_fix(
    model: ModelGeometry, h: TensorField, k: TensorField | None, basis: SpectralBasis
) -> BalancedGenerator:
    """V = Y + T with 2 P Y = div_f h and int <d_i, V> e^{-f} = -B_i(h, k)."""
    solution = solve_P(h, basis)
    q = _rhs_quadrature(model, h, basis)
    center = center_of_mass(model, h, k, q).vector
    a = -(center + _translation_pairing(model, solution.Y.sample(q), q)) / q.total_mass()

    shift = jnp.zeros(model.n).at[model.ell :].set(jnp.asarray(a))
    metric = model.chart.metric_eval
    y_fn = solution.Y.function

    def generator(x):
        return y_fn(x) + metric(x) @ shift

    v = TensorField.closed_form(VECTOR, model.chart, generator)
    v_values = sample(generator, q.nodes)
    balance_gap = float(np.abs(_translation_pairing(model, v_values, q) + center).max())
    logger.debug("balance_fix: translation %s, balance gap %.2e", np.round(a, 12).tolist(), balance_gap)
    return BalancedGenerator(solution, a, v, solution.relative_residual, balance_gap)


@dataclass(frozen=True)
class GaugeRecord:
    iteration: int
    divf_w12: float
    divf_sup: float
    center: float
    h_sup: float
    core_sup: float
    k_sup: float
    generator_sup: float = 0.0
    translation: tuple[float, ...] = ()
    solve_residual: float = 0.0
    interpolation_error: float = 0.0

    def as_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["translation"] = list(self.translation)
        return out


@dataclass(frozen=True, eq=False)
class GaugeState:
    iteration: int
    h: TensorField
    k: TensorField
    radius: float
    record: GaugeRecord
    history: tuple[GaugeRecord, ...]

    def __post_init__(self) -> None:
        if len(self.history) != self.iteration + 1 or self.history[-1] is not self.record:
            raise ValueError("Gauge history must end with the current record.")
        if min(self.record.divf_w12, self.record.center, self.record.h_sup) < 0.0:
            raise ValueError("Gauge residuals are non-negative.")


def measure(
    model: ModelGeometry, h: TensorField, k: TensorField, radius: float, iteration: int = 0, **extra
) -> GaugeRecord:
    q = Quadrature.on_grid(h.grid, model.chart)
    g_inv = sample(geometry(model.chart).inverse_metric, q.nodes)
    divergence = divf_sym2(h)
    h_norms = _pointwise_norm(h.sample(q), g_inv)
    core = sample(model.b, q.nodes) <= radius - 1.0
    return GaugeRecord(
        iteration=iteration,
        divf_w12=sobolev_norm(divergence, q, 1),
        divf_sup=float(_pointwise_norm(divergence.sample(q), g_inv).max()),
        center=center_of_mass(model, h, k, q).norm,
        h_sup=float(h_norms.max()),
        core_sup=float(h_norms[core].max()) if core.any() else 0.0,
        k_sup=float(np.abs(k.values).max()),
        **extra,
    )


def _cut(tensor: TensorField, eta: np.ndarray) -> TensorField:
    extra = tensor.values.ndim - eta.ndim
    return tensor.with_values(eta.reshape(eta.shape + (1,) * extra) * tensor.values)


def gauge_step(
    model: ModelGeometry,
    h: TensorField,
    k: TensorField,
    radius: float,
    basis: SpectralBasis,
    generator: Field | None = None,
    steps: int | None = None,
    iteration: int = 1,
) -> tuple[TensorField, TensorField, GaugeRecord]:
    """Cut off, balance, flow and pull back once.  ``generator`` overrides the solved V."""
    eta = cutoff(model, radius)
    eta_grid = sample(eta, h.grid.nodes()).reshape(h.grid.shape)
    eh, ek = _cut(h, eta_grid), _cut(k, eta_grid)
    translation: tuple[float, ...] = ()
    solve_residual = 0.0
    if generator is None:
        balanced = balance_fix(model, eh, ek, basis)
        generator = balanced.field.function
        translation = tuple(float(a) for a in balanced.translation)
        solve_residual = balanced.divergence_gap

    def cut_generator(x):
        return eta(x) * generator(x)

    diffeo = flow_time_one(cut_generator, h.grid, model.chart, steps, label=f"step{iteration}")
    pulled = pullback(diffeo, eh, ek)
    new_h, new_k = _cut(pulled.h, eta_grid), _cut(pulled.k, eta_grid)
    generator_sup = float(np.abs(sample(cut_generator, h.grid.nodes())).max())
    record = measure(
        model,
        new_h,
        new_k,
        radius,
        iteration,
        generator_sup=generator_sup,
        translation=translation,
        solve_residual=solve_residual,
        interpolation_error=pulled.interpolation_error,
    )
    return new_h, new_k, record


def gauge_iterate(
    model: ModelGeometry,
    h0: TensorField,
    k0: TensorField,
    radius: float | None = None,
    max_iter: int | None = None,
    degree: int | None = None,
    plateau_factor: float | None = None,
    steps: int | None = None,
) -> list[GaugeState]:
    """Repeat gauge_step until ||div_f h|| stops halving or max_iter is reached."""
    if not (h0.is_grid and k0.is_grid):
        raise RepresentationError("The gauge loop runs on grid samples.")
    if not same_chart(h0.chart, model.chart):
        raise RepresentationError("Gauge inputs must live on the model chart.")
    radius = float(option("cutoff_radius", radius))
    max_iter = int(option("max_iter", max_iter))
    plateau_factor = float(option("plateau_factor", plateau_factor))
    basis = build_basis(model, VECTOR, int(option("gauge_degree", degree)))

    record = measure(model, h0, k0, radius)
    states = [GaugeState(0, h0, k0, radius, record, (record,))]
    logger.info("gauge start: ||div_f h|| %.3e, |B| %.3e, sup|h| %.3e", record.divf_w12, record.center, record.h_sup)
    if record.divf_w12 == 0.0 and record.center == 0.0:
        logger.info("input already in gauge")
        return states

    h, k = h0, k0
    for iteration in range(1, max_iter + 1):
        previous = states[-1].record
        h, k, record = gauge_step(model, h, k, radius, basis, steps=steps, iteration=iteration)
        history = states[-1].history + (record,)
        states.append(GaugeState(iteration, h, k, radius, record, history))
        logger.info(
            "gauge iteration %d: ||div_f h|| %.3e, |B| %.3e, sup|h| %.3e",
            iteration,
            record.divf_w12,
            record.center,
            record.h_sup,
        )
        if iteration == 1 and record.divf_w12 > previous.divf_w12:
            raise GaugeDivergenceError(
                f"||div_f h|| grew from {previous.divf_w12:.3e} to {record.divf_w12:.3e} on the first step."
            )
        if record.divf_w12 == 0.0 or previous.divf_w12 / record.divf_w12 < plateau_factor:
            logger.info("gauge plateau at iteration %d", iteration)
            break
    return states


# ---------------------------------------------------------------------------
# Pure-gauge inputs
# ---------------------------------------------------------------------------


def gauge_grid(model: ModelGeometry, half_width: float | None = None, points: int | None = None) -> Grid:
    return Grid.box(model.n, float(option("box_half_width", half_width)), int(option("grid_points", points)))


def quadratic_generator(model: ModelGeometry, epsilon: float | None = None) -> Field:
    """W = eps grad((x1^2 - x2^2) / 2) on the first two Euclidean coordinates."""
    if model.m < 2:
        raise ModelError("The quadratic generator needs two Euclidean directions.")
    eps = float(option("gauge_epsilon", epsilon))
    a, b = model.ell, model.ell + 1
    n = model.n

    def generator(x):
        return eps * (jnp.zeros(n).at[a].set(x[a]).at[b].set(-x[b]))

    return generator


def pure_gauge(
    model: ModelGeometry, generator: Field, grid: Grid, radius: float | None = None, steps: int | None = None
) -> Pullback:
    """(Phi^* g - g, f o Phi - f) for the flow of eta W; exact up to the integrator."""
    eta = cutoff(model, float(option("cutoff_radius", radius)))
    diffeo = flow_time_one(lambda x: eta(x) * generator(x), grid, model.chart, steps, label="pure_gauge")
    return pullback(diffeo)


def discretization_floor(
    model: ModelGeometry,
    h0: TensorField,
    k0: TensorField,
    generator: Field,
    radius: float | None = None,
    steps: int | None = None,
) -> GaugeRecord:
    """One loop step on pure-gauge input with the exact inverse generator in place of the solve."""
    radius = float(option("cutoff_radius", radius))
    basis = build_basis(model, VECTOR, 1)

    def inverse(x):
        return -generator(x)

    return gauge_step(model, h0, k0, radius, basis, generator=inverse, steps=steps)[2]


@dataclass(frozen=True)
class RoundTrip:
    h_sup: float
    k_sup: float
    interpolation_error: float

    @property
    def residual(self) -> float:
        return max(self.h_sup, self.k_sup)

    @property
    def bound(self) -> float:
        """Ten times the cubic-linear spline gap."""
        return ROUND_TRIP_FACTOR * self.interpolation_error


def round_trip(
    model: ModelGeometry, generator: Field, grid: Grid, radius: float | None = None, steps: int | None = None
) -> RoundTrip:
    """Flow by eta W, then pull the result back along eta (-W); the remainder is interpolation error."""
    radius = float(option("cutoff_radius", radius))
    eta = cutoff(model, radius)
    forward = pure_gauge(model, generator, grid, radius, steps)
    back = flow_time_one(lambda x: -eta(x) * generator(x), grid, model.chart, steps, label="inverse")
    rest = pullback(back, forward.h, forward.k)
    return RoundTrip(
        float(np.abs(rest.h.values).max()), float(np.abs(rest.k.values).max()), rest.interpolation_error
    )

"""Weighted operators on tensor fields.

Closed-form and spectral inputs are differentiated through :class:`Geometry`
and come back as closed forms.  Grid inputs are differentiated with
second-order centered differences (one-sided second-order stencils at the
edges of non-periodic grids) plus Christoffel corrections sampled at the nodes,
and come back as grid fields.
"""
from __future__ import annotations

import functools
import logging

import numpy as np

from .charts import Chart
from .exceptions import RankMismatchError, RepresentationError
from .fields import SCALAR, SPECTRAL_COEFFS, SYM2, VECTOR, Quadrature, TensorField, sample
from .geometry import Geometry

logger = logging.getLogger(__name__)


class _ByIdentity:
    __slots__ = ("chart",)

    def __init__(self, chart: Chart):
        self.chart = chart

    def __hash__(self) -> int:
        return id(self.chart)

    def __eq__(self, other) -> bool:
        return isinstance(other, _ByIdentity) and other.chart is self.chart


@functools.lru_cache(maxsize=64)
def _geometry(key: _ByIdentity) -> Geometry:
    return Geometry(key.chart)


def geometry(chart: Chart) -> Geometry:
    """Shared :class:`Geometry` per chart object, so compiled samplers are reused."""
    return _geometry(_ByIdentity(chart))


def same_chart(a: Chart, b: Chart) -> bool:
    return a is b or (not a.is_custom and not b.is_custom and a == b)


def _require(field: TensorField, rank: str) -> None:
    if field.rank != rank:
        raise RankMismatchError(f"Expected a {rank} field, got {field.rank}.")


# ---------------------------------------------------------------------------
# Grid differentiation
# ---------------------------------------------------------------------------


def _partials(field: TensorField) -> np.ndarray:
    """Coordinate derivatives of grid values, derivative axis last."""
    grid = field.grid
    parts = []
    for axis, step in enumerate(grid.spacing):
        if grid.periodic:
            parts.append((np.roll(field.values, -1, axis) - np.roll(field.values, 1, axis)) / (2.0 * step))
        else:
            parts.append(np.gradient(field.values, step, axis=axis, edge_order=2))
    return np.stack(parts, axis=-1)


def _grid_nabla_values(values: np.ndarray, field: TensorField, partials: np.ndarray) -> np.ndarray:
    """Covariant derivative of node values (count, *comp) given their partials."""
    geo = geometry(field.chart)
    count = values.shape[0]
    out = partials.reshape((count,) + partials.shape[field.grid.dim :]).copy()
    if values.ndim == 1:
        return out
    gamma = sample(geo.christoffel, field.grid.nodes())
    for slot in range(1, values.ndim):
        moved = np.moveaxis(values, slot, -1)
        correction = np.einsum("n...p,npam->n...am", moved, gamma)
        out -= np.moveaxis(correction, -2, slot)
    return out


def _grid_chain(field: TensorField, order: int) -> list[np.ndarray]:
    """[values, nabla values, nabla^2 values, ...] as (count, ...) arrays."""
    grid = field.grid
    count = grid.size
    current = field
    chain = [field.values.reshape((count,) + field.values.shape[grid.dim :])]
    for _ in range(order):
        partials = _partials(current)
        chain.append(_grid_nabla_values(chain[-1], current, partials))
        shaped = chain[-1].reshape(grid.shape + chain[-1].shape[1:])
        current = _RawGridField(current.chart, grid, shaped)
    return chain


class _RawGridField:
    """Grid values of any tensor order; internal to repeated differentiation."""

    def __init__(self, chart, grid, values):
        self.chart = chart
        self.grid = grid
        self.values = values


def _grid_field(field: TensorField, flat: np.ndarray, rank: str) -> TensorField:
    values = flat.reshape(field.grid.shape + flat.shape[1:])
    if rank == SYM2:
        values = 0.5 * (values + np.swapaxes(values, -1, -2))
    return TensorField.on_grid(rank, field.chart, field.grid, values)


def _grid_samples(field: TensorField, fn) -> np.ndarray:
    return sample(fn, field.grid.nodes())


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------


def gradient(u: TensorField) -> TensorField:
    _require(u, SCALAR)
    if u.is_grid:
        return _grid_field(u, _grid_chain(u, 1)[1], VECTOR)
    return TensorField.closed_form(VECTOR, u.chart, geometry(u.chart).gradient(u.function))


def hessian(u: TensorField) -> TensorField:
    _require(u, SCALAR)
    if u.is_grid:
        return _grid_field(u, _grid_chain(u, 2)[2], SYM2)
    return TensorField.closed_form(SYM2, u.chart, geometry(u.chart).hessian(u.function))


def drift_laplacian(field: TensorField) -> TensorField:
    """Delta F - nabla_{grad f} F, same rank as F."""
    geo = geometry(field.chart)
    if not field.is_grid:
        return TensorField.closed_form(field.rank, field.chart, geo.drift_laplacian(field.function))
    _, first, second = _grid_chain(field, 2)
    g_inv = _grid_samples(field, geo.inverse_metric)
    grad_f = _grid_samples(field, geo.grad_weight_raised)
    trace = np.einsum("n...ab,nab->n...", second, g_inv)
    return _grid_field(field, trace - np.einsum("n...a,na->n...", first, grad_f), field.rank)


def divf_vector(vector: TensorField) -> TensorField:
    _require(vector, VECTOR)
    geo = geometry(vector.chart)
    if not vector.is_grid:
        return TensorField.closed_form(SCALAR, vector.chart, geo.divf_vector(vector.function))
    values, first = _grid_chain(vector, 1)
    g_inv = _grid_samples(vector, geo.inverse_metric)
    grad_f = _grid_samples(vector, geo.grad_weight_raised)
    div = np.einsum("nab,nab->n", first, g_inv) - np.einsum("na,na->n", values, grad_f)
    return _grid_field(vector, div, SCALAR)


def divf_sym2(tensor: TensorField) -> TensorField:
    _require(tensor, SYM2)
    geo = geometry(tensor.chart)
    if not tensor.is_grid:
        return TensorField.closed_form(VECTOR, tensor.chart, geo.divf_sym2(tensor.function))
    values, first = _grid_chain(tensor, 1)
    g_inv = _grid_samples(tensor, geo.inverse_metric)
    grad_f = _grid_samples(tensor, geo.grad_weight_raised)
    div = np.einsum("niab,nab->ni", first, g_inv) - np.einsum("nij,nj->ni", values, grad_f)
    return _grid_field(tensor, div, VECTOR)


def divf_star(vector: TensorField) -> TensorField:
    """-1/2 (Y_{i,j} + Y_{j,i}); the weighted adjoint of divf_sym2."""
    _require(vector, VECTOR)
    if not vector.is_grid:
        return TensorField.closed_form(SYM2, vector.chart, geometry(vector.chart).divf_star(vector.function))
    first = _grid_chain(vector, 1)[1]
    return _grid_field(vector, -0.5 * (first + np.swapaxes(first, -1, -2)), SYM2)


def p_op(vector: TensorField) -> TensorField:
    return divf_sym2(divf_star(vector))


def p_op_soliton(vector: TensorField) -> TensorField:
    """-1/2 (grad div_f Y + drift Laplacian Y + kappa Y); agrees with p_op on solitons."""
    _require(vector, VECTOR)
    if not vector.is_grid:
        fn = geometry(vector.chart).p_operator_soliton(vector.function)
        return TensorField.closed_form(VECTOR, vector.chart, fn)
    grad_div = gradient(divf_vector(vector)).values
    drift = drift_laplacian(vector).values
    return vector.with_values(-0.5 * (grad_div + drift + vector.chart.kappa * vector.values))


def p_op_gap(vector: TensorField, q: Quadrature) -> float:
    """Weighted norm of the difference between the two evaluations of P."""
    a, b = p_op(vector), p_op_soliton(vector)
    diff = a.sample(q) - b.sample(q)
    return float(np.sqrt(max(_integrate_norm(diff, q), 0.0)))


def curvature_term(tensor: TensorField) -> TensorField:
    _require(tensor, SYM2)
    geo = geometry(tensor.chart)
    if not tensor.is_grid:
        return TensorField.closed_form(SYM2, tensor.chart, geo.curvature_operator(tensor.function))
    nodes = tensor.grid.nodes()
    g_inv = sample(geo.inverse_metric, nodes)
    riemann = sample(geo.riemann, nodes)
    flat = tensor.values.reshape((nodes.shape[0],) + tensor.values.shape[tensor.grid.dim :])
    raised = np.einsum("nla,nab,nbk->nlk", g_inv, flat, g_inv)
    return _grid_field(tensor, np.einsum("nlikj,nlk->nij", riemann, raised), SYM2)


def l_op(tensor: TensorField) -> TensorField:
    """Drift Laplacian plus twice the curvature action on symmetric 2-tensors."""
    _require(tensor, SYM2)
    if not tensor.is_grid:
        return TensorField.closed_form(SYM2, tensor.chart, geometry(tensor.chart).l_operator(tensor.function))
    return tensor.with_values(drift_laplacian(tensor).values + 2.0 * curvature_term(tensor).values)


def nabla_values(field: TensorField, q: Quadrature, order: int) -> list[np.ndarray]:
    """Field values and its first ``order`` covariant derivatives at the nodes of ``q``."""
    if field.is_grid:
        if q.grid is None or not q.grid.same_as(field.grid):
            raise RepresentationError("Grid field paired with a quadrature from another discretisation.")
        return _grid_chain(field, order)
    geo = geometry(field.chart)
    chain = [field.function]
    for _ in range(order):
        chain.append(geo.nabla(chain[-1]))
    return [sample(fn, q.nodes) for fn in chain]


# ---------------------------------------------------------------------------
# Pairings and norms
# ---------------------------------------------------------------------------


def inner_values(a: np.ndarray, b: np.ndarray, g_inv: np.ndarray) -> np.ndarray:
    """<A, B>_g at every node for lower-index values of any order."""
    for slot in range(1, a.ndim):
        a = np.moveaxis(np.einsum("n...p,npq->n...q", np.moveaxis(a, slot, -1), g_inv), -1, slot)
    return np.sum((a * b).reshape(a.shape[0], -1), axis=1)


def _integrate_norm(values: np.ndarray, q: Quadrature) -> float:
    g_inv = sample(geometry(q.chart).inverse_metric, q.nodes)
    return q.integrate(inner_values(values, values, g_inv))


def pointwise_inner(a: TensorField, b: TensorField, q: Quadrature) -> np.ndarray:
    _check_pair(a, b, q)
    g_inv = sample(geometry(q.chart).inverse_metric, q.nodes)
    return inner_values(a.sample(q), b.sample(q), g_inv)


def _check_pair(a: TensorField, b: TensorField, q: Quadrature) -> None:
    if a.rank != b.rank:
        raise RankMismatchError(f"Cannot pair a {a.rank} field with a {b.rank} field.")
    if not (same_chart(a.chart, b.chart) and same_chart(a.chart, q.chart)):
        raise RepresentationError("Fields and quadrature live on different charts.")


def weighted_inner(a: TensorField, b: TensorField, q: Quadrature) -> float:
    """Integral of <A, B>_g e^{-f} dvol under ``q``."""
    return q.integrate(pointwise_inner(a, b, q))


def weighted_norm(field: TensorField, q: Quadrature) -> float:
    return float(np.sqrt(max(weighted_inner(field, field, q), 0.0)))


def adjointness_gap(h: TensorField, vector: TensorField, q: Quadrature) -> float:
    """|<h, div_f* Y> - <Y, div_f h>| under the weighted measure."""
    _require(h, SYM2)
    _require(vector, VECTOR)
    left = weighted_inner(h, divf_star(vector), q)
    right = weighted_inner(vector, divf_sym2(h), q)
    return abs(left - right)


def sobolev_norm(field: TensorField, q: Quadrature, order: int = 1) -> float:
    """Weighted W^{order,2} norm: square root of the sum of ||nabla^j F||^2, j <= order."""
    if order not in (0, 1, 2):
        raise ValueError("Sobolev order must be 0, 1 or 2.")
    if field.representation == SPECTRAL_COEFFS and q is field.basis.quadrature and order == 0:
        return float(np.linalg.norm(field.coeffs))
    total = sum(_integrate_norm(values, q) for values in nabla_values(field, q, order))
    return float(np.sqrt(max(total, 0.0)))


def concentration(field: TensorField, q: Quadrature) -> tuple[float, float]:
    """Both sides of  int |F|^2 (f - n) e^{-f}  <=  4 int |nabla F|^2 e^{-f}."""
    values, first = nabla_values(field, q, 1)
    geo = geometry(q.chart)
    g_inv = sample(geo.inverse_metric, q.nodes)
    f = sample(geo.weight, q.nodes)
    lhs = q.integrate(inner_values(values, values, g_inv) * (f - q.chart.dim))
    rhs = 4.0 * q.integrate(inner_values(first, first, g_inv))
    return lhs, rhs


def splitting_pairing(u: TensorField, divergence_free: TensorField, q: Quadrature) -> float:
    """Weighted pairing of grad u with a div_f-free field; zero up to quadrature error."""
    _require(divergence_free, VECTOR)
    return weighted_inner(gradient(u), divergence_free, q)


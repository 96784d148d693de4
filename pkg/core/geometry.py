"""Pointwise Riemannian geometry of a weighted chart.

Conventions
-----------
* Tensors are stored with lower coordinate indices.  Covariant derivatives
  append their index last: ``nabla(T)[i, j, k]`` is T_{ij,k}.
* The four-tensor is R_{ijkl} = <R(e_i, e_j) e_k, e_l> with
  R(X, Y)Z = nabla_Y nabla_X Z - nabla_X nabla_Y Z + nabla_[X,Y] Z, so that
  Ric_{ij} = R_{kikj}, R_{ijij} is the sectional curvature and the Ricci
  identity reads Y_{i,jk} - Y_{i,kj} = R_{kjin} Y_n.
* phi = kappa g - Ric - Hess_f.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import jax.numpy as jnp
import numpy as np

from .charts import Chart
from .differentiation import Evaluator, JetMode, nested_jacobian
from .exceptions import ChartError, JetOrderError

logger = logging.getLogger(__name__)

Field = Callable[[jnp.ndarray], jnp.ndarray]


def contract(value, g_inv, a: int, b: int):
    """Trace slots ``a`` and ``b`` of ``value`` with the inverse metric."""
    moved = jnp.moveaxis(value, (a, b), (-2, -1))
    return jnp.einsum("...ij,ij->...", moved, g_inv)


def frame_components(value, frame):
    """Components of a lower-index tensor in the orthonormal frame ``frame[:, i]``."""
    for slot in range(jnp.ndim(value)):
        value = jnp.moveaxis(jnp.tensordot(value, frame, axes=([slot], [0])), -1, slot)
    return value


class Geometry:
    """Covariant calculus for the chart's (g, f).

    Methods with a point argument evaluate directly; methods taking a field
    return a new field, so operators compose (``geo.divf_sym2(geo.divf_star(Y))``).
    """

    def __init__(self, chart: Chart):
        self.chart = chart
        self.kappa = chart.kappa
        self.dim = chart.dim
        self._jacobian = chart.jet_mode.jacobian
        self._dmetric = self._jacobian(self.metric)
        self._dchristoffel = self._jacobian(self.christoffel)
        self._dweight = self._jacobian(self.weight)

    # -- primitives ---------------------------------------------------------

    def metric(self, x):
        return self.chart.metric_eval(x)

    def inverse_metric(self, x):
        return jnp.linalg.inv(self.metric(x))

    def weight(self, x):
        return self.chart.weight_eval(x)

    def frame(self, x):
        """Columns form a g-orthonormal basis at x."""
        lower = jnp.linalg.cholesky(self.metric(x))
        return jnp.linalg.inv(lower).T

    def christoffel(self, x):
        """Gamma[k, i, j] = Gamma^k_{ij}."""
        g_inv = self.inverse_metric(x)
        dg = self._dmetric(x)
        combo = jnp.einsum("mji->mij", dg) + dg - jnp.einsum("ijm->mij", dg)
        return 0.5 * jnp.einsum("km,mij->kij", g_inv, combo)

    def riemann(self, x):
        gamma = self.christoffel(x)
        dgamma = self._dchristoffel(x)
        standard = (
            jnp.einsum("lbca->lcab", dgamma)
            - jnp.einsum("lacb->lcab", dgamma)
            + jnp.einsum("lam,mbc->lcab", gamma, gamma)
            - jnp.einsum("lbm,mac->lcab", gamma, gamma)
        )
        return -jnp.einsum("dl,lcab->abcd", self.metric(x), standard)

    def ricci(self, x):
        return jnp.einsum("ab,aibj->ij", self.inverse_metric(x), self.riemann(x))

    def scalar_curvature(self, x):
        return jnp.einsum("ij,ij->", self.inverse_metric(x), self.ricci(x))

    def grad_weight(self, x):
        return self._dweight(x)

    def grad_weight_raised(self, x):
        return self.inverse_metric(x) @ self._dweight(x)

    def hess_weight(self, x):
        return self.hessian(self.weight)(x)

    def phi(self, x):
        return self.kappa * self.metric(x) - self.ricci(x) - self.hess_weight(x)

    # -- field operators ----------------------------------------------------

    def nabla(self, tensor: Field) -> Field:
        """Covariant derivative of a lower-index tensor field, new index last."""
        dtensor = self._jacobian(tensor)

        def covariant(x):
            value = tensor(x)
            out = dtensor(x)
            if jnp.ndim(value) == 0:
                return out
            gamma = self.christoffel(x)
            for slot in range(jnp.ndim(value)):
                moved = jnp.moveaxis(value, slot, -1)
                correction = jnp.einsum("...p,pam->...am", moved, gamma)
                out = out - jnp.moveaxis(correction, -2, slot)
            return out

        return covariant

    def gradient(self, u: Field) -> Field:
        return self.nabla(u)

    def hessian(self, u: Field) -> Field:
        return self.nabla(self.nabla(u))

    def trace(self, tensor: Field, a: int = 0, b: int = 1) -> Field:
        return lambda x: contract(tensor(x), self.inverse_metric(x), a, b)

    def drift_laplacian(self, tensor: Field) -> Field:
        first = self.nabla(tensor)
        second = self.nabla(first)

        def drift(x):
            d1 = first(x)
            rank = jnp.ndim(d1) - 1
            return contract(second(x), self.inverse_metric(x), rank, rank + 1) - d1 @ self.grad_weight_raised(x)

        return drift

    def divf_vector(self, vector: Field) -> Field:
        dvector = self.nabla(vector)

        def div(x):
            g_inv = self.inverse_metric(x)
            return jnp.einsum("ij,ij->", dvector(x), g_inv) - vector(x) @ (g_inv @ self.grad_weight(x))

        return div

    def divf_sym2(self, tensor: Field) -> Field:
        dtensor = self.nabla(tensor)

        def div(x):
            return contract(dtensor(x), self.inverse_metric(x), 1, 2) - tensor(x) @ self.grad_weight_raised(x)

        return div

    def divf_star(self, vector: Field) -> Field:
        dvector = self.nabla(vector)

        def star(x):
            dv = dvector(x)
            return -0.5 * (dv + dv.T)

        return star

    def p_operator(self, vector: Field) -> Field:
        return self.divf_sym2(self.divf_star(vector))

    def p_operator_soliton(self, vector: Field) -> Field:
        """-1/2 (grad div_f Y + drift Laplacian Y + kappa Y); equals P on solitons."""
        grad_div = self.gradient(self.divf_vector(vector))
        drift = self.drift_laplacian(vector)
        return lambda x: -0.5 * (grad_div(x) + drift(x) + self.kappa * vector(x))

    def curvature_operator(self, tensor: Field) -> Field:
        """R(B)_{ij} = R_{likj} B_{lk}."""

        def apply(x):
            g_inv = self.inverse_metric(x)
            raised = g_inv @ tensor(x) @ g_inv
            return jnp.einsum("likj,lk->ij", self.riemann(x), raised)

        return apply

    def l_operator(self, tensor: Field) -> Field:
        drift = self.drift_laplacian(tensor)
        curvature = self.curvature_operator(tensor)
        return lambda x: drift(x) + 2.0 * curvature(x)

    def lower(self, vector: Field) -> Field:
        """Lower the index of a contravariant vector field."""
        return lambda x: self.metric(x) @ vector(x)

    def norm_squared(self, value, x):
        """|T|^2_g of a lower-index tensor value at x."""
        g_inv = self.inverse_metric(x)
        raised = value
        for slot in range(jnp.ndim(value)):
            raised = jnp.moveaxis(jnp.tensordot(raised, g_inv, axes=([slot], [0])), -1, slot)
        return jnp.sum(raised * value)


# ---------------------------------------------------------------------------
# Jets and curvature packs
# ---------------------------------------------------------------------------

JET_MAX_ORDER = 4


@dataclass(frozen=True)
class PointJet:
    point: np.ndarray
    order: int
    mode: JetMode
    g_blocks: tuple[np.ndarray, ...]
    f_blocks: tuple[np.ndarray, ...]

    @property
    def g(self):
        return self.g_blocks[0]

    @property
    def f(self):
        return self.f_blocks[0]

    @property
    def dg(self):
        return self._block(self.g_blocks, 1)

    @property
    def d2g(self):
        return self._block(self.g_blocks, 2)

    @property
    def d3g(self):
        return self._block(self.g_blocks, 3)

    @property
    def d4g(self):
        return self._block(self.g_blocks, 4)

    @property
    def df(self):
        return self._block(self.f_blocks, 1)

    @property
    def d2f(self):
        return self._block(self.f_blocks, 2)

    @property
    def d3f(self):
        return self._block(self.f_blocks, 3)

    @property
    def d4f(self):
        return self._block(self.f_blocks, 4)

    def _block(self, blocks, k):
        if k > self.order:
            raise JetOrderError(f"Jet has order {self.order}; derivative {k} requested.")
        return blocks[k]


def jet_at(chart: Chart, x, order: int = JET_MAX_ORDER) -> PointJet:
    if not 0 <= order <= JET_MAX_ORDER:
        raise JetOrderError(f"Jet order must lie in [0, {JET_MAX_ORDER}].")
    x = chart.check_point(x)
    chart.check_spd(x)
    if not chart.jet_mode.is_analytic:
        reach = order * chart.jet_mode.step
        for axis in range(chart.dim):
            for sign in (-1.0, 1.0):
                chart.check_spd(x + sign * reach * np.eye(chart.dim)[axis])
    point = jnp.asarray(x)
    g_chain = nested_jacobian(chart.jet_mode, chart.metric_eval, order)
    f_chain = nested_jacobian(chart.jet_mode, chart.weight_eval, order)
    return PointJet(
        point=x,
        order=order,
        mode=chart.jet_mode,
        g_blocks=tuple(np.asarray(fn(point)) for fn in g_chain),
        f_blocks=tuple(np.asarray(fn(point)) for fn in f_chain),
    )


def taylor_evaluator(blocks, center) -> Evaluator:
    """Polynomial whose derivatives at ``center`` are the given blocks."""
    center = jnp.asarray(center)
    blocks = [jnp.asarray(block) for block in blocks]

    def evaluate(y):
        delta = y - center
        total = blocks[0]
        for k, block in enumerate(blocks[1:], start=1):
            term = block
            for _ in range(k):
                term = term @ delta
            total = total + term / math.factorial(k)
        return total

    return evaluate


@dataclass(frozen=True)
class CurvaturePack:
    Gamma: np.ndarray
    R: np.ndarray
    Ric: np.ndarray
    S: float
    Hess_f: np.ndarray
    phi: np.ndarray
    dHess_f: np.ndarray | None = None
    dRic: np.ndarray | None = None
    dphi: np.ndarray | None = None
    d2phi: np.ndarray | None = None


def curvature_at(jet: PointJet, kappa: float = 0.5, derivatives: bool | None = None) -> CurvaturePack:
    """Curvature quantities at the jet's point.

    The jet is extended to its Taylor polynomial, whose analytic derivatives at
    the point reproduce the jet exactly; ``derivatives`` (default: whenever the
    jet has order 4) adds covariant derivatives of Hess_f, Ric and phi.
    """
    if jet.order < 2:
        raise JetOrderError("Curvature needs a jet of order at least 2.")
    if derivatives is None:
        derivatives = jet.order >= 4
    if derivatives and jet.order < 4:
        raise JetOrderError("Covariant derivatives of phi need a jet of order 4.")
    dim = jet.point.shape[0]
    chart = Chart(
        dim=dim,
        topology="box",
        bounds=tuple((-np.inf, np.inf) for _ in range(dim)),
        metric_eval=taylor_evaluator(jet.g_blocks, jet.point),
        weight_eval=taylor_evaluator(jet.f_blocks, jet.point),
        kappa=kappa,
    )
    geo = Geometry(chart)
    x = jnp.asarray(jet.point)
    pack = dict(
        Gamma=geo.christoffel(x),
        R=geo.riemann(x),
        Ric=geo.ricci(x),
        S=geo.scalar_curvature(x),
        Hess_f=geo.hess_weight(x),
        phi=geo.phi(x),
    )
    if derivatives:
        dphi = geo.nabla(geo.phi)
        pack.update(
            dHess_f=geo.nabla(geo.hess_weight)(x),
            dRic=geo.nabla(geo.ricci)(x),
            dphi=dphi(x),
            d2phi=geo.nabla(dphi)(x),
        )
    values = {key: np.asarray(value) for key, value in pack.items()}
    values["S"] = float(values["S"])
    return CurvaturePack(**values)


def curvature_symmetry_gaps(pack: CurvaturePack) -> dict[str, float]:
    R = pack.R
    return {
        "antisymmetry_ij": float(np.abs(R + R.transpose(1, 0, 2, 3)).max()),
        "antisymmetry_kl": float(np.abs(R + R.transpose(0, 1, 3, 2)).max()),
        "pair_symmetry": float(np.abs(R - R.transpose(2, 3, 0, 1)).max()),
        "first_bianchi": float(np.abs(R + R.transpose(1, 2, 0, 3) + R.transpose(2, 0, 1, 3)).max()),
    }


def normalization_spread(chart: Chart, points) -> float:
    """Spatial spread of S + |grad f|^2 - 2 kappa f over ``points``."""
    geo = Geometry(chart)
    values = []
    for x in points:
        x = jnp.asarray(chart.check_point(x))
        df = geo.grad_weight(x)
        values.append(
            float(geo.scalar_curvature(x) + df @ geo.inverse_metric(x) @ df - 2.0 * chart.kappa * geo.weight(x))
        )
    if not values:
        raise ChartError("normalization_spread needs at least one point.")
    return max(values) - min(values)

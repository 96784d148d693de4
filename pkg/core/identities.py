"""Pointwise differential identities for weighted manifolds and their residuals.

Every identity is evaluated in a g-orthonormal frame at the point, after all
covariant derivatives have been taken in coordinates, so the formulas below
carry no metric factors: repeated indices are plain sums.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np

from .charts import Chart, trig_modes
from .conf import option
from .differentiation import JetMode
from .exceptions import SolitonGateError, UnknownIdentityError
from .geometry import Field, Geometry, frame_components

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Test fields
# ---------------------------------------------------------------------------


def trig_field(dim: int, seed: int, rank: int, amplitude: float = 0.1, modes: int = 3) -> Field:
    """Seeded trigonometric polynomial with every component bounded by ``amplitude``."""
    waves, cos_coef, sin_coef = trig_modes(dim, seed, modes, rank)
    scale = (np.abs(cos_coef) + np.abs(sin_coef)).sum(axis=0).max()
    cos_coef = jnp.asarray(cos_coef * amplitude / scale)
    sin_coef = jnp.asarray(sin_coef * amplitude / scale)
    waves = jnp.asarray(waves)

    def evaluate(x):
        phase = waves @ x
        return jnp.tensordot(jnp.cos(phase), cos_coef, axes=1) + jnp.tensordot(jnp.sin(phase), sin_coef, axes=1)

    return evaluate


@dataclass(frozen=True)
class TestFields:
    """Lower-index test fields fed to the identities (V/Y, h, u)."""

    vector: Field
    sym2: Field
    scalar: Field
    seed: int | None = None

    @classmethod
    def random(cls, dim: int, seed: int, amplitude: float | None = None) -> "TestFields":
        amplitude = option("trig_amplitude", amplitude)
        return cls(
            vector=trig_field(dim, seed + 11, 1, amplitude),
            sym2=trig_field(dim, seed + 13, 2, amplitude),
            scalar=trig_field(dim, seed + 17, 0, amplitude),
            seed=seed,
        )


# ---------------------------------------------------------------------------
# Frame evaluation context
# ---------------------------------------------------------------------------


class PointContext:
    """Frame components of the quantities one identity needs at one point."""

    def __init__(self, geo: Geometry, fields: TestFields, x):
        self.geo = geo
        self.fields = fields
        self.x = x
        self.frame = geo.frame(x)
        self._cache: dict[str, jnp.ndarray] = {}

    def fr(self, value):
        return frame_components(value, self.frame)

    def at(self, tensor: Field):
        return self.fr(tensor(self.x))

    def _memo(self, key: str, build: Callable[[], jnp.ndarray]):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    # geometry
    @property
    def kappa(self):
        return self.geo.kappa

    @property
    def R(self):
        return self._memo("R", lambda: self.at(self.geo.riemann))

    @property
    def Ric(self):
        return self._memo("Ric", lambda: self.at(self.geo.ricci))

    @property
    def dRic(self):
        return self._memo("dRic", lambda: self.at(self.geo.nabla(self.geo.ricci)))

    @property
    def df(self):
        return self._memo("df", lambda: self.at(self.geo.grad_weight))

    @property
    def Hf(self):
        return self._memo("Hf", lambda: self.at(self.geo.hess_weight))

    @property
    def phi(self):
        return self._memo("phi", lambda: self.at(self.geo.phi))

    @property
    def dphi(self):
        return self._memo("dphi", lambda: self.at(self.geo.nabla(self.geo.phi)))

    @property
    def d2phi(self):
        return self._memo("d2phi", lambda: self.at(self.geo.nabla(self.geo.nabla(self.geo.phi))))

    # test fields
    @property
    def V(self):
        return self._memo("V", lambda: self.at(self.fields.vector))

    @property
    def dV(self):
        return self._memo("dV", lambda: self.at(self.geo.nabla(self.fields.vector)))

    @property
    def h(self):
        return self._memo("h", lambda: self.at(self.fields.sym2))

    @property
    def dh(self):
        return self._memo("dh", lambda: self.at(self.geo.nabla(self.fields.sym2)))

    @property
    def d2h(self):
        return self._memo("d2h", lambda: self.at(self.geo.nabla(self.geo.nabla(self.fields.sym2))))


# ---------------------------------------------------------------------------
# Identities: each returns (lhs, rhs) or a list of such pairs
# ---------------------------------------------------------------------------


def _ricci_identity(c: PointContext):
    d2V = c.at(c.geo.nabla(c.geo.nabla(c.fields.vector)))
    return d2V - d2V.transpose(0, 2, 1), jnp.einsum("kjin,n->ijk", c.R, c.V)


def _simons_ric(c: PointContext):
    lhs = c.at(c.geo.l_operator(c.geo.ricci))
    P = c.d2phi
    rhs = (
        2.0 * c.kappa * c.Ric
        + 2.0 * jnp.einsum("kjin,nk->ij", c.R, c.phi)
        - jnp.einsum("ijkk->ij", P)
        - jnp.einsum("kkji->ij", P)
        + jnp.einsum("jkki->ij", P)
        + jnp.einsum("ikkj->ij", P)
    )
    return lhs, rhs


def _simons_s(c: PointContext):
    lhs = c.geo.drift_laplacian(c.geo.scalar_curvature)(c.x)
    P = c.d2phi
    rhs = (
        2.0 * c.kappa * jnp.trace(c.Ric)
        - 2.0 * jnp.sum(c.Ric * c.Ric)
        - 2.0 * jnp.einsum("kn,nk->", c.Ric, c.phi)
        - 2.0 * jnp.einsum("kkjj->", P)
        + 2.0 * jnp.einsum("ikki->", P)
    )
    return lhs, rhs


def _bochner_grad(c: PointContext):
    geo, u = c.geo, c.fields.scalar
    du = c.at(geo.gradient(u))
    lhs = c.at(geo.drift_laplacian(geo.gradient(u)))
    rhs = c.at(geo.gradient(geo.drift_laplacian(u))) + c.kappa * du - c.phi @ du
    return lhs, rhs


def _bochner_divf(c: PointContext):
    geo, Y = c.geo, c.fields.vector

    def phi_of_y(x):
        return geo.phi(x) @ geo.inverse_metric(x) @ Y(x)

    lhs = geo.drift_laplacian(geo.divf_vector(Y))(c.x)
    rhs = (
        geo.divf_vector(geo.drift_laplacian(Y))(c.x)
        - c.kappa * geo.divf_vector(Y)(c.x)
        + geo.divf_vector(phi_of_y)(c.x)
    )
    return lhs, rhs


def _grad_s(c: PointContext):
    half = 0.5 * c.at(c.geo.gradient(c.geo.scalar_curvature))
    via_phi = c.Ric @ c.df - jnp.einsum("kki->i", c.dphi) + jnp.einsum("ikk->i", c.dphi)
    via_bianchi = jnp.einsum("ikk->i", c.dRic)
    return [(half, via_phi), (half, via_bianchi)]


def _hess_s(c: PointContext):
    geo = c.geo
    half = 0.5 * c.at(geo.hessian(geo.scalar_curvature))
    d2H = c.at(geo.nabla(geo.nabla(geo.hess_weight)))
    P = c.d2phi
    first = -jnp.einsum("ikkj->ij", P) - jnp.einsum("kikj->ij", d2H)
    second = (
        jnp.einsum("ikj,k->ij", c.dRic, c.df)
        + c.Ric @ c.Hf
        - jnp.einsum("kkij->ij", P)
        + jnp.einsum("ikkj->ij", P)
    )
    return [(half, first), (half, second)]


def _grad_s_norm(c: PointContext):
    geo, kappa = c.geo, c.kappa

    def normalization(x):
        df = geo.grad_weight(x)
        return geo.scalar_curvature(x) + df @ geo.inverse_metric(x) @ df - 2.0 * kappa * geo.weight(x)

    drift_f = geo.drift_laplacian(geo.weight)

    def potential(x):
        return drift_f(x) + 2.0 * kappa * geo.weight(x)

    trace_d = jnp.einsum("kki->i", c.dphi)
    div_d = jnp.einsum("ikk->i", c.dphi)
    first = (0.5 * c.at(geo.gradient(normalization)), -c.phi @ c.df - trace_d + div_d)
    second = (0.5 * c.at(geo.gradient(potential)), c.phi @ c.df + 0.5 * trace_d - div_d)
    return [first, second]


def _delta_hess(c: PointContext):
    geo = c.geo
    d2H = c.at(geo.nabla(geo.nabla(geo.hess_weight)))
    P = c.d2phi
    lhs = jnp.einsum("ijkk->ij", d2H)
    rhs = (
        -jnp.einsum("jik,k->ij", c.dRic, c.df)
        + 2.0 * jnp.einsum("kjin,nk->ij", c.R, c.Hf)
        + jnp.einsum("kkji->ij", P)
        - jnp.einsum("jkki->ij", P)
        - jnp.einsum("ikkj->ij", P)
    )
    return lhs, rhs


def _commute_ldivfstar(c: PointContext):
    geo, V, kappa = c.geo, c.fields.vector, c.kappa
    drift_v = geo.drift_laplacian(V)

    def shifted(x):
        return drift_v(x) + kappa * V(x)

    lhs = c.at(geo.l_operator(geo.divf_star(V)))
    dV, dphi, Vn = c.dV, c.dphi, c.V
    rhs = (
        c.at(geo.divf_star(shifted))
        + 0.5 * (jnp.einsum("jn,in->ij", c.phi, dV) + jnp.einsum("in,jn->ij", c.phi, dV))
        - 0.5
        * (
            2.0 * jnp.einsum("n,jin->ij", Vn, dphi)
            - jnp.einsum("n,jni->ij", Vn, dphi)
            - jnp.einsum("n,inj->ij", Vn, dphi)
        )
    )
    return lhs, rhs


def _commute_divfl(c: PointContext):
    geo, h, kappa = c.geo, c.fields.sym2, c.kappa
    lhs = c.at(geo.divf_sym2(geo.l_operator(h)))
    div_h = geo.divf_sym2(h)
    divf_phi = c.at(geo.divf_sym2(geo.phi))
    hv, dh, dphi = c.h, c.dh, c.dphi
    rhs = (
        c.at(geo.drift_laplacian(div_h))
        + kappa * c.at(div_h)
        - jnp.einsum("mjn,jn->m", dh, c.phi)
        - hv @ divf_phi
        - 0.5
        * (
            2.0 * jnp.einsum("ij,ijm->m", hv, dphi)
            - jnp.einsum("ij,jmi->m", hv, dphi)
            - jnp.einsum("ij,imj->m", hv, dphi)
        )
    )
    return lhs, rhs


def _hess_commute(c: PointContext):
    geo, u, kappa = c.geo, c.fields.scalar, c.kappa
    drift_u = geo.drift_laplacian(u)

    def shifted(x):
        return 2.0 * kappa * u(x) + drift_u(x)

    return c.at(geo.l_operator(geo.hessian(u))), c.at(geo.hessian(shifted))


def _divf_riemann(c: PointContext):
    dR = c.at(c.geo.nabla(c.geo.riemann))
    lhs = jnp.einsum("kjink->jin", dR) - jnp.einsum("nijk,k->jin", c.R, c.df)
    return lhs, c.dphi - c.dphi.transpose(0, 2, 1)


def _vec_fourth(c: PointContext):
    geo, V = c.geo, c.fields.vector
    d3V = c.at(geo.nabla(geo.nabla(geo.nabla(V))))
    lhs = jnp.einsum("ijkk->ij", d3V)
    rhs = (
        jnp.einsum("ikkj->ij", d3V)
        + jnp.einsum("jn,in->ij", c.Ric, c.dV)
        + jnp.einsum("nijk,k,n->ij", c.R, c.df, c.V)
        + 2.0 * jnp.einsum("kjin,nk->ij", c.R, c.dV)
        + jnp.einsum("n,jin->ij", c.V, c.dphi)
        - jnp.einsum("n,jni->ij", c.V, c.dphi)
    )
    return lhs, rhs


def _dbochner_vec(c: PointContext):
    geo, V = c.geo, c.fields.vector
    lhs = c.at(geo.drift_laplacian(geo.nabla(V)))
    rhs = (
        c.at(geo.nabla(geo.drift_laplacian(V)))
        + c.kappa * c.dV
        + 2.0 * jnp.einsum("kjin,nk->ij", c.R, c.dV)
        - jnp.einsum("jn,in->ij", c.phi, c.dV)
        + jnp.einsum("n,jin->ij", c.V, c.dphi)
        - jnp.einsum("n,jni->ij", c.V, c.dphi)
    )
    return lhs, rhs


def _dvast(c: PointContext):
    geo, Y = c.geo, c.fields.vector
    lhs = -2.0 * c.at(geo.p_operator(Y))
    rhs = c.at(geo.gradient(geo.divf_vector(Y))) + c.at(geo.drift_laplacian(Y)) + (c.Hf + c.Ric) @ c.V
    return lhs, rhs


def _adjoint_formula(c: PointContext):
    geo, h = c.geo, c.fields.sym2
    lhs = c.at(geo.divf_star(geo.divf_sym2(h)))
    d2h, dh = c.d2h, c.dh
    bracket = (
        jnp.einsum("jkki->ij", d2h)
        - jnp.einsum("k,kji->ij", c.df, dh)
        + jnp.einsum("ikkj->ij", d2h)
        - jnp.einsum("k,ikj->ij", c.df, dh)
        + c.Ric @ c.h
        + c.h @ c.Ric
    )
    return lhs, c.kappa * c.h - 0.5 * bracket


@dataclass(frozen=True)
class Identity:
    name: str
    claim: str
    evaluate: Callable[[PointContext], object] = field(repr=False)
    soliton_only: bool = False


IDENTITIES: dict[str, Identity] = {
    item.name: item
    for item in (
        Identity("ricci_identity", "Y_{i,jk} - Y_{i,kj} = R_{kjin} Y_n", _ricci_identity),
        Identity(
            "simons_ric",
            "L Ric = 2 kappa Ric + 2 R_{kjin} phi_{nk} - phi_{ij,kk} - phi_{kk,ji} + phi_{jk,ki} + phi_{ik,kj}",
            _simons_ric,
        ),
        Identity(
            "simons_S",
            "drift Laplacian of S = 2 kappa S - 2|Ric|^2 - 2 Ric_{kn} phi_{nk} - 2 Laplacian phi_{kk} + 2 phi_{ik,ki}",
            _simons_s,
        ),
        Identity("bochner_grad", "drift Laplacian of grad u = grad(drift Laplacian u) + kappa grad u - phi(grad u)", _bochner_grad),
        Identity(
            "bochner_divf",
            "drift Laplacian of div_f Y = div_f(drift Laplacian Y) - kappa div_f Y + div_f(phi(Y))",
            _bochner_divf,
        ),
        Identity("gradS", "S_i / 2 = Ric_{ik} f_k - phi_{kk,i} + phi_{ik,k} = Ric_{ik,k}", _grad_s),
        Identity(
            "hessS",
            "S_{ij} / 2 = -phi_{ik,kj} - f_{kikj} = Ric_{ik,j} f_k + Ric_{ik} f_{kj} - phi_{kk,ij} + phi_{ik,kj}",
            _hess_s,
        ),
        Identity(
            "gradS_norm",
            "gradients of S + |grad f|^2 - 2 kappa f and of drift Laplacian f + 2 kappa f are linear in phi",
            _grad_s_norm,
        ),
        Identity(
            "delta_hess",
            "f_{ijkk} = -Ric_{ji,k} f_k + 2 R_{kjin} f_{nk} + phi_{kk,ji} - phi_{jk,ki} - phi_{ik,kj}",
            _delta_hess,
        ),
        Identity(
            "commute_Ldivfstar",
            "L div_f^* V = div_f^*(drift Laplacian V + kappa V) + phi-terms in grad V and V grad phi",
            _commute_ldivfstar,
        ),
        Identity(
            "commute_divfL",
            "div_f L h = (drift Laplacian + kappa) div_f h - h-terms against phi, div_f phi and grad phi",
            _commute_divfl,
        ),
        Identity(
            "hess_commute",
            "on a soliton L Hess_u = Hess of (2 kappa u + drift Laplacian u)",
            _hess_commute,
            soliton_only=True,
        ),
        Identity(
            "divf_riemann",
            "R_{kjin,k} - R_{nijk} f_k = phi_{ji,n} - phi_{jn,i}",
            _divf_riemann,
        ),
        Identity(
            "vec_fourth",
            "V_{i,jkk} = V_{i,kkj} + Ric_{jn} V_{i,n} + R_{nijk} f_k V_n + 2 R_{kjin} V_{n,k} + V_n (phi_{ji,n} - phi_{jn,i})",
            _vec_fourth,
        ),
        Identity(
            "dbochner_vec",
            "drift Laplacian of grad V = grad(drift Laplacian V) + kappa grad V + 2 R_{kjin} V_{n,k} - phi_{jn} V_{i,n} + V_n (phi_{ji,n} - phi_{jn,i})",
            _dbochner_vec,
        ),
        Identity(
            "dvast",
            "-2 P Y = grad div_f Y + drift Laplacian Y + Hess_f(Y) + Ric(Y)",
            _dvast,
        ),
        Identity(
            "adjoint_formula",
            "on a soliton div_f^* div_f h = kappa h - (1/2)(h_{jk,ki} - f_k h_{kj,i} + h_{ik,kj} - f_k h_{ik,j} + Ric h + h Ric)",
            _adjoint_formula,
            soliton_only=True,
        ),
    )
}

IDENTITY_IDS = tuple(IDENTITIES)


def get_identity(identity_id: str) -> Identity:
    try:
        return IDENTITIES[identity_id]
    except KeyError:
        raise UnknownIdentityError(f"Unknown identity {identity_id!r}.") from None


def _max_gap(pairs) -> jnp.ndarray:
    if isinstance(pairs, tuple):
        pairs = [pairs]
    return jnp.max(jnp.stack([jnp.max(jnp.abs(jnp.asarray(lhs) - jnp.asarray(rhs))) for lhs, rhs in pairs]))


class IdentityRunner:
    """Evaluates one identity on one chart at many points; compiled once per chart."""

    def __init__(self, chart: Chart, identity_id: str, fields: TestFields | None = None, gate: float | None = None):
        self.chart = chart
        self.identity = get_identity(identity_id)
        self.fields = fields or TestFields.random(chart.dim, option("seed"))
        self.gate = option("soliton_gate", gate)
        geo = Geometry(chart)

        def residual(x):
            return _max_gap(self.identity.evaluate(PointContext(geo, self.fields, x)))

        def phi_size(x):
            return jnp.max(jnp.abs(frame_components(geo.phi(x), geo.frame(x))))

        self._residual = jax.jit(residual)
        self._phi_size = jax.jit(phi_size)

    def residual(self, x) -> float:
        x = jnp.asarray(self.chart.check_point(x))
        if self.identity.soliton_only:
            size = float(self._phi_size(x))
            if size > self.gate:
                raise SolitonGateError(
                    f"{self.identity.name} needs a soliton point; max|phi| = {size:.3e} exceeds {self.gate:.1e}."
                )
        value = float(self._residual(x))
        logger.debug("identity %s at %s: residual %.3e", self.identity.name, np.asarray(x).tolist(), value)
        return value


@dataclass(frozen=True)
class IdentityResidual:
    identity_id: str
    residual: float
    order_estimate: float
    coarse_residual: float | None = None
    fine_residual: float | None = None


def identity_residual(
    chart: Chart,
    x,
    identity_id: str,
    step: float | None = None,
    fields: TestFields | None = None,
) -> IdentityResidual:
    """Residual of ``identity_id`` at ``x``.

    With ``step`` the chart is switched to finite-difference jets at ``step``
    and ``step / 2`` and ``order_estimate`` is log2 of the residual ratio; with
    no step the chart's own jet mode is used and the order is NaN.
    """
    if step is None:
        value = IdentityRunner(chart, identity_id, fields).residual(x)
        return IdentityResidual(identity_id, value, math.nan)
    coarse_chart = chart.with_jet_mode(JetMode.finite_difference(step))
    coarse = IdentityRunner(coarse_chart, identity_id, fields).residual(x)
    fine = IdentityRunner(coarse_chart.with_jet_mode(coarse_chart.jet_mode.halved()), identity_id, fields).residual(x)
    order = math.log2(coarse / fine) if coarse > 0 and fine > 0 else math.nan
    return IdentityResidual(identity_id, coarse, order, coarse, fine)

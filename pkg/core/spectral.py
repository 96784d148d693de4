"""Galerkin spectra of the drift Laplacian and of P = div_f div_f*.

Operators are applied to the raw basis family in one compiled sweep over
(node, element) pairs; matrices are weighted pairings against the orthonormal
elements.  On the Gaussian soliton both operators preserve polynomial degree,
so every matrix below is the exact restriction up to roundoff.
"""
from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field

import jax
import jax.numpy as jnp
import numpy as np
from scipy import linalg

from .bases import EUCLIDEAN_BLOCK, MIXED_BLOCK, SPHERE_BLOCK, SpectralBasis, build_basis, gram
from .calculus import divf_sym2, divf_vector, geometry, gradient, p_op, same_chart
from .conf import option
from .convergence import fit_power
from .exceptions import (
    ChartError,
    CommutationError,
    FitError,
    ModelError,
    NotAnEigenfieldError,
    RankMismatchError,
    RepresentationError,
    SolvabilityError,
)
from .fields import SCALAR, SYM2, VECTOR, Quadrature, TensorField, sample
from .geometry import Field, Geometry
from .model_spaces import CYLINDER, ModelGeometry, killing_fields

logger = logging.getLogger(__name__)

DRIFT = "drift"
P = "P"
L = "L"
TAGS = (DRIFT, P, L)

NODE_CHUNK = 256
CLUSTER_TOLERANCE = 1e-6


# ---------------------------------------------------------------------------
# Operator images of basis elements
# ---------------------------------------------------------------------------


def _operator(geo: Geometry, name: str, rank: str):
    divf = geo.divf_vector if rank == VECTOR else geo.divf_sym2
    table = {
        "value": lambda F: F,
        DRIFT: geo.drift_laplacian,
        P: geo.p_operator,
        "P_soliton": geo.p_operator_soliton,
        L: geo.l_operator,
        "nabla": geo.nabla,
        "divf": divf,
        "divf_star": geo.divf_star,
        "grad": geo.gradient,
        "hess": geo.hessian,
        "grad_divf": lambda F: geo.gradient(geo.divf_vector(F)),
        "drift_divf": lambda F: geo.drift_laplacian(geo.divf_vector(F)),
        "divf_P": lambda F: geo.divf_vector(geo.p_operator(F)),
        "drift_grad_divf": lambda F: geo.drift_laplacian(geo.gradient(geo.divf_vector(F))),
        "grad_divf_P": lambda F: geo.gradient(geo.divf_vector(geo.p_operator(F))),
        "L_divf_star": lambda F: geo.l_operator(geo.divf_star(F)),
        "hess_divf": lambda F: geo.hessian(geo.divf_vector(F)),
        "divf_star_P": lambda F: geo.divf_star(geo.p_operator(F)),
        "P_grad": lambda F: geo.p_operator(geo.gradient(F)),
        "grad_drift": lambda F: geo.gradient(geo.drift_laplacian(F)),
    }
    try:
        return table[name]
    except KeyError:
        raise ValueError(f"Unknown operator {name!r}.") from None


def raw_images(geo: Geometry, raw: Field, count: int, nodes: np.ndarray, name: str, rank: str) -> np.ndarray:
    """Operator ``name`` applied to each of ``count`` raw elements, at every node."""
    build = _operator(geo, name, rank)

    def apply(c, x):
        return build(lambda y: jnp.tensordot(c, raw(y), axes=1))(x)

    sweep = jax.jit(jax.vmap(jax.vmap(apply, in_axes=(0, None)), in_axes=(None, 0)))
    eye = jnp.eye(count)
    chunks = [
        np.asarray(sweep(eye, jnp.asarray(nodes[start : start + NODE_CHUNK])))
        for start in range(0, nodes.shape[0], NODE_CHUNK)
    ]
    return np.concatenate(chunks, axis=0)


@functools.lru_cache(maxsize=64)
def basis_images(basis: SpectralBasis, name: str) -> np.ndarray:
    """Images of the orthonormal elements at the basis nodes, (count, size, *shape)."""
    raw = raw_images(
        geometry(basis.chart), basis.raw, basis.transform.shape[0], basis.quadrature.nodes, name, basis.rank
    )
    return np.einsum("nk...,ka->na...", raw, basis.transform)


def combine_nodes(images: np.ndarray, coeffs) -> np.ndarray:
    return np.einsum("na...,a->n...", images, np.asarray(coeffs, dtype=float))


def _norm(values: np.ndarray, q: Quadrature) -> float:
    return float(math.sqrt(max(gram(values[:, None], values[:, None], q)[0, 0], 0.0)))


def _column_norms(images: np.ndarray, q: Quadrature) -> np.ndarray:
    return np.sqrt(np.maximum(np.diag(gram(images, images, q)), 0.0))


# ---------------------------------------------------------------------------
# Assembly and eigenpairs
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    tag: str
    basis: SpectralBasis
    matrix: np.ndarray
    symmetry_gap: float
    quadrature_order: int
    min_eigenvalue: float = math.nan

    @property
    def sign(self) -> float:
        """Eigenvalues are reported for -drift and -L, and for P itself."""
        return 1.0 if self.tag == P else -1.0

    def symmetric(self) -> np.ndarray:
        return 0.5 * (self.matrix + self.matrix.T)


def assemble(basis: SpectralBasis, tag: str) -> OperatorMatrix:
    if tag not in TAGS:
        raise ValueError(f"Unknown operator tag {tag!r}.")
    if tag == P and basis.rank != VECTOR:
        raise RankMismatchError("P acts on vector fields.")
    if tag == L and basis.rank != SYM2:
        raise RankMismatchError("L acts on symmetric 2-tensors.")
    q = basis.quadrature
    matrix = gram(basis.orthonormal_nodes(), basis_images(basis, tag), q)
    gap = float(np.abs(matrix - matrix.T).max())
    lowest = math.nan
    if tag == P:
        lowest = float(linalg.eigvalsh(0.5 * (matrix + matrix.T)).min())
    logger.info("assembled %s on %s: size %d, symmetry gap %.2e", tag, basis.descriptor, basis.size, gap)
    return OperatorMatrix(tag, basis, matrix, gap, int(round(math.sqrt(q.size))), lowest)


@dataclass(frozen=True)
class EigenPair:
    eigenvalue: float
    coefficients: np.ndarray = field(repr=False)
    residual: float
    divf_norm: float | None = None


def _divf_norms(basis: SpectralBasis, vectors: np.ndarray) -> list[float | None]:
    if basis.rank == SCALAR:
        return [None] * vectors.shape[1]
    images = np.einsum("na...,ak->nk...", basis_images(basis, "divf"), vectors)
    return [float(v) for v in _column_norms(images, basis.quadrature)]


def eigenpairs(operator: OperatorMatrix, k: int | None = None) -> list[EigenPair]:
    """Lowest ``k`` eigenpairs, ascending, with residuals and div_f norms."""
    a = operator.sign * operator.symmetric()
    values, vectors = linalg.eigh(a)
    k = len(values) if k is None else min(k, len(values))
    values, vectors = values[:k], vectors[:, :k]
    residuals = np.linalg.norm(a @ vectors - vectors * values, axis=0)
    norms = _divf_norms(operator.basis, vectors)
    return [EigenPair(float(values[i]), vectors[:, i], float(residuals[i]), norms[i]) for i in range(k)]


def clusters(values, tolerance: float = CLUSTER_TOLERANCE) -> list[list[int]]:
    """Group indices of ascending eigenvalues that agree within ``tolerance``."""
    groups: list[list[int]] = []
    for index, value in enumerate(values):
        if groups and abs(value - values[groups[-1][0]]) < tolerance:
            groups[-1].append(index)
        else:
            groups.append([index])
    return groups


def commutator_gap(basis: SpectralBasis) -> float:
    """Spectral norm of [drift, P] on the assembled matrices."""
    drift = assemble(basis, DRIFT).symmetric()
    p = assemble(basis, P).symmetric()
    return float(np.linalg.norm(drift @ p - p @ drift, ord=2))


def block_coupling(model: ModelGeometry, tag: str, degree: int, sphere_degree: int) -> float:
    """Largest weighted pairing <op a, b> with a and b in different cylinder sym2 blocks."""
    if model.variant != CYLINDER:
        raise ModelError("Block coupling is measured on cylinders.")
    blocks = {name: build_basis(model, SYM2, degree, sphere_degree, block=name)
              for name in (SPHERE_BLOCK, MIXED_BLOCK, EUCLIDEAN_BLOCK)}
    worst = 0.0
    for source, basis in blocks.items():
        q = basis.quadrature
        images = basis_images(basis, tag)
        for target, other in blocks.items():
            if target == source:
                continue
            values = np.einsum("nk...,ka->na...", sample(other.raw, q.nodes), other.transform)
            worst = max(worst, float(np.abs(gram(values, images, q)).max()))
    logger.info("block coupling of %s on %s: %.2e", tag, model.descriptor, worst)
    return worst


def joint_eigenvectors(basis: SpectralBasis) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(mu, lambda, coefficient columns) of fields that are eigen for -drift and for P, by lambda."""
    drift = assemble(basis, DRIFT).symmetric()
    p = assemble(basis, P).symmetric()
    values, vectors = linalg.eigh(-drift)
    mus, lams, columns = [], [], []
    for group in clusters(values):
        block = vectors[:, group]
        block_lams, inner = linalg.eigh(block.T @ p @ block)
        mus += [float(np.mean(values[group]))] * len(group)
        lams += [float(lam) for lam in block_lams]
        columns.append(block @ inner)
    order = np.argsort(lams, kind="stable")
    return np.asarray(mus)[order], np.asarray(lams)[order], np.concatenate(columns, axis=1)[:, order]


# ---------------------------------------------------------------------------
# Simultaneous eigenfields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MuLambdaRow:
    mu: float
    lam: float
    divf_norm: float
    equality: bool
    consistent: bool

    @property
    def gap(self) -> float:
        return self.mu - 2.0 * self.lam


@dataclass(frozen=True)
class MuLambdaReport:
    rows: tuple[MuLambdaRow, ...]
    commutator: float
    tolerance: float

    @property
    def violations(self) -> int:
        return sum(row.gap > 0.5 + self.tolerance for row in self.rows)

    @property
    def inconsistencies(self) -> int:
        return sum(not row.consistent for row in self.rows)

    @property
    def max_gap(self) -> float:
        return max(row.gap for row in self.rows)


def check_mu_lambda(
    basis: SpectralBasis,
    tolerance: float | None = None,
    divf_tolerance: float = 1e-6,
    commutation_tolerance: float = 1e-8,
) -> MuLambdaReport:
    """mu - 2 lambda <= 1/2 on joint eigenfields, with equality exactly when div_f V = 0."""
    if basis.rank != VECTOR:
        raise RankMismatchError("Joint eigenfields of the drift Laplacian and P are vector fields.")
    tolerance = option("spectral_tol", tolerance)
    commutator = commutator_gap(basis)
    if commutator > commutation_tolerance:
        raise CommutationError(f"Drift Laplacian and P blocks fail to commute: {commutator:.3e}.")
    mus, lams, vectors = joint_eigenvectors(basis)
    rows = []
    for mu, lam, norm in zip(mus, lams, _divf_norms(basis, vectors)):
        equality = abs(mu - 2.0 * lam - 0.5) < tolerance
        rows.append(MuLambdaRow(float(mu), float(lam), norm, equality, equality == (norm < divf_tolerance)))
    report = MuLambdaReport(tuple(rows), commutator, tolerance)
    logger.info(
        "mu-lambda check on %s: %d pairs, %d violations, %d inconsistent",
        basis.descriptor,
        len(rows),
        report.violations,
        report.inconsistencies,
    )
    return report


# ---------------------------------------------------------------------------
# Poisson solve
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PoissonSolution:
    Y: TensorField
    residual: float
    relative_residual: float
    divf_h_norm: float
    projection_residual: float
    kernel_dimension: int
    kernel_pairing: float
    killing_pairing: float
    norms: dict[str, float]

    @property
    def constant(self) -> float:
        """Measured C in ||Y||_{W^{1,2}} + ||div_f Y||_{W^{1,2}} + ||drift Y|| <= C ||div_f h||."""
        if self.divf_h_norm == 0.0:
            return 0.0
        return sum(self.norms.values()) / self.divf_h_norm


def solve_P(
    h: TensorField,
    basis: SpectralBasis,
    kernel_threshold: float | None = None,
    tolerance: float | None = None,
) -> PoissonSolution:
    """Y orthogonal to the kernel of P with P Y = div_f h / 2.

    Grid right-hand sides are paired with the basis under the grid's own
    trapezoid rule; the residual is then measured on the grid as well.
    """
    if h.rank != SYM2:
        raise RankMismatchError("solve_P needs a symmetric 2-tensor right-hand side.")
    if basis.rank != VECTOR:
        raise RankMismatchError("solve_P needs a vector basis.")
    kernel_threshold = option("kernel_threshold", kernel_threshold)
    tolerance = option("spectral_tol", tolerance)
    q = basis.quadrature
    geo = geometry(basis.chart)
    if h.is_grid:
        if not same_chart(h.chart, basis.chart):
            raise RepresentationError("Grid right-hand side and basis live on different charts.")
        rhs_q = Quadrature.on_grid(h.grid, basis.chart)
        divf_h = divf_sym2(h).sample(rhs_q)
        elements = np.einsum("nk...,ka->na...", sample(basis.raw, rhs_q.nodes), basis.transform)
    else:
        rhs_q = q
        divf_h = sample(geo.divf_sym2(h.function), q.nodes)
        elements = basis.orthonormal_nodes()
    divf_h_norm = _norm(divf_h, rhs_q)
    rhs = 0.5 * gram(elements, divf_h[:, None], rhs_q)[:, 0]
    captured = 2.0 * np.linalg.norm(rhs)
    projection_residual = math.sqrt(max(divf_h_norm**2 - captured**2, 0.0))

    values, vectors = linalg.eigh(assemble(basis, P).symmetric())
    kernel = values < kernel_threshold
    pairing = float(np.abs(vectors[:, kernel].T @ rhs).max()) if kernel.any() else 0.0
    if pairing > tolerance * max(1.0, float(np.linalg.norm(rhs))):
        raise SolvabilityError(f"div_f h pairs with the kernel of P: {pairing:.3e}.")
    live = vectors[:, ~kernel]
    coeffs = live @ ((live.T @ rhs) / values[~kernel])
    Y = basis.field(coeffs)

    if h.is_grid:
        p_y = sample(geo.p_operator(Y.function), rhs_q.nodes)
    else:
        p_y = combine_nodes(basis_images(basis, P), coeffs)
    residual = _norm(divf_h - 2.0 * p_y, rhs_q)
    killing = killing_fields(basis.model)
    y_nodes = Y.sample(q)
    killing_pairing = max(
        (abs(gram(y_nodes[:, None], k.sample(q)[:, None], q)[0, 0]) for k in killing.values()), default=0.0
    )

    nabla_y = combine_nodes(basis_images(basis, "nabla"), coeffs)
    div_y = combine_nodes(basis_images(basis, "divf"), coeffs)
    grad_div_y = combine_nodes(basis_images(basis, "grad_divf"), coeffs)
    drift_y = combine_nodes(basis_images(basis, DRIFT), coeffs)
    norms = {
        "Y_W12": math.hypot(float(np.linalg.norm(coeffs)), _norm(nabla_y, q)),
        "divf_Y_W12": math.hypot(_norm(div_y, q), _norm(grad_div_y, q)),
        "drift_Y": _norm(drift_y, q),
    }
    solution = PoissonSolution(
        Y=Y,
        residual=residual,
        relative_residual=residual / divf_h_norm if divf_h_norm > 0 else residual,
        divf_h_norm=divf_h_norm,
        projection_residual=projection_residual,
        kernel_dimension=int(kernel.sum()),
        kernel_pairing=pairing,
        killing_pairing=float(killing_pairing),
        norms=norms,
    )
    logger.info(
        "solve_P on %s: residual %.2e (relative %.2e), kernel %d",
        basis.descriptor,
        residual,
        solution.relative_residual,
        solution.kernel_dimension,
    )
    return solution


# ---------------------------------------------------------------------------
# Growth of weighted level-set averages
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GrowthProfile:
    label: str
    radii: tuple[float, ...]
    values: tuple[float, ...]
    window: tuple[float, float]
    slope: float
    bound: float | None = None
    vanishing: bool = False

    def within(self, tolerance: float) -> bool:
        return self.bound is None or self.slope <= self.bound + tolerance


def level_average(values: TensorField, model: ModelGeometry, r: float, order: int) -> float:
    """r^{1-n} times the integral of |Y|^2 |grad b| over {b = r}."""
    q = model.level_set_quad(r, order)
    y = values.sample(q)[:, None]
    return r ** (1 - model.n) * float(gram(y, y, q)[0, 0])


def growth_profile(
    Y: TensorField,
    radii,
    model: ModelGeometry,
    window=None,
    order: int | None = None,
    bound: float | None = None,
    label: str = "Y",
) -> GrowthProfile:
    radii = tuple(float(r) for r in radii)
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise FitError("Radii must be strictly increasing.")
    lo, hi = option("fit_window", window)
    order = order or option("degree") + 2
    values = tuple(level_average(Y, model, r, order) for r in radii)
    fitted = [(r, v) for r, v in zip(radii, values) if lo <= r <= hi]
    if len(fitted) < 3:
        raise FitError(f"Growth fit needs at least three radii in [{lo}, {hi}].")
    vanishing = max(values) < 1e-20
    slope = 0.0 if vanishing else fit_power(*zip(*fitted))[0]
    logger.debug("growth of %s: slope %.4f (bound %s)", label, slope, bound)
    return GrowthProfile(label, radii, values, (float(lo), float(hi)), float(slope), bound, vanishing)


def default_radii(window=None, count: int | None = None) -> list[float]:
    lo, hi = option("fit_window", window)
    return list(np.linspace(lo, hi, option("fit_radii", count)))


def eigenfield_growth(
    Y: TensorField, lam: float, model: ModelGeometry, radii=None, delta: float | None = None, window=None
) -> tuple[GrowthProfile, GrowthProfile]:
    """Profiles of grad div_f Y and of Z, against the exponents 4 lambda + delta and 8 lambda + 2 + delta."""
    delta = option("growth_delta", delta)
    radii = radii or default_radii(window)
    kappa = model.chart.kappa
    grad_div = gradient(divf_vector(Y))
    z = _z_field(Y, grad_div, lam, kappa)
    return (
        growth_profile(grad_div, radii, model, window, bound=4.0 * lam + delta, label="grad_divf_Y"),
        growth_profile(z, radii, model, window, bound=8.0 * lam + 2.0 + delta, label="Z"),
    )


def killing_growth(model: ModelGeometry, radii=None, delta: float | None = None, window=None) -> list[GrowthProfile]:
    delta = option("growth_delta", delta)
    radii = radii or default_radii(window)
    return [
        growth_profile(k, radii, model, window, bound=2.0 + delta, label=name)
        for name, k in killing_fields(model).items()
    ]


def poisson_growth(
    solution: PoissonSolution,
    model: ModelGeometry,
    radii=None,
    beta: float | None = None,
    delta: float | None = None,
    window=None,
) -> GrowthProfile:
    """grad div_f Y for P Y = V against 4 (lambda + beta) + delta, lambda = 0."""
    beta = option("poisson_beta", beta)
    delta = option("growth_delta", delta)
    radii = radii or default_radii(window)
    grad_div = gradient(divf_vector(solution.Y))
    return growth_profile(grad_div, radii, model, window, bound=4.0 * beta + delta, label="poisson_grad_divf_Y")


# ---------------------------------------------------------------------------
# Eigenfield splitting
# ---------------------------------------------------------------------------


def _z_field(Y: TensorField, grad_div: TensorField, lam: float, kappa: float) -> TensorField:
    y, g = Y.function, grad_div.function
    scale = 1.0 / (lam + kappa)
    return TensorField.closed_form(VECTOR, Y.chart, lambda x: y(x) + scale * g(x))


@dataclass(frozen=True)
class ZDecomposition:
    Z: TensorField
    lam: float
    eigen_residual: float
    divf_Z: float
    pythagoras_gap: float
    grad_div_relation: float
    z_relation: float


def z_decompose(Y: TensorField, lam: float, q: Quadrature, tolerance: float | None = None) -> ZDecomposition:
    """Z = Y + grad div_f Y / (lambda + kappa) for an eigenfield P Y = lambda Y."""
    if Y.rank != VECTOR:
        raise RankMismatchError("z_decompose needs a vector field.")
    kappa = Y.chart.kappa
    if abs(lam + kappa) < 1e-12:
        raise NotAnEigenfieldError("lambda = -kappa leaves Z undefined.")
    tolerance = option("spectral_tol", tolerance)
    y = Y.sample(q)
    y_norm = _norm(y, q)
    eigen_residual = _norm(p_op(Y).sample(q) - lam * y, q)
    if eigen_residual > tolerance * max(y_norm, 1.0):
        raise NotAnEigenfieldError(f"P Y - lambda Y has norm {eigen_residual:.3e}.")
    geo = geometry(Y.chart)
    div = divf_vector(Y)
    grad_div = gradient(div)
    Z = _z_field(Y, grad_div, lam, kappa)
    z = Z.sample(q)
    gd = grad_div.sample(q)
    drift_gd = sample(geo.drift_laplacian(grad_div.function), q.nodes)
    drift_z = sample(geo.drift_laplacian(Z.function), q.nodes)
    return ZDecomposition(
        Z=Z,
        lam=lam,
        eigen_residual=eigen_residual,
        divf_Z=_norm(sample(geo.divf_vector(Z.function), q.nodes), q),
        pythagoras_gap=abs(y_norm**2 - _norm(z, q) ** 2 - _norm(gd, q) ** 2 / (lam + kappa) ** 2),
        grad_div_relation=_norm(drift_gd + lam * gd, q),
        z_relation=_norm(drift_z + (2.0 * lam + kappa) * z, q),
    )


def eigenfields(basis: SpectralBasis, count: int | None = None) -> list[tuple[float, TensorField]]:
    """Eigenfields of P that are also drift eigenfields, as (lambda, field) pairs."""
    _, lams, vectors = joint_eigenvectors(basis)
    out = [(float(lam), basis.field(column)) for lam, column in zip(lams, vectors.T)]
    return out[:count] if count else out


# ---------------------------------------------------------------------------
# Inequalities on basis fields
# ---------------------------------------------------------------------------


def interpolation_checks(basis: SpectralBasis) -> np.ndarray:
    """Rows (lhs, rhs) of ||nabla Y||^2 + ||div_f Y||^2 <= 2 ||Y|| ||(2P + kappa) Y|| per element."""
    q = basis.quadrature
    kappa = basis.chart.kappa
    grad = _column_norms(basis_images(basis, "nabla"), q)
    div = _column_norms(basis_images(basis, "divf"), q)
    shifted = 2.0 * basis_images(basis, P) + kappa * basis.orthonormal_nodes()
    rhs = 2.0 * _column_norms(shifted, q)
    return np.stack([grad**2 + div**2, rhs], axis=1)


def concentration_checks(basis: SpectralBasis) -> np.ndarray:
    """Rows (lhs, rhs) of int |F|^2 (f - n) e^{-f} <= 4 int |nabla F|^2 e^{-f} per element."""
    q = basis.quadrature
    f = sample(basis.chart.weight_eval, q.nodes)
    values = basis.orthonormal_nodes()
    lhs = np.diag(gram(values * (f - basis.model.n).reshape((-1,) + (1,) * (values.ndim - 1)), values, q))
    rhs = 4.0 * _column_norms(basis_images(basis, "nabla"), q) ** 2
    return np.stack([lhs, rhs], axis=1)


def relation_gaps(basis: SpectralBasis) -> dict[str, float]:
    """Largest weighted defect over basis elements of the P-relations for this rank."""
    q = basis.quadrature
    kappa = basis.chart.kappa
    images = functools.partial(basis_images, basis)
    if basis.rank == SCALAR:
        defect = images("P_grad") + images("grad_drift") + kappa * images("grad")
        return {"P_grad": float(_column_norms(defect, q).max())}
    if basis.rank != VECTOR:
        raise RankMismatchError("Relations are checked on scalar or vector bases.")
    gaps = {
        "drift_divf": images("drift_divf") + kappa * images("divf") + images("divf_P"),
        "drift_grad_divf": images("drift_grad_divf") + images("grad_divf_P"),
        "L_divf_star": images("L_divf_star") - images("hess_divf") + 2.0 * images("divf_star_P"),
        "P_soliton": images(P) - images("P_soliton"),
    }
    return {name: float(_column_norms(defect, q).max()) for name, defect in gaps.items()}


def splitting_check(basis: SpectralBasis, scalar_degree: int | None = None) -> float:
    """Largest weighted pairing of grad u with div_f-free eigenfields of P."""
    scalars = build_basis(basis.model, SCALAR, scalar_degree or max(basis.degree - 1, 1), basis.sphere_degree)
    _, _, vectors = joint_eigenvectors(basis)
    free = vectors[:, [i for i, norm in enumerate(_divf_norms(basis, vectors)) if norm < 1e-8]]
    if free.shape[1] == 0:
        return 0.0
    raw = sample(basis.raw, scalars.quadrature.nodes)
    fields = np.einsum("nk...,ka,ab->nb...", raw, basis.transform, free)
    return float(np.abs(gram(basis_images(scalars, "grad"), fields, scalars.quadrature)).max())


# ---------------------------------------------------------------------------
# Perturbed cylinder spectrum
# ---------------------------------------------------------------------------


def conformal_perturbation(model: ModelGeometry, seed: int = 0) -> TensorField:
    """s * g with s = cos(<a, z> + <c, x>) for seeded a, c; smooth on the whole sphere."""
    rng = np.random.default_rng(seed)
    a = jnp.asarray(rng.uniform(-1.0, 1.0, model.ell + 1))
    c = jnp.asarray(rng.uniform(-0.3, 0.3, model.m))

    def perturbation(x):
        z = model.embed_sphere(x[: model.ell]) / model.sphere_radius
        return jnp.cos(a @ z + c @ x[model.ell :]) * model.chart.metric_eval(x)

    return TensorField.closed_form(SYM2, model.chart, perturbation)


@dataclass(frozen=True)
class GapRow:
    mu: float
    grad_norm2: float
    hess_norm2: float
    hess_target: float
    concentration: tuple[float, float]
    localisation: tuple[tuple[float, float, float], ...]


@dataclass(frozen=True)
class GapProbe:
    amplitude: float
    eigenvalues: tuple[float, ...]
    baseline: tuple[float, ...]
    half_multiplicity: int
    rows: tuple[GapRow, ...]

    @property
    def drift(self) -> tuple[float, ...]:
        return tuple(a - b for a, b in zip(self.eigenvalues, self.baseline))


def _function_spectrum(basis: SpectralBasis, chart, count: int, levels) -> tuple[np.ndarray, list[GapRow]]:
    q = basis.quadrature
    nodes = q.nodes
    background = sample(basis.chart.metric_eval, nodes)
    metric = sample(chart.metric_eval, nodes)
    if np.linalg.eigvalsh(metric).min() <= 0:
        raise ChartError("Perturbed metric is not positive definite at the quadrature nodes.")
    ratio = np.sqrt(np.linalg.det(metric) / np.linalg.det(background))
    g_inv = np.linalg.inv(metric)
    w = q.weights * q.density() * ratio
    size = basis.transform.shape[0]
    if chart is basis.chart:
        grads, hess = basis_images(basis, "grad"), basis_images(basis, "hess")
    else:
        geo = Geometry(chart)
        to_basis = basis.transform
        grads = np.einsum("nk...,ka->na...", raw_images(geo, basis.raw, size, nodes, "grad", SCALAR), to_basis)
        hess = np.einsum("nk...,ka->na...", raw_images(geo, basis.raw, size, nodes, "hess", SCALAR), to_basis)
    values = basis.orthonormal_nodes()
    a = np.einsum("nap,npq,nbq,n->ab", grads, g_inv, grads, w)
    b = np.einsum("na,nb,n->ab", values, values, w)
    mus, vectors = linalg.eigh(0.5 * (a + a.T), 0.5 * (b + b.T))
    f = sample(chart.weight_eval, nodes)
    n = basis.model.n
    rows = []
    for index in range(min(count, len(mus))):
        v = vectors[:, index]
        vv = values @ v
        gv = np.einsum("nap,a->np", grads, v)
        hv = np.einsum("napq,a->npq", hess, v)
        grad2 = np.einsum("np,npq,nq->n", gv, g_inv, gv)
        hess2 = np.einsum("npq,npr,nqs,nrs->n", hv, g_inv, g_inv, hv)
        mu = float(mus[index])
        localisation = []
        for s in levels:
            outside = f >= s * s / 4.0
            lhs = s * s / 4.0 * float(np.sum(w * outside * (vv**2 + grad2)))
            localisation.append((float(s), lhs, 4.0 * mu * mu + (n + 2) * mu + n))
        rows.append(
            GapRow(
                mu=mu,
                grad_norm2=float(np.sum(w * grad2)),
                hess_norm2=float(np.sum(w * hess2)),
                hess_target=(mu - 0.5) * mu,
                concentration=(float(np.sum(w * vv**2 * (f - n))), 4.0 * float(np.sum(w * grad2))),
                localisation=tuple(localisation),
            )
        )
    return mus[:count], rows


def spectral_gap_probe(
    model: ModelGeometry,
    amplitude: float,
    perturbation: TensorField | None = None,
    degree: int | None = None,
    sphere_degree: int | None = None,
    count: int = 8,
    levels=(2.0, 3.0, 4.0),
) -> GapProbe:
    """Lowest function eigenvalues of -drift on the cylinder with metric g + amplitude * p."""
    if model.variant != CYLINDER:
        raise ModelError("The spectral gap probe runs on cylinders.")
    degree = option("degree", degree)
    sphere_degree = option("sphere_degree", sphere_degree)
    basis = build_basis(model, SCALAR, degree, sphere_degree)
    baseline, base_rows = _function_spectrum(basis, model.chart, count, levels)
    if amplitude == 0.0:
        mus, rows = baseline, base_rows
    else:
        p = (perturbation or conformal_perturbation(model)).function
        g = model.chart.metric_eval
        chart = model.chart.with_evaluators(lambda x: g(x) + amplitude * p(x), model.chart.weight_eval)
        mus, rows = _function_spectrum(basis, chart, count, levels)
    half = sum(abs(mu - 0.5) < CLUSTER_TOLERANCE for mu in baseline)
    logger.info("gap probe at amplitude %.2e: lowest %s", amplitude, np.round(mus[:count], 6).tolist())
    return GapProbe(
        amplitude=float(amplitude),
        eigenvalues=tuple(float(mu) for mu in mus),
        baseline=tuple(float(mu) for mu in baseline),
        half_multiplicity=int(half),
        rows=tuple(rows),
    )

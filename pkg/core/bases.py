"""Weight-orthonormal polynomial bases on the model shrinkers.

Raw elements are Hermite products He_a(x / sqrt 2) on the Euclidean factor,
times ambient monomials of the unit sphere on cylinders, times frame tensors:
constant on the Gaussian, built from the tangent one-forms dz_a of the sphere
on cylinders.  The raw family may be linearly dependent (|z| = 1 on the sphere);
orthonormalisation through the Gram matrix drops the null directions.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import jax
import jax.numpy as jnp
import numpy as np
from scipy import linalg

from .exceptions import ModelError, QuadratureError, RankMismatchError
from .fields import SCALAR, SYM2, VECTOR, Quadrature, TensorField, sample
from .geometry import Field
from .model_spaces import CYLINDER, GAUSSIAN, ModelGeometry

logger = logging.getLogger(__name__)

NULL_DIRECTION = 1e-10
GRAM_TOLERANCE = 1e-8

SPHERE_BLOCK = "sphere"
MIXED_BLOCK = "mixed"
EUCLIDEAN_BLOCK = "euclidean"
CONFORMAL_BLOCK = "conformal"
SYM2_BLOCKS = (SPHERE_BLOCK, MIXED_BLOCK, EUCLIDEAN_BLOCK, CONFORMAL_BLOCK)


def multi_indices(dim: int, degree: int) -> list[tuple[int, ...]]:
    """Exponents with total degree <= ``degree``, by degree then lexicographically."""
    out = [alpha for alpha in itertools.product(range(degree + 1), repeat=dim) if sum(alpha) <= degree]
    return sorted(out, key=lambda alpha: (sum(alpha), tuple(-a for a in alpha)))


def hermite_values(t, degree: int):
    """He_0(t) ... He_degree(t) stacked on the last axis."""
    values = [jnp.ones_like(t), t]
    for k in range(1, degree):
        values.append(t * values[k] - k * values[k - 1])
    return jnp.stack(values[: degree + 1], axis=-1)


def hermite_products(alphas: list[tuple[int, ...]], start: int, degree: int) -> Field:
    index = jnp.asarray(np.array(alphas, dtype=int).reshape(len(alphas), -1))
    dim = index.shape[1]

    def evaluate(x):
        if dim == 0:
            return jnp.ones(index.shape[0]) + 0.0 * x[0]
        table = hermite_values(x[start : start + dim] / math.sqrt(2.0), degree)
        return jnp.prod(table[jnp.arange(dim)[None, :], index], axis=1)

    return evaluate


def sphere_monomials(model: ModelGeometry, degree: int) -> tuple[Field, list[tuple[int, ...]]]:
    """Ambient monomials of the unit sphere, as functions of patch coordinates."""
    betas = multi_indices(model.ell + 1, degree)
    index = jnp.asarray(np.array(betas, dtype=int))
    axes = jnp.arange(model.ell + 1)[None, :]
    radius = model.sphere_radius

    def evaluate(x):
        z = model.embed_sphere(x[: model.ell]) / radius
        table = jnp.stack([jnp.ones_like(z)] + [z**k for k in range(1, degree + 1)], axis=-1)
        return jnp.prod(table[axes, index], axis=1)

    return evaluate, betas


def _sym_frame(dim: int) -> np.ndarray:
    """Orthonormal frame of symmetric matrices for the Euclidean inner product."""
    out = []
    for i in range(dim):
        e = np.zeros((dim, dim))
        e[i, i] = 1.0
        out.append(e)
    for i in range(dim):
        for j in range(i + 1, dim):
            e = np.zeros((dim, dim))
            e[i, j] = e[j, i] = 1.0 / math.sqrt(2.0)
            out.append(e)
    return np.array(out)


def _raise_all(values: np.ndarray, g_inv: np.ndarray) -> np.ndarray:
    """Raise every tensor slot of (count, k, *shape) values with per-node g_inv."""
    for slot in range(2, values.ndim):
        moved = np.moveaxis(values, slot, -1)
        values = np.moveaxis(np.einsum("nk...p,npq->nk...q", moved, g_inv), -1, slot)
    return values


def gram(a: np.ndarray, b: np.ndarray, q: Quadrature) -> np.ndarray:
    """Weighted pairing matrix of two stacks of node values (count, k, *shape)."""
    if a.ndim > 2:
        a = _raise_all(a, np.linalg.inv(sample(q.chart.metric_eval, q.nodes)))
    w = q.weights * q.density()
    return np.einsum("nkc,nlc,n->kl", a.reshape(a.shape[0], a.shape[1], -1), b.reshape(b.shape[0], b.shape[1], -1), w)


@dataclass(eq=False)
class SpectralBasis:
    model: ModelGeometry
    rank: str
    degree: int
    sphere_degree: int
    raw: Field = field(repr=False)
    labels: tuple[str, ...] = field(repr=False)
    quadrature: Quadrature = field(repr=False)
    transform: np.ndarray = field(repr=False)
    raw_nodes: np.ndarray = field(repr=False)
    gram_drift: float = 0.0
    block: str | None = None

    @property
    def chart(self):
        return self.model.chart

    @property
    def size(self) -> int:
        return self.transform.shape[1]

    @property
    def descriptor(self) -> str:
        out = f"{self.model.descriptor}/{self.rank}/degree={self.degree}/sphere={self.sphere_degree}"
        return out if self.block is None else f"{out}/{self.block}"

    def combine(self, coeffs) -> Field:
        weights = jnp.asarray(self.transform @ np.asarray(coeffs, dtype=float))
        raw = self.raw
        return lambda x: jnp.tensordot(weights, raw(x), axes=1)

    def element(self, index: int) -> Field:
        coeffs = np.zeros(self.size)
        coeffs[index] = 1.0
        return self.combine(coeffs)

    def field(self, coeffs) -> TensorField:
        return TensorField.spectral(self, coeffs)

    def sample_coeffs(self, coeffs) -> np.ndarray:
        return np.tensordot(self.transform @ np.asarray(coeffs, dtype=float), self.raw_nodes, axes=([0], [1]))

    def orthonormal_nodes(self) -> np.ndarray:
        """Orthonormal elements at the quadrature nodes, shape (count, size, *shape)."""
        return np.einsum("nk...,ka->na...", self.raw_nodes, self.transform)

    def project(self, source: TensorField) -> TensorField:
        """Weighted L^2 projection of ``source`` onto the span."""
        if source.rank != self.rank:
            raise RankMismatchError(f"Cannot project a {source.rank} field onto a {self.rank} basis.")
        values = source.sample(self.quadrature)[:, None]
        coeffs = gram(self.orthonormal_nodes(), values, self.quadrature)[:, 0]
        return TensorField.spectral(self, coeffs)

    def projection_residual(self, source: TensorField) -> float:
        """Weighted norm of what the projection misses."""
        q = self.quadrature
        values = source.sample(q)[:, None]
        total = gram(values, values, q)[0, 0]
        captured = np.sum(self.project(source).coeffs ** 2)
        return float(np.sqrt(max(total - captured, 0.0)))


def _raw_family(
    model: ModelGeometry, rank: str, degree: int, sphere_degree: int, block: str | None = None
) -> tuple[Field, list[str]]:
    if block is not None and rank != SYM2:
        raise RankMismatchError("Blocks split symmetric 2-tensors only.")
    m, ell, n = model.m, model.ell, model.n
    alphas = multi_indices(m, degree)
    euclid = hermite_products(alphas, ell, degree)
    euclid_labels = ["He" + "".join(str(a) for a in alpha) for alpha in alphas]
    if model.variant == CYLINDER:
        sphere, betas = sphere_monomials(model, sphere_degree)
        sphere_labels = ["z" + "".join(str(b) for b in beta) for beta in betas]

        def scalar(x):
            return jnp.outer(sphere(x), euclid(x)).ravel()

        scalar_labels = [f"{s}*{e}" for s in sphere_labels for e in euclid_labels]
    else:
        scalar, scalar_labels = euclid, euclid_labels

    if rank == SCALAR:
        return scalar, scalar_labels

    if rank == VECTOR:
        if model.variant == GAUSSIAN:
            eye = jnp.eye(n)

            def vector(x):
                return jnp.einsum("k,ij->kij", scalar(x), eye).reshape(-1, n)

            return vector, [f"{s}.e{i}" for s in scalar_labels for i in range(n)]

        embed = jax.jacfwd(model.embed_sphere)
        euclid_frame = jnp.eye(n)[ell:]

        def vector(x):
            # tangential part of the ambient directions, lowered into patch coordinates
            tangent = jnp.concatenate([embed(x[:ell]), jnp.zeros((ell + 1, m))], axis=1)
            frame = jnp.concatenate([tangent, euclid_frame], axis=0)
            return jnp.einsum("k,ij->kij", scalar(x), frame).reshape(-1, n)

        frame_labels = [f"t{a}" for a in range(ell + 1)] + [f"e{ell + j}" for j in range(m)]
        return vector, [f"{s}.{f}" for s in scalar_labels for f in frame_labels]

    if rank == SYM2:
        if model.variant == GAUSSIAN:
            if block is not None:
                raise ModelError("Symmetric 2-tensor blocks split the cylinder factors; the Gaussian has one block.")
            frame = jnp.asarray(_sym_frame(n))

            def sym2(x):
                return jnp.einsum("k,aij->kaij", scalar(x), frame).reshape(-1, n, n)

            return sym2, [f"{s}.E{a}" for s in scalar_labels for a in range(frame.shape[0])]

        frame, frame_labels = _cylinder_sym2_frame(model, block)

        def sym2(x):
            return jnp.einsum("k,aij->kaij", scalar(x), frame(x)).reshape(-1, n, n)

        return sym2, [f"{s}.{f}" for s in scalar_labels for f in frame_labels]

    raise RankMismatchError(f"Unsupported rank {rank!r}.")


def _cylinder_sym2_frame(model: ModelGeometry, block: str | None) -> tuple[Field, list[str]]:
    """Products of the tangent one-forms dz_a and the Euclidean dx_i, grouped by block.

    SPHERE_BLOCK holds dz_a.dz_b (u g^1 and the trace-free sphere part), MIXED_BLOCK
    dz_a.dx_i and EUCLIDEAN_BLOCK dx_i.dx_j; CONFORMAL_BLOCK is g^1 alone.
    """
    if block is not None and block not in SYM2_BLOCKS:
        raise ModelError(f"Unknown symmetric 2-tensor block {block!r}; expected one of {', '.join(SYM2_BLOCKS)}.")
    m, ell, n = model.m, model.ell, model.n
    embed = jax.jacfwd(model.embed_sphere)
    euclid_frame = jnp.eye(n)[ell:]
    upper_a, upper_b = np.triu_indices(ell + 1)
    mixed_a, mixed_j = (axis.ravel() for axis in np.meshgrid(np.arange(ell + 1), np.arange(m), indexing="ij"))
    euclid_sym = jnp.einsum("ai,sab,bj->sij", euclid_frame, jnp.asarray(_sym_frame(m)), euclid_frame)
    off_i, off_j = np.triu_indices(m, 1)

    pieces = {
        SPHERE_BLOCK: [f"t{a}t{b}" for a, b in zip(upper_a, upper_b)],
        MIXED_BLOCK: [f"t{a}e{ell + j}" for a, j in zip(mixed_a, mixed_j)],
        EUCLIDEAN_BLOCK: [f"e{ell + i}e{ell + i}" for i in range(m)]
        + [f"e{ell + i}e{ell + j}" for i, j in zip(off_i, off_j)],
        CONFORMAL_BLOCK: ["g1"],
    }
    chosen = (SPHERE_BLOCK, MIXED_BLOCK, EUCLIDEAN_BLOCK) if block is None else (block,)

    def frame(x):
        tangent = jnp.concatenate([embed(x[:ell]), jnp.zeros((ell + 1, m))], axis=1)
        out = []
        for name in chosen:
            if name == SPHERE_BLOCK:
                t, s = tangent[upper_a], tangent[upper_b]
                out.append(0.5 * (jnp.einsum("ki,kj->kij", t, s) + jnp.einsum("ki,kj->kij", s, t)))
            elif name == MIXED_BLOCK:
                t, e = tangent[mixed_a], euclid_frame[mixed_j]
                out.append(0.5 * (jnp.einsum("ki,kj->kij", t, e) + jnp.einsum("ki,kj->kij", e, t)))
            elif name == EUCLIDEAN_BLOCK:
                out.append(euclid_sym)
            else:
                out.append((tangent.T @ tangent)[None])
        return jnp.concatenate(out, axis=0)

    return frame, [label for name in chosen for label in pieces[name]]


def build_basis(
    model: ModelGeometry,
    rank: str,
    degree: int,
    sphere_degree: int = 2,
    order: int | None = None,
    block: str | None = None,
) -> SpectralBasis:
    """Orthonormal basis of the polynomial span, with its exact quadrature.

    ``block`` restricts cylinder symmetric 2-tensors to one of SYM2_BLOCKS.
    """
    raw, labels = _raw_family(model, rank, degree, sphere_degree, block)
    order = order or degree + 2
    sphere_order = sphere_degree + 2
    if rank == SYM2 and model.variant == CYLINDER:
        # dz_a.dz_b carries two ambient degrees, operator images two more
        sphere_order += 2
    q = model.weighted_quadrature(order, sphere_order)
    raw_nodes = sample(raw, q.nodes)
    g = gram(raw_nodes, raw_nodes, q)
    g = 0.5 * (g + g.T)
    values, vectors = linalg.eigh(g)
    keep = values > NULL_DIRECTION * values.max()
    transform = vectors[:, keep] / np.sqrt(values[keep])

    check_q = model.weighted_quadrature(order + 2, sphere_order + 2)
    check_nodes = sample(raw, check_q.nodes)
    drift = np.abs(transform.T @ gram(check_nodes, check_nodes, check_q) @ transform - np.eye(transform.shape[1])).max()
    if drift > GRAM_TOLERANCE:
        raise QuadratureError(f"Quadrature of order {order} is not exact on this basis: Gram drift {drift:.3e}.")
    logger.info(
        "basis %s/%s degree %d: %d raw, %d orthonormal, %d nodes",
        model.descriptor,
        rank,
        degree,
        len(labels),
        transform.shape[1],
        q.size,
    )
    return SpectralBasis(
        model=model,
        rank=rank,
        degree=degree,
        sphere_degree=sphere_degree,
        raw=raw,
        labels=tuple(labels),
        quadrature=q,
        transform=transform,
        raw_nodes=raw_nodes,
        gram_drift=float(drift),
        block=block,
    )


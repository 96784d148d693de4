"""Tensor fields, grids and quadrature rules.

A field is stored in one of three representations:

``closed_form``
    a differentiable evaluator ``x -> components`` in chart coordinates;
``spectral_coeffs``
    a coefficient vector against a :class:`~core.bases.SpectralBasis`;
``grid_samples``
    node values on a tensor-product :class:`Grid`.

Representations never mix implicitly; :func:`resample` is the only way from a
closed form or a spectral expansion to grid samples.
"""
from __future__ import annotations

import csv
import functools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any

import jax
import jax.numpy as jnp
import numpy as np

from .charts import PERIODIC_BOX, Chart
from .exceptions import QuadratureError, RankMismatchError, RepresentationError
from .geometry import Field

if TYPE_CHECKING:
    from .bases import SpectralBasis

logger = logging.getLogger(__name__)

SCALAR = "scalar"
VECTOR = "vector"
SYM2 = "sym2"
RANKS = {SCALAR: 0, VECTOR: 1, SYM2: 2}

CLOSED_FORM = "closed_form"
SPECTRAL_COEFFS = "spectral_coeffs"
GRID_SAMPLES = "grid_samples"

WEIGHTED = "weighted"
UNWEIGHTED = "unweighted"
LEVEL_SET = "level_set"

FIELD_FILE_FORMAT = "workbench-field/1"


def rank_shape(rank: str, dim: int) -> tuple[int, ...]:
    try:
        return (dim,) * RANKS[rank]
    except KeyError:
        raise RankMismatchError(f"Unsupported rank {rank!r}.") from None


def rank_of(order: int) -> str:
    for name, value in RANKS.items():
        if value == order:
            return name
    raise RankMismatchError(f"Tensors of order {order} are not supported.")


@functools.lru_cache(maxsize=512)
def batched(fn: Field):
    """Compiled evaluation of ``fn`` over a stack of points."""
    return jax.jit(jax.vmap(fn))


def sample(fn: Field, nodes) -> np.ndarray:
    return np.asarray(batched(fn)(jnp.asarray(nodes, dtype=jnp.float64)))


# ---------------------------------------------------------------------------
# Grids and quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Grid:
    axes: tuple[np.ndarray, ...] = field(compare=False)
    periodic: bool = False

    @classmethod
    def box(cls, dim: int, half_width: float, points: int) -> "Grid":
        axis = np.linspace(-half_width, half_width, points)
        return cls(tuple(axis.copy() for _ in range(dim)))

    @classmethod
    def periodic_box(cls, dim: int, points: int, period: float = 2.0 * np.pi) -> "Grid":
        axis = np.arange(points) * (period / points)
        return cls(tuple(axis.copy() for _ in range(dim)), periodic=True)

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(axis) for axis in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(float(axis[1] - axis[0]) for axis in self.axes)

    def nodes(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def describe(self) -> dict[str, Any]:
        return {
            "periodic": self.periodic,
            "axes": [[float(axis[0]), float(axis[-1]), len(axis)] for axis in self.axes],
        }

    @classmethod
    def from_description(cls, data: dict[str, Any]) -> "Grid":
        periodic = bool(data.get("periodic", False))
        axes = []
        for lo, hi, count in data["axes"]:
            count = int(count)
            if periodic:
                step = (hi - lo) / (count - 1) if count > 1 else 0.0
                axes.append(lo + step * np.arange(count))
            else:
                axes.append(np.linspace(lo, hi, count))
        return cls(tuple(axes), periodic=periodic)

    def same_as(self, other: "Grid") -> bool:
        return (
            self.periodic == other.periodic
            and self.shape == other.shape
            and all(np.allclose(a, b) for a, b in zip(self.axes, other.axes))
        )


@dataclass(frozen=True)
class Quadrature:
    """Nodes and positive weights for one measure.

    ``weighted`` weights already carry e^{-f} dvol, ``unweighted`` weights are
    plain dvol (integrands pick up e^{-f} at the nodes) and ``level_set``
    weights are area times |grad b| on {b = level}.
    """

    nodes: np.ndarray = field(compare=False)
    weights: np.ndarray = field(compare=False)
    measure: str
    chart: Chart
    level: float | None = None
    grid: Grid | None = None

    def __post_init__(self) -> None:
        if self.measure not in (WEIGHTED, UNWEIGHTED, LEVEL_SET):
            raise QuadratureError(f"Unknown measure {self.measure!r}.")
        if self.nodes.ndim != 2 or self.nodes.shape[1] != self.chart.dim:
            raise QuadratureError("Quadrature nodes must have shape (count, dim).")
        if self.weights.shape != (self.nodes.shape[0],):
            raise QuadratureError("One weight per node is required.")
        if not np.all(self.weights > 0):
            raise QuadratureError("Quadrature weights must be positive.")

    @classmethod
    def on_grid(cls, grid: Grid, chart: Chart) -> "Quadrature":
        """Trapezoid rule against coordinate volume times sqrt(det g)."""
        factors = []
        for axis in grid.axes:
            step = axis[1] - axis[0]
            w = np.full(len(axis), step)
            if not grid.periodic:
                w[0] = w[-1] = 0.5 * step
            factors.append(w)
        weights = functools.reduce(np.multiply.outer, factors).ravel()
        nodes = grid.nodes()
        volume = np.sqrt(np.linalg.det(sample(chart.metric_eval, nodes)))
        return cls(nodes, weights * volume, UNWEIGHTED, chart, grid=grid)

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    def density(self) -> np.ndarray:
        """Factor turning the weights into e^{-f}-weighted ones."""
        if self.measure == UNWEIGHTED:
            return np.exp(-sample(self.chart.weight_eval, self.nodes))
        return np.ones(self.size)

    def total_mass(self) -> float:
        return float(np.sum(self.weights * self.density()))

    def integrate(self, values) -> float:
        return float(np.sum(self.weights * self.density() * np.asarray(values)))


# ---------------------------------------------------------------------------
# Fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TensorField:
    rank: str
    chart: Chart
    representation: str
    evaluator: Field | None = None
    grid: Grid | None = None
    values: np.ndarray | None = None
    basis: "SpectralBasis | None" = None
    coeffs: np.ndarray | None = None

    def __post_init__(self) -> None:
        shape = rank_shape(self.rank, self.chart.dim)
        if self.representation == CLOSED_FORM:
            if self.evaluator is None:
                raise RepresentationError("closed_form fields need an evaluator.")
        elif self.representation == GRID_SAMPLES:
            if self.grid is None or self.values is None:
                raise RepresentationError("grid_samples fields need a grid and values.")
            if self.values.shape != self.grid.shape + shape:
                raise RepresentationError(
                    f"Grid values have shape {self.values.shape}, expected {self.grid.shape + shape}."
                )
            if self.rank == SYM2 and not np.allclose(self.values, np.swapaxes(self.values, -1, -2), atol=1e-12):
                raise RepresentationError("sym2 grid values are not symmetric.")
        elif self.representation == SPECTRAL_COEFFS:
            if self.basis is None or self.coeffs is None:
                raise RepresentationError("spectral_coeffs fields need a basis and coefficients.")
            if self.coeffs.shape != (self.basis.size,):
                raise RepresentationError(f"Expected {self.basis.size} coefficients, got {self.coeffs.shape}.")
            if self.basis.rank != self.rank:
                raise RankMismatchError(f"Basis holds {self.basis.rank} fields, not {self.rank}.")
        else:
            raise RepresentationError(f"Unknown representation {self.representation!r}.")

    # -- construction -------------------------------------------------------

    @classmethod
    def closed_form(cls, rank: str, chart: Chart, evaluator: Field) -> "TensorField":
        return cls(rank, chart, CLOSED_FORM, evaluator=evaluator)

    @classmethod
    def on_grid(cls, rank: str, chart: Chart, grid: Grid, values) -> "TensorField":
        return cls(rank, chart, GRID_SAMPLES, grid=grid, values=np.asarray(values, dtype=float))

    @classmethod
    def spectral(cls, basis: "SpectralBasis", coeffs) -> "TensorField":
        return cls(
            basis.rank, basis.chart, SPECTRAL_COEFFS, basis=basis, coeffs=np.asarray(coeffs, dtype=float)
        )

    # -- access -------------------------------------------------------------

    @property
    def dim(self) -> int:
        return self.chart.dim

    @property
    def is_grid(self) -> bool:
        return self.representation == GRID_SAMPLES

    @property
    def function(self) -> Field:
        """Differentiable evaluator; grid samples have none."""
        if self.representation == CLOSED_FORM:
            return self.evaluator
        if self.representation == SPECTRAL_COEFFS:
            return self.basis.combine(self.coeffs)
        raise RepresentationError("grid_samples fields have no closed form; differentiate on the grid instead.")

    def sample(self, q: Quadrature) -> np.ndarray:
        """Values at the quadrature nodes, shape (count, *rank_shape)."""
        if self.is_grid:
            if q.grid is None or not q.grid.same_as(self.grid):
                raise RepresentationError("Grid field sampled on a quadrature from another discretisation.")
            return self.values.reshape((q.size,) + rank_shape(self.rank, self.dim))
        if self.representation == SPECTRAL_COEFFS and q is self.basis.quadrature:
            return self.basis.sample_coeffs(self.coeffs)
        return sample(self.function, q.nodes)

    def with_values(self, values) -> "TensorField":
        return TensorField.on_grid(self.rank, self.chart, self.grid, values)

    def scaled(self, factor: float) -> "TensorField":
        if self.is_grid:
            return self.with_values(factor * self.values)
        if self.representation == SPECTRAL_COEFFS:
            return TensorField.spectral(self.basis, factor * self.coeffs)
        fn = self.evaluator
        return TensorField.closed_form(self.rank, self.chart, lambda x: factor * fn(x))


def resample(source: TensorField, grid: Grid) -> TensorField:
    """Explicit conversion of a closed-form or spectral field to grid samples."""
    if source.is_grid:
        if not source.grid.same_as(grid):
            raise RepresentationError("Grid-to-grid interpolation is not a resampling; use the gauge interpolators.")
        return source
    values = sample(source.function, grid.nodes())
    shape = grid.shape + rank_shape(source.rank, source.dim)
    logger.debug("resampled %s field onto grid %s", source.rank, grid.shape)
    return TensorField.on_grid(source.rank, source.chart, grid, values.reshape(shape))


def add(a: TensorField, b: TensorField) -> TensorField:
    if a.rank != b.rank:
        raise RankMismatchError(f"Cannot add {a.rank} and {b.rank} fields.")
    if a.representation != b.representation:
        raise RepresentationError("Fields of different representations are never combined implicitly.")
    if a.is_grid:
        if not a.grid.same_as(b.grid):
            raise RepresentationError("Grid fields live on different grids.")
        return a.with_values(a.values + b.values)
    if a.representation == SPECTRAL_COEFFS:
        if a.basis is not b.basis:
            raise RepresentationError("Spectral fields use different bases.")
        return TensorField.spectral(a.basis, a.coeffs + b.coeffs)
    fa, fb = a.evaluator, b.evaluator
    return TensorField.closed_form(a.rank, a.chart, lambda x: fa(x) + fb(x))


# ---------------------------------------------------------------------------
# Field files
# ---------------------------------------------------------------------------


def _chart_digest(chart: Chart) -> str | None:
    return None if chart.is_custom else chart.digest()


def write_field(path, tensor: TensorField) -> None:
    """Header line of JSON followed by little-endian float64 payload."""
    header: dict[str, Any] = {
        "format": FIELD_FILE_FORMAT,
        "chart": _chart_digest(tensor.chart),
        "dim": tensor.dim,
        "rank": tensor.rank,
        "representation": tensor.representation,
    }
    if tensor.is_grid:
        header["grid"] = tensor.grid.describe()
        payload = tensor.values
    elif tensor.representation == SPECTRAL_COEFFS:
        header["basis"] = tensor.basis.descriptor
        payload = tensor.coeffs
    else:
        raise RepresentationError("closed_form fields cannot be written; resample them first.")
    header["dims"] = list(payload.shape)
    with Path(path).open("wb") as handle:
        handle.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        handle.write(np.ascontiguousarray(payload, dtype="<f8").tobytes())


def read_field(path, chart: Chart, basis: "SpectralBasis | None" = None) -> TensorField:
    raw = Path(path).read_bytes()
    head, sep, payload = raw.partition(b"\n")
    if not sep:
        raise RepresentationError(f"{path}: missing field header.")
    try:
        header = json.loads(head.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise RepresentationError(f"{path}: malformed field header.") from exc
    if header.get("format") != FIELD_FILE_FORMAT:
        raise RepresentationError(f"{path}: unsupported field format {header.get('format')!r}.")
    expected = _chart_digest(chart)
    if header.get("chart") and expected and header["chart"] != expected:
        raise RepresentationError(f"{path}: field was written for another chart.")
    dims = tuple(header["dims"])
    values = np.frombuffer(payload, dtype="<f8")
    if values.size != int(np.prod(dims)):
        raise RepresentationError(f"{path}: payload holds {values.size} values, header says {dims}.")
    values = values.reshape(dims).astype(float)
    if header["representation"] == GRID_SAMPLES:
        return TensorField.on_grid(header["rank"], chart, Grid.from_description(header["grid"]), values)
    if header["representation"] == SPECTRAL_COEFFS:
        if basis is None or basis.descriptor != header.get("basis"):
            raise RepresentationError(f"{path}: spectral field needs the basis {header.get('basis')!r}.")
        return TensorField.spectral(basis, values)
    raise RepresentationError(f"{path}: unknown representation {header['representation']!r}.")


def _component_labels(rank: str, dim: int) -> list[str]:
    return ["c" + "".join(str(i) for i in index) for index in np.ndindex(*rank_shape(rank, dim))]


def write_field_csv(path, tensor: TensorField) -> None:
    """Plain-text alternative for small grid fields: coordinates then components."""
    if not tensor.is_grid:
        raise RepresentationError("CSV field files hold grid samples only.")
    nodes = tensor.grid.nodes()
    flat = tensor.values.reshape(nodes.shape[0], -1)
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([f"x{i}" for i in range(tensor.dim)] + _component_labels(tensor.rank, tensor.dim))
        for node, row in zip(nodes, flat):
            writer.writerow([repr(float(v)) for v in node] + [repr(float(v)) for v in row])


def read_field_csv(path, chart: Chart, rank: str) -> TensorField:
    with Path(path).open(newline="") as handle:
        rows = list(csv.reader(handle))
    if not rows:
        raise RepresentationError(f"{path}: empty CSV field file.")
    dim = chart.dim
    expected = [f"x{i}" for i in range(dim)] + _component_labels(rank, dim)
    if rows[0] != expected:
        raise RepresentationError(f"{path}: unexpected CSV columns {rows[0]}.")
    data = np.array([[float(v) for v in row] for row in rows[1:]])
    axes = tuple(np.unique(data[:, i]) for i in range(dim))
    grid = Grid(axes, periodic=chart.topology == PERIODIC_BOX)
    if grid.size != data.shape[0]:
        raise RepresentationError(f"{path}: rows do not form a tensor-product grid.")
    order = np.lexsort(tuple(data[:, i] for i in reversed(range(dim))))
    values = data[order, dim:].reshape(grid.shape + rank_shape(rank, dim))
    return TensorField.on_grid(rank, chart, grid, values)

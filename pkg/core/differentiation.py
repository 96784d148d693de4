"""Coordinate differentiation of chart evaluators.

Every geometric quantity in the workbench is built from callables ``x -> array``
(``x`` a coordinate vector).  A :class:`JetMode` turns such a callable into its
coordinate Jacobian, either by forward-mode automatic differentiation or by
second-order centered differences.  In both cases the new derivative index is
appended last, so nested Jacobians read ``T[..., a, b]`` = d_b d_a T.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import jax

jax.config.update("jax_enable_x64", True)

import jax.numpy as jnp  # noqa: E402

from .exceptions import ChartError  # noqa: E402

logger = logging.getLogger(__name__)

Evaluator = Callable[[jax.Array], jax.Array]

ANALYTIC = "analytic"
FINITE_DIFFERENCE = "finite_difference"


def centered_jacobian(fn: Evaluator, step: float) -> Evaluator:
    """Second-order centered-difference Jacobian, derivative axis last."""
    batched = jax.vmap(fn)

    def jac(x: jax.Array) -> jax.Array:
        x = jnp.asarray(x, dtype=jnp.float64)
        shift = step * jnp.eye(x.shape[0], dtype=x.dtype)
        diff = (batched(x + shift) - batched(x - shift)) / (2.0 * step)
        return jnp.moveaxis(diff, 0, -1)

    return jac


@dataclass(frozen=True)
class JetMode:
    kind: str = ANALYTIC
    step: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in (ANALYTIC, FINITE_DIFFERENCE):
            raise ChartError(f"Unknown jet mode {self.kind!r}.")
        if self.kind == FINITE_DIFFERENCE and not (self.step and self.step > 0):
            raise ChartError("finite_difference jets need a positive step.")

    @classmethod
    def analytic(cls) -> "JetMode":
        return cls(ANALYTIC, None)

    @classmethod
    def finite_difference(cls, step: float) -> "JetMode":
        return cls(FINITE_DIFFERENCE, float(step))

    @property
    def is_analytic(self) -> bool:
        return self.kind == ANALYTIC

    def jacobian(self, fn: Evaluator) -> Evaluator:
        if self.is_analytic:
            return jax.jacfwd(fn)
        return centered_jacobian(fn, self.step)

    def halved(self) -> "JetMode":
        if self.is_analytic:
            return self
        return JetMode.finite_difference(self.step / 2.0)

    def describe(self) -> str:
        if self.is_analytic:
            return ANALYTIC
        return f"{FINITE_DIFFERENCE}({self.step:g})"

    @classmethod
    def parse(cls, text: str) -> "JetMode":
        """Parse ``analytic`` or ``finite_difference(1e-3)``."""
        text = text.strip()
        if text == ANALYTIC:
            return cls.analytic()
        if text.startswith(FINITE_DIFFERENCE + "(") and text.endswith(")"):
            return cls.finite_difference(float(text[len(FINITE_DIFFERENCE) + 1 : -1]))
        raise ChartError(f"Cannot parse jet mode {text!r}.")


def nested_jacobian(mode: JetMode, fn: Evaluator, order: int) -> list[Evaluator]:
    """Return ``[fn, D fn, D^2 fn, ...]`` up to ``order``."""
    chain = [fn]
    for _ in range(order):
        chain.append(mode.jacobian(chain[-1]))
    return chain

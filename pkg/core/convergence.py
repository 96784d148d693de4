"""Step-halving and amplitude-sweep order estimates."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import FitError

logger = logging.getLogger(__name__)

TINY = 1e-300


def fit_power(xs, ys) -> tuple[float, float]:
    """Least-squares exponent p and log-prefactor c of ys ~ exp(c) * xs^p."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 2 or xs.size != ys.size:
        raise FitError("A power fit needs at least two paired samples.")
    if np.any(xs <= 0):
        raise FitError("Abscissae of a power fit must be positive.")
    if np.any(ys < 0):
        raise FitError("Values of a power fit must be non-negative.")
    slope, intercept = np.polyfit(np.log(xs), np.log(np.maximum(ys, TINY)), 1)
    return float(slope), float(intercept)


@dataclass(frozen=True)
class Convergence:
    steps: tuple[float, ...]
    residuals: tuple[float, ...]
    order: float
    extrapolated: float
    floor_reached: bool
    monotone: bool

    @property
    def finest(self) -> float:
        return self.residuals[-1]

    def as_dict(self) -> dict:
        return {
            "steps": list(self.steps),
            "residuals": list(self.residuals),
            "order": self.order,
            "extrapolated": self.extrapolated,
            "floor_reached": self.floor_reached,
            "monotone": self.monotone,
        }


def richardson(residuals, steps=None, floor_order: float = 0.5) -> Convergence:
    """Order of a sequence sampled at steps s, s/2, s/4, ...

    Two levels give log2 of the ratio; more levels a least-squares slope.  A
    sequence that stops shrinking (order below ``floor_order``) is flagged as
    having reached its floor, a growing one as non-monotone.
    """
    values = tuple(float(v) for v in residuals)
    if len(values) < 2:
        raise FitError("Richardson estimates need at least two step levels.")
    if steps is None:
        steps = tuple(2.0**-k for k in range(len(values)))
    steps = tuple(float(s) for s in steps)
    magnitudes = [abs(v) for v in values]
    monotone = all(b <= a for a, b in zip(magnitudes, magnitudes[1:]))

    if any(m == 0.0 for m in magnitudes[:-1]):
        # an exact zero before the finest level means roundoff, not a trend
        order = math.nan
    elif magnitudes[-1] == 0.0:
        order = math.inf
    elif len(values) == 2:
        order = math.log(magnitudes[0] / max(magnitudes[1], TINY)) / math.log(steps[0] / steps[1])
    else:
        order, _ = fit_power(steps, magnitudes)

    if math.isfinite(order) and order > 0:
        ratio = (steps[-2] / steps[-1]) ** order
        extrapolated = values[-1] + (values[-1] - values[-2]) / (ratio - 1.0)
    else:
        extrapolated = values[-1]
    floor_reached = math.isnan(order) or order < floor_order
    if floor_reached:
        logger.warning("step halving stalled: residuals %s", values)
    elif not monotone:
        logger.warning("non-monotone residuals under step halving: %s", values)
    return Convergence(steps, values, float(order), float(extrapolated), floor_reached, monotone)

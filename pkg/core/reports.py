"""Check records, reports and the experiment runner.

A report is deterministic given its configuration: everything that varies
between runs (wall-clock time) sits in the separate ``timing`` block.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import jax
import jax.numpy as jnp
import numpy as np
import scipy
from django.core.exceptions import ValidationError

from . import __version__
from . import differentiation  # noqa: F401

logger = logging.getLogger(__name__)

PASS = "pass"
INFO = "info"
KINDS = (PASS, INFO)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_INTERNAL = 3


def _number(value) -> float | None:
    if value is None:
        return None
    return float(value)


@dataclass(frozen=True)
class Check:
    name: str
    claim: str
    measured: float
    target: float | None = None
    tolerance: float | None = None
    kind: str = PASS
    passed: bool | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"Unknown check kind {self.kind!r}.")
        if self.kind == PASS and (self.passed is None or self.tolerance is None):
            raise ValueError(f"Pass-type check {self.name!r} needs a tolerance and a verdict.")

    @classmethod
    def at_most(cls, name: str, claim: str, measured, bound, tolerance: float = 0.0) -> "Check":
        measured = float(measured)
        ok = math.isfinite(measured) and measured <= float(bound) + tolerance
        return cls(name, claim, measured, float(bound), float(tolerance), PASS, bool(ok))

    @classmethod
    def at_least(cls, name: str, claim: str, measured, bound, tolerance: float = 0.0) -> "Check":
        measured = float(measured)
        ok = math.isfinite(measured) and measured >= float(bound) - tolerance
        return cls(name, claim, measured, float(bound), float(tolerance), PASS, bool(ok))

    @classmethod
    def close_to(cls, name: str, claim: str, measured, target, tolerance: float) -> "Check":
        measured = float(measured)
        ok = math.isfinite(measured) and abs(measured - float(target)) <= tolerance
        return cls(name, claim, measured, float(target), float(tolerance), PASS, bool(ok))

    @classmethod
    def verdict(cls, name: str, claim: str, measured, target, tolerance: float, passed: bool) -> "Check":
        return cls(name, claim, float(measured), _number(target), float(tolerance), PASS, bool(passed))

    @classmethod
    def info(cls, name: str, claim: str, measured, target=None) -> "Check":
        return cls(name, claim, float(measured), _number(target), None, INFO, None)

    def as_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "claim": self.claim,
            "measured": _json_float(self.measured),
            "target": _json_float(self.target),
            "tolerance": self.tolerance,
            "kind": self.kind,
            "passed": self.passed,
        }


def _json_float(value):
    if value is None:
        return None
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


def _plain(value):
    """JSON-safe copy of config echoes and series rows."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (np.floating, float)):
        return _json_float(float(value))
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, Path):
        return str(value)
    return value


def environment() -> dict[str, str]:
    return {
        "workbench": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "jax": jax.__version__,
        "precision": str(jnp.asarray(1.0).dtype),
    }


@dataclass
class Report:
    command: str
    config: dict[str, Any]
    checks: list[Check] = field(default_factory=list)
    series: dict[str, list[dict[str, Any]]] = field(default_factory=dict)
    timing: dict[str, float] = field(default_factory=dict)

    def add(self, *checks: Check) -> None:
        for check in checks:
            logger.debug("check %s: measured %s, passed %s", check.name, check.measured, check.passed)
            self.checks.append(check)

    def add_series(self, name: str, rows) -> None:
        self.series.setdefault(name, []).extend(dict(row) for row in rows)

    def merge(self, other: "Report", prefix: str) -> None:
        for check in other.checks:
            self.checks.append(Check(f"{prefix}.{check.name}", check.claim, check.measured, check.target,
                                     check.tolerance, check.kind, check.passed))
        for name, rows in other.series.items():
            self.add_series(f"{prefix}.{name}", rows)
        for key, seconds in other.timing.items():
            self.timing[f"{prefix}.{key}"] = seconds

    @property
    def failures(self) -> list[Check]:
        return [check for check in self.checks if check.kind == PASS and not check.passed]

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def exit_code(self) -> int:
        return EXIT_OK if self.passed else EXIT_FAILED

    def as_dict(self, timing: bool = True) -> dict[str, Any]:
        out = {
            "command": self.command,
            "config": _plain(self.config),
            "checks": [check.as_dict() for check in self.checks],
            "environment": environment(),
            "passed": self.passed,
            "series": _plain(self.series),
        }
        if timing:
            out["timing"] = dict(self.timing)
        return out

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.as_dict(timing), sort_keys=True, indent=2)

    def write_json(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    def write_csv(self, path) -> None:
        """All series in one table; a ``series`` column names the source of each row."""
        columns = sorted({key for rows in self.series.values() for row in rows for key in row})
        with Path(path).open("w", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=["series"] + columns, restval="")
            writer.writeheader()
            for name in sorted(self.series):
                for row in self.series[name]:
                    writer.writerow({"series": name, **_plain(row)})


# ---------------------------------------------------------------------------
# Configuration text
# ---------------------------------------------------------------------------


def parse_config(text: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    values: dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"line {number}: expected 'key = value', got {raw.strip()!r}.")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ValidationError(f"line {number}: missing key.")
        if key in values:
            raise ValidationError(f"line {number}: duplicate key {key!r}.")
        values[key.replace("-", "_")] = value
    return values


def read_config(path) -> dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"Cannot read config {path}: {exc.strerror}.") from exc
    return parse_config(text)


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------

Suite = Callable[[dict[str, Any]], Report]


def run(config: dict[str, Any], suites: dict[str, Suite] | None = None) -> Report:
    """Execute the suite named by ``config['command']``; ``all`` runs every suite in turn."""
    if suites is None:
        from .suites import SUITES as suites
    command = config["command"]
    if command != "all" and command not in suites:
        raise ValidationError(f"Unknown command {command!r}.")
    started = time.perf_counter()
    if command == "all":
        report = Report(command, dict(config))
        for name, suite in suites.items():
            logger.info("suite %s: start", name)
            report.merge(suite({**config, "command": name}), name)
    else:
        logger.info("suite %s: start", command)
        report = suites[command](dict(config))
    report.timing["total_seconds"] = time.perf_counter() - started
    logger.info(
        "suite %s: %d checks, %d failed, %.1f s",
        command,
        len(report.checks),
        len(report.failures),
        report.timing["total_seconds"],
    )
    return report

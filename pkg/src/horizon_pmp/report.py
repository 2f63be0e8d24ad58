"""Verification reports: per-condition residuals with their tolerances."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


def round_sig(value, digits: int = 12):
    """Round floats (recursively) to ``digits`` significant digits for output."""
    if isinstance(value, dict):
        return {str(k): round_sig(v, digits) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [round_sig(v, digits) for v in value]
    if isinstance(value, np.ndarray):
        return round_sig(value.tolist(), digits)
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if not math.isfinite(v):
            return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
        if v == 0.0:
            return 0.0
        return float(f"{v:.{digits}g}")
    return value


@dataclass
class ConditionEntry:
    name: str
    residual: float
    tolerance: float
    worst_t: Optional[float] = None
    detail: dict = field(default_factory=dict)
    passed: Optional[bool] = None

    def __post_init__(self):
        self.residual = float(self.residual)
        if self.passed is None:
            self.passed = bool(self.residual <= self.tolerance)

    def to_dict(self) -> dict:
        out = {"name": self.name, "residual": self.residual, "tolerance": self.tolerance, "pass": self.passed}
        if self.worst_t is not None:
            out["worst_t"] = self.worst_t
        if self.detail:
            out["detail"] = self.detail
        return out


@dataclass
class VerificationReport:
    scenario: str
    conditions: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    references: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)

    def add(self, entry: ConditionEntry) -> ConditionEntry:
        self.conditions.append(entry)
        return entry

    def extend(self, entries) -> None:
        for e in entries:
            self.add(e)

    def get(self, name: str) -> ConditionEntry:
        for e in self.conditions:
            if e.name == name:
                return e
        raise KeyError(name)

    def names(self) -> list:
        return [e.name for e in self.conditions]

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.conditions)

    def failed(self) -> list:
        return [e.name for e in self.conditions if not e.passed]

    def worst(self) -> dict:
        """Condition with the largest residual-to-tolerance ratio."""
        if not self.conditions:
            return {"t": None, "condition": None}
        def ratio(e):
            if e.tolerance > 0:
                return e.residual / e.tolerance
            return 0.0 if e.passed else math.inf
        e = max(self.conditions, key=ratio)
        return {"t": e.worst_t, "condition": e.name}

    def to_dict(self) -> dict:
        out = {
            "scenario": self.scenario,
            "conditions": [e.to_dict() for e in self.conditions],
            "flags": self.flags,
            "worst": self.worst(),
        }
        if self.grid:
            out["grid"] = self.grid
        if self.references:
            out["references"] = self.references
        if self.diagnostics:
            out["diagnostics"] = self.diagnostics
        return round_sig(out)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    def summary(self) -> str:
        lines = [f"scenario {self.scenario}: {'PASS' if self.passed else 'FAIL'}"]
        for e in self.conditions:
            mark = "ok " if e.passed else "BAD"
            lines.append(f"  [{mark}] {e.name:<28} residual {e.residual:.3e}  tol {e.tolerance:.1e}")
        for k, v in self.flags.items():
            lines.append(f"  flag {k} = {v}")
        return "\n".join(lines)

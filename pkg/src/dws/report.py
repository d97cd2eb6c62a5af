"""Iteration reports shared by all iterative solvers."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .spectral_core import DwsError


@dataclass
class SolverReport:
    name: str
    converged: bool = False
    iterations: int = 0
    residuals: list = field(default_factory=list)
    contraction: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    message: str = ""

    def log(self, residual: float):
        """Append a residual/increment norm and the ratio to its predecessor."""
        if self.residuals and self.residuals[-1] > 0:
            self.contraction.append(residual / self.residuals[-1])
        self.residuals.append(float(residual))
        self.iterations = len(self.residuals)

    def max_contraction(self, skip: int = 0) -> float:
        c = self.contraction[skip:]
        return float(max(c)) if c else 0.0

    @property
    def last_residual(self) -> float:
        return self.residuals[-1] if self.residuals else float("nan")

    def to_dict(self) -> dict:
        d = asdict(self)
        return _jsonable(d)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


class ConvergenceError(DwsError, RuntimeError):
    """An iterative solve diverged or hit its iteration cap."""

    def __init__(self, message: str, report: SolverReport):
        super().__init__(message)
        self.report = report

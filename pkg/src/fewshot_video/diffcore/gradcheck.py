"""Finite-difference verification of reverse-mode gradients.

Parameters are temporarily promoted to 64-bit in place, so the function
under test must read its inputs through the `Parameters` object (or the
same tensor instances) on every call.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .optim import Parameters
from .tensor import Tape, Tensor

FD_STEP = 1e-4
ZERO_FLOOR = 1e-6


@dataclass
class ParamCheck:
    name: str
    max_rel_err: float
    passed: bool


@dataclass
class GradCheckReport:
    tolerance: float
    checks: list[ParamCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def max_rel_err(self) -> float:
        return max((c.max_rel_err for c in self.checks), default=0.0)

    def __str__(self):
        lines = [
            f"{'PASS' if c.passed else 'FAIL'}  {c.name}: max rel err {c.max_rel_err:.3e}"
            for c in self.checks
        ]
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'} (tol {self.tolerance:g})")
        return "\n".join(lines)


def _relative_errors(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    errs = np.abs(analytic - numeric)
    rel = np.where(scale > ZERO_FLOOR, errs / np.maximum(scale, ZERO_FLOOR), 0.0)
    # Tiny gradients are compared absolutely against the floor instead.
    rel = np.where((scale <= ZERO_FLOOR) & (errs > ZERO_FLOOR), errs / ZERO_FLOOR, rel)
    return rel


def grad_check(fn: Callable[[], Tensor], params: Parameters,
               tolerance: float = 1e-4, step: float = FD_STEP) -> GradCheckReport:
    """Compare backward grads of `fn()` against central finite differences.

    `fn` must build a fresh forward graph from the current parameter values
    and return a scalar tensor.
    """
    originals = {name: t.data for name, t in params.items()}
    report = GradCheckReport(tolerance=tolerance)
    try:
        for t in params.tensors():
            t.data = t.data.astype(np.float64)

        with Tape() as tape:
            loss = fn()
            tape.backward(loss, params=params.tensors())
        analytic = {name: t.grad.copy() for name, t in params.items()}

        for name, t in params.items():
            base = t.data.copy()
            numeric = np.zeros_like(base)
            flat_base = base.reshape(-1)
            flat_num = numeric.reshape(-1)
            for i in range(flat_base.size):
                orig = flat_base[i]
                t.data.reshape(-1)[i] = orig + step
                f_plus = fn().item()
                t.data.reshape(-1)[i] = orig - step
                f_minus = fn().item()
                t.data.reshape(-1)[i] = orig
                flat_num[i] = (f_plus - f_minus) / (2.0 * step)
            rel = _relative_errors(analytic[name], numeric)
            max_err = float(rel.max()) if rel.size else 0.0
            report.checks.append(ParamCheck(name, max_err, max_err < tolerance))
    finally:
        for name, t in params.items():
            t.data = originals[name]
            t.grad = None
    return report

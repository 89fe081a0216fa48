"""Finite-difference verification of tape gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .exceptions import NumericError
from .tensor import Tape, Tensor


@dataclass
class GradCheckReport:
    eps: float
    tol: float
    max_rel_error: dict = field(default_factory=dict)
    worst_entry: dict = field(default_factory=dict)

    @property
    def worst(self):
        if not self.max_rel_error:
            return 0.0
        return max(self.max_rel_error.values())

    @property
    def passed(self):
        return self.worst < self.tol

    def summary(self):
        lines = [f"{'parameter':<28} max_rel_err"]
        for name, err in self.max_rel_error.items():
            flag = "ok" if err < self.tol else "FAIL"
            lines.append(f"{name:<28} {err:.3e} {flag}")
        return "\n".join(lines)


def relative_error(analytic, numeric, floor=1e-6):
    """``|a - n| / max(|a|, |n|, floor)``.

    The floor keeps entries whose true gradient is ~0 from dividing
    finite-difference round-off by nothing.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return np.abs(a - n) / denom


def _scalar(value, where):
    v = value.item() if isinstance(value, Tensor) else float(value)
    if not np.isfinite(v):
        raise NumericError(f"grad_check: non-finite loss {v!r} {where}")
    return v


def grad_check(
    f: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    eps: float = 1e-5,
    tol: float = 1e-4,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare tape gradients of ``f()`` with central differences.

    ``f`` takes no arguments and must read the tensors in ``params`` (which are
    perturbed in place).  Every entry of every parameter is checked.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    for p in params.values():
        p.grad = None
        p.requires_grad = True
    with Tape() as tape:
        loss = f()
    loss = loss if isinstance(loss, Tensor) else Tensor(loss)
    _scalar(loss, "at the unperturbed point")
    if loss.requires_grad:
        tape.backward(loss)
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }

    report = GradCheckReport(eps=eps, tol=tol)
    for name, p in params.items():
        flat = p.data.reshape(-1)
        numeric = np.empty(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = _scalar(f(), f"with {name}[{i}] + eps")
            flat[i] = orig - eps
            down = _scalar(f(), f"with {name}[{i}] - eps")
            flat[i] = orig
            numeric[i] = (up - down) / (2.0 * eps)
        err = relative_error(analytic[name].reshape(-1), numeric, floor)
        worst = int(np.argmax(err)) if err.size else 0
        report.max_rel_error[name] = float(err.max()) if err.size else 0.0
        report.worst_entry[name] = worst
    return report

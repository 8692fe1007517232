"""Central finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NondeterminismError


@dataclass
class GradCheckReport:
    per_tensor: dict = field(default_factory=dict)
    coords_checked: dict = field(default_factory=dict)
    tolerance: float = 1e-4

    @property
    def max_error(self) -> float:
        return max(self.per_tensor.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def lines(self):
        for name, err in self.per_tensor.items():
            yield f"{name:32s} n={self.coords_checked[name]:5d} max_rel_err={err:.3e}"


def grad_check(closure, params: dict, tolerance: float = 1e-4, n_coords: int = 64,
               step: float = 1e-5, seed: int = 0) -> GradCheckReport:
    """Compare analytic gradients of ``closure()`` against central differences.

    ``closure`` takes no arguments and returns a scalar :class:`Tensor` built
    from the tensors in ``params`` (name -> Tensor). At least ``n_coords``
    coordinates of each tensor are probed (all of them when it is smaller).
    """
    first = float(closure().data)
    second = float(closure().data)
    if first != second:
        raise NondeterminismError(f"closure returned {first!r} then {second!r}")

    for p in params.values():
        p.grad = None
    closure().backward()

    rng = np.random.default_rng(seed)
    report = GradCheckReport(tolerance=tolerance)
    for name, p in params.items():
        if not p.data.flags.c_contiguous:
            p.data = np.ascontiguousarray(p.data)
        flat = p.data.reshape(-1)
        analytic = (np.zeros_like(p.data) if p.grad is None else p.grad).reshape(-1)
        n = flat.size
        idx = np.arange(n) if n <= n_coords else np.sort(rng.choice(n, size=n_coords, replace=False))
        worst = 0.0
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            f_plus = float(closure().data)
            flat[i] = orig - step
            f_minus = float(closure().data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            a = float(analytic[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
        report.per_tensor[name] = worst
        report.coords_checked[name] = int(idx.size)
    return report

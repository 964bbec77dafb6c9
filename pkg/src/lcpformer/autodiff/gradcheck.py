from dataclasses import dataclass, field
from typing import Callable, Dict, Sequence, Tuple

import numpy as np

from lcpformer.autodiff.tensor import Tape, Tensor
from lcpformer.errors import LcpError

# Relative error denominator floor (smaller gradient blocks are compared in absolute terms)
ERROR_FLOOR = 1e-4

# Other steps tried on entries failing at the nominal step (smaller ones for kinks, a larger one for rounding noise)
REFINE_FACTORS = (0.1, 0.01, 10.0)


@dataclass
class GradCheckReport:
    tol: float
    errors: Dict[str, float] = field(default_factory=dict)

    @property
    def worst(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.worst < self.tol

    @property
    def failures(self) -> Dict[str, float]:
        return {k: v for k, v in self.errors.items() if not v < self.tol}


def _central(f: Callable[[], Tensor], flat: np.ndarray, e: int, step: float) -> float:
    saved = flat[e]
    flat[e] = saved + step
    up = f().item()
    flat[e] = saved - step
    down = f().item()
    flat[e] = saved
    return (up - down) / (2 * step)


def finite_diff_check(
    f: Callable[[], Tensor],
    params: Sequence[Tuple[str, Tensor]],
    h: float = 1e-5,
    tol: float = 1e-4,
    max_entries: int = None,
    seed: int = 0,
) -> GradCheckReport:
    """
    Compare analytic gradients of the scalar f() with central finite differences.

    Parameters:
        f: closure rebuilding the computation from the current parameter values
        params: named float64 parameter tensors to check
        h: finite difference step
        tol: relative error threshold used by the report
        max_entries: if set, only that many randomly chosen entries are perturbed per parameter
        seed: entry selection seed

    Returns the max relative error per parameter block.
    """
    for name, p in params:
        if p.dtype != np.float64:
            raise LcpError(f"finite_diff_check: parameter {name} must be float64 (got {p.dtype})")
        # Perturbations go through a flat view
        p.data = np.ascontiguousarray(p.data)

    # Analytic pass
    with Tape() as tape:
        root = f()
        tape.backward(root, populate=False)
    analytic = {name: tape.grad(p) if tape.grad(p) is not None else np.zeros_like(p.data) for name, p in params}

    # Numeric pass (no tape active: plain forward evaluations)
    rng = np.random.default_rng(seed)
    report = GradCheckReport(tol)
    for name, p in params:
        flat = p.data.reshape(-1)
        entries = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            entries = np.sort(rng.choice(flat.size, max_entries, replace=False))
        numeric = np.array([_central(f, flat, e, h) for e in entries])
        a = analytic[name].reshape(-1)[entries]
        scale = max(np.abs(a).max(initial=0.0), np.abs(numeric).max(initial=0.0), ERROR_FLOOR)
        errors = np.abs(a - numeric) / scale

        # A kink (relu, max) inside the stencil, or rounding noise, spoils one step size only: retry with the others
        for i in np.flatnonzero(errors >= tol):
            for factor in REFINE_FACTORS:
                errors[i] = min(errors[i], abs(a[i] - _central(f, flat, entries[i], h * factor)) / scale)
        report.errors[name] = float(errors.max(initial=0.0))
    return report

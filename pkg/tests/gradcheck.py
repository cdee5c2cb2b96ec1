"""Central-difference gradient checking helpers shared by the test modules."""

import numpy as np


def numeric_grad(f, x, h: float = 1e-5):
    """Gradient of scalar-valued f at x via central differences.

    Perturbs one entry of x at a time in place (restoring it afterwards), so
    f must read x fresh on every call and must be deterministic.
    """
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        keep = x[idx]
        x[idx] = keep + h
        hi = f(x)
        x[idx] = keep - h
        lo = f(x)
        x[idx] = keep
        out[idx] = (hi - lo) / (2.0 * h)
        it.iternext()
    return out


def max_rel_err(analytic, numeric, floor: float = 1e-4) -> float:
    """Worst relative error, with a floor so near-zero entries compare absolutely."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / scale))

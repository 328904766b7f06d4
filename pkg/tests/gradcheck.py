"""Central finite differences, independent of any analytic backward pass."""
import numpy as np

EPS = 1e-6
RTOL = 1e-5
# entries whose true gradient is below this are compared absolutely at RTOL * FLOOR
FLOOR = 1e-4


def numeric_grad(f, a, eps=EPS):
    """d f() / d a, perturbing ``a`` in place entry by entry."""
    g = np.zeros_like(a)
    it = np.nditer(a, flags=["multi_index"])
    for _ in it:
        ix = it.multi_index
        old = a[ix]
        a[ix] = old + eps
        fp = f()
        a[ix] = old - eps
        fm = f()
        a[ix] = old
        g[ix] = (fp - fm) / (2 * eps)
    return g


def rel_error(analytic, numeric):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), FLOOR)
    return np.abs(analytic - numeric) / denom


def max_rel_error(analytic, numeric):
    e = rel_error(np.asarray(analytic), np.asarray(numeric))
    return float(e.max()) if e.size else 0.0

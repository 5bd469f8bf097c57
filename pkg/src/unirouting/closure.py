"""Min-plus (shortest path) closure of a dense distance matrix."""

import numpy as np

from ._accel import njit, use_jit


@njit(cache=True)
def _closure_jit(d):
    n = d.shape[0]
    for k in range(n):
        for i in range(n):
            dik = d[i, k]
            for j in range(n):
                alt = dik + d[k, j]
                if alt < d[i, j]:
                    d[i, j] = alt
    return d


def _closure_numpy(d):
    for k in range(d.shape[0]):
        np.minimum(d, d[:, k, None] + d[None, k, :], out=d)
    return d


def min_plus_closure(dist, backend=None):
    """Return the all-pairs shortest-path closure of ``dist`` (copy).

    ``backend`` overrides the global switch with ``"numba"`` or ``"numpy"``.
    Both paths perform the same k-outer relaxation order and give identical
    results bit for bit.
    """
    d = np.array(dist, dtype=np.float64, copy=True)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError("distance matrix must be square")
    jit = use_jit() if backend is None else backend == "numba"
    return _closure_jit(d) if jit else _closure_numpy(d)


def is_closed(dist, atol=0.0):
    """True when no two-leg detour improves any entry."""
    d = np.asarray(dist, dtype=np.float64)
    best = np.min(d[:, :, None] + d[None, :, :], axis=1)
    return bool(np.all(d <= best + atol))

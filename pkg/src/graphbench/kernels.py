"""Edge-aggregation kernels, the hot inner loops of every architecture.

Each kernel exists in two interchangeable implementations:

* a numba ``@njit`` version (default), and
* a pure-numpy fallback built on ``np.ufunc.at``.

Set the environment variable ``GRAPHBENCH_NUMBA=0`` before import to force
the numpy path (or call :func:`use` at runtime). Both paths accumulate in
identical edge order, so results are bit-for-bit equal.

``benchmarks/kernel_bench.py`` compares the two paths head to head.
"""

import os

import numpy as np

_ENV_FLAG = os.environ.get("GRAPHBENCH_NUMBA", "1").strip().lower()
NUMBA_REQUESTED = _ENV_FLAG not in ("0", "false", "off", "no")

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap


# ---------------------------------------------------------------------------
# numpy fallback path
# ---------------------------------------------------------------------------


def _scatter_rows_np(rows, idx, n_out):
    out = np.zeros((n_out, rows.shape[1]))
    np.add.at(out, idx, rows)
    return out


def _neighbor_sum_np(h, src, dst, n_out):
    out = np.zeros((n_out, h.shape[1]))
    np.add.at(out, dst, h[src])
    return out


def _gated_neighbor_sum_np(h, gates, src, dst, n_out):
    out = np.zeros((n_out, h.shape[1]))
    np.add.at(out, dst, gates * h[src])
    return out


# ---------------------------------------------------------------------------
# numba path
#
# Sequential edge loops, no fastmath: accumulation order must match
# np.add.at exactly so the two paths are interchangeable mid-run.
# ---------------------------------------------------------------------------


@njit(cache=True)
def _scatter_rows_nb(rows, idx, n_out):
    d = rows.shape[1]
    out = np.zeros((n_out, d))
    for e in range(idx.shape[0]):
        i = idx[e]
        for k in range(d):
            out[i, k] += rows[e, k]
    return out


@njit(cache=True)
def _neighbor_sum_nb(h, src, dst, n_out):
    d = h.shape[1]
    out = np.zeros((n_out, d))
    for e in range(src.shape[0]):
        s = src[e]
        t = dst[e]
        for k in range(d):
            out[t, k] += h[s, k]
    return out


@njit(cache=True)
def _gated_neighbor_sum_nb(h, gates, src, dst, n_out):
    d = h.shape[1]
    out = np.zeros((n_out, d))
    for e in range(src.shape[0]):
        s = src[e]
        t = dst[e]
        for k in range(d):
            out[t, k] += gates[e, k] * h[s, k]
    return out


IMPLEMENTATIONS = {
    "numpy": {
        "scatter_rows": _scatter_rows_np,
        "neighbor_sum": _neighbor_sum_np,
        "gated_neighbor_sum": _gated_neighbor_sum_np,
    },
    "numba": {
        "scatter_rows": _scatter_rows_nb,
        "neighbor_sum": _neighbor_sum_nb,
        "gated_neighbor_sum": _gated_neighbor_sum_nb,
    },
}

ACTIVE = "numpy"
scatter_rows = _scatter_rows_np
neighbor_sum = _neighbor_sum_np
gated_neighbor_sum = _gated_neighbor_sum_np


def use(impl):
    """Bind the public kernel names to one implementation ("numba" or "numpy")."""
    global ACTIVE, scatter_rows, neighbor_sum, gated_neighbor_sum
    if impl == "numba" and not NUMBA_AVAILABLE:
        raise RuntimeError("numba is not importable in this environment")
    table = IMPLEMENTATIONS[impl]
    scatter_rows = table["scatter_rows"]
    neighbor_sum = table["neighbor_sum"]
    gated_neighbor_sum = table["gated_neighbor_sum"]
    ACTIVE = impl


NUMBA_ENABLED = NUMBA_REQUESTED and NUMBA_AVAILABLE

use("numba" if NUMBA_ENABLED else "numpy")


def warmup():
    """Trigger JIT compilation on trivial inputs so timings exclude it."""
    h = np.zeros((2, 1))
    idx = np.zeros(1, dtype=np.int64)
    for table in (IMPLEMENTATIONS["numba"],) if NUMBA_AVAILABLE else ():
        table["scatter_rows"](h, idx, 2)
        table["neighbor_sum"](h, idx, idx, 2)
        table["gated_neighbor_sum"](h, np.zeros((1, 1)), idx, idx, 2)

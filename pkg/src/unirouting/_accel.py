"""Backend switch for the hot numeric kernels.

Kernels are written twice: an ``@njit`` loop version and a vectorised numpy
version.  ``UNIROUTING_JIT=0`` forces the numpy path; anything else uses numba
when it is importable.
"""

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    numba = None
    HAVE_NUMBA = False


def _flag_enabled():
    raw = os.environ.get("UNIROUTING_JIT", "1").strip().lower()
    return raw not in ("0", "false", "no", "off")


_backend = {"jit": HAVE_NUMBA and _flag_enabled()}


def use_jit():
    return _backend["jit"]


def set_backend(name):
    """Select ``"numba"`` or ``"numpy"`` at runtime (benchmarks, tests)."""
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend["jit"] = name == "numba"


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise a no-op decorator."""
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


def backend_name():
    return "numba" if _backend["jit"] else "numpy"

"""Optional numba acceleration.

Set ``ENTROPROBE_DISABLE_NUMBA=1`` before import to force the pure-numpy
kernels (useful for debugging and for the benchmark comparison).
"""

import os

_DISABLED = os.environ.get("ENTROPROBE_DISABLE_NUMBA", "").strip().lower() in {
    "1",
    "true",
    "yes",
    "on",
}

try:
    if _DISABLED:
        raise ImportError("numba disabled by ENTROPROBE_DISABLE_NUMBA")
    import numba  # noqa: F401

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False


def maybe_njit(func):
    """Compile ``func`` with ``numba.njit`` when available, else return it untouched."""
    if not HAS_NUMBA:
        return func
    import numba

    # fastmath stays off: reassociation would break bit-reproducibility
    return numba.njit(cache=True, nogil=True)(func)


def backend_name() -> str:
    return "numba" if HAS_NUMBA else "numpy"

"""Optional numba acceleration.

Set ``STOCHFIRE_DISABLE_NUMBA=1`` to force the pure-numpy code paths. Both
paths produce bit-identical results; the flag only changes speed.
"""
import os

_DISABLED = os.environ.get("STOCHFIRE_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _DISABLED:
        raise ImportError
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    HAVE_NUMBA = False
    _njit = None


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    bare = len(args) == 1 and callable(args[0]) and not kwargs
    if HAVE_NUMBA:
        kwargs.setdefault("cache", True)
        kwargs.setdefault("nogil", True)
        return _njit(*args, **kwargs)
    if bare:
        return args[0]
    return lambda fn: fn


def use_numba(flag=None):
    """Resolve whether a call should take the compiled path."""
    if flag is None:
        return HAVE_NUMBA
    return bool(flag) and HAVE_NUMBA

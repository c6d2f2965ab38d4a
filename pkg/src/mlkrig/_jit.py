"""Numba shim: njit with a no-op fallback when numba is unavailable."""

try:
    from numba import njit
except ModuleNotFoundError:  # pragma: no cover - plain-python fallback

    def njit(*args, **kwargs):
        def _wrap(fn):
            return fn

        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return _wrap

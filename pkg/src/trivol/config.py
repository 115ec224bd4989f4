"""Global numeric profile and worker-thread settings.

Two profiles are supported: the default float64 profile (used by every
gradient check and by the test suite) and a float32 speed profile for long
training runs. Finite-value validation is on by default and may be switched
off together with the precision drop.
"""

import os

import numpy as np

_dtype = np.float64
_validate_finite = True


def default_dtype():
    return _dtype


def set_default_dtype(dtype):
    """Set the scalar type used for newly created tensors (float32 or float64)."""
    global _dtype
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported scalar dtype: {dtype}")
    _dtype = dt.type


def validate_finite():
    return _validate_finite


def set_validate_finite(flag):
    global _validate_finite
    _validate_finite = bool(flag)


def use_speed_profile():
    """float32 scalars, finite checks off. Intended for long CPU training runs."""
    set_default_dtype(np.float32)
    set_validate_finite(False)


def use_accuracy_profile():
    """float64 scalars with finite checks; required for finite-difference work."""
    set_default_dtype(np.float64)
    set_validate_finite(True)


def thread_count():
    """Worker parallelism cap, from the TRIVOL_THREADS environment variable."""
    raw = os.environ.get("TRIVOL_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)

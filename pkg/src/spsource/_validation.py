"""Input checks shared by every module.

Each helper raises ``ValueError`` whose message starts with the offending
parameter name, so configuration errors can be traced back to a key.
"""

import numpy as np


class PreconditionError(ValueError):
    """An input violates an operation's precondition."""


class NumericalError(RuntimeError):
    """A numerical routine produced an unusable result."""


def check_positive(value, name):
    if not (np.isfinite(value) and value > 0):
        raise PreconditionError(f"{name}: must be a finite positive number, got {value!r}")
    return float(value)


def check_nonnegative(value, name):
    if not (np.isfinite(value) and value >= 0):
        raise PreconditionError(f"{name}: must be finite and >= 0, got {value!r}")
    return float(value)


def check_fraction(value, name, *, open_low=False, open_high=False):
    """Require ``value`` in [0, 1], optionally excluding either end."""
    ok = np.isfinite(value) and 0.0 <= value <= 1.0
    if ok and open_low and value == 0.0:
        ok = False
    if ok and open_high and value == 1.0:
        ok = False
    if not ok:
        lo = "(" if open_low else "["
        hi = ")" if open_high else "]"
        raise PreconditionError(f"{name}: must lie in {lo}0, 1{hi}, got {value!r}")
    return float(value)


def check_int(value, name, minimum=None):
    if isinstance(value, bool) or int(value) != value:
        raise PreconditionError(f"{name}: must be an integer, got {value!r}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise PreconditionError(f"{name}: must be >= {minimum}, got {value}")
    return value


def check_sorted(times, name):
    times = np.asarray(times)
    if times.size > 1 and np.any(np.diff(times) < 0):
        raise PreconditionError(f"{name}: timestamps must be sorted")
    return times


def check_power_of_two(n, name):
    n = check_int(n, name, minimum=1)
    if n & (n - 1):
        raise PreconditionError(f"{name}: must be a power of two, got {n}")
    return n

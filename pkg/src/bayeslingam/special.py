"""Scaled complementary error function.

Scalar functions built on the ``math`` module only, compiled with numba when
the numba backend is active so the kernels can call them.
"""

import math

import numpy as np

from ._accel import maybe_njit

SQRT_PI = math.sqrt(math.pi)

# Above this, exp(x*x) * erfc(x) underflows in erfc; switch to the continued
# fraction, which converges in a handful of terms that far out.
_CF_SWITCH = 26.0
_CF_TERMS = 24


@maybe_njit
def _erfcx_cf(x):
    # erfc(x) exp(x^2) = 1/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    acc = x
    for k in range(_CF_TERMS, 0, -1):
        acc = x + (0.5 * k) / acc
    return 1.0 / (SQRT_PI * acc)


@maybe_njit
def log_erfcx(x):
    """Natural log of ``erfcx(x) = exp(x**2) * erfc(x)`` for scalar ``x``.

    Finite for every finite ``x``: for very negative arguments the result is
    ``x**2 + log(erfc(x))`` with ``erfc(x)`` close to 2, so no overflow occurs.
    """
    if x < _CF_SWITCH:
        return x * x + math.log(math.erfc(x))
    return math.log(_erfcx_cf(x))


@maybe_njit
def erfcx(x):
    """Scaled complementary error function for scalar ``x``.

    Overflows to ``inf`` only when ``exp(x**2)`` itself would, i.e. for
    ``x < -26.6`` or so; use :func:`log_erfcx` there.
    """
    if x < _CF_SWITCH:
        if x < -26.6:
            return math.inf
        return math.exp(x * x) * math.erfc(x)
    return _erfcx_cf(x)


@maybe_njit
def dlog_erfcx(x):
    """Derivative of :func:`log_erfcx`: ``2x - 2 / (sqrt(pi) erfcx(x))``."""
    # 1/erfcx(x) = exp(-log_erfcx) stays finite when erfcx overflows.
    return 2.0 * x - 2.0 / SQRT_PI * math.exp(-log_erfcx(x))


log_erfcx_vec = np.vectorize(log_erfcx, otypes=[float])
erfcx_vec = np.vectorize(erfcx, otypes=[float])

"""Backend switch shared by every compiled function in the package.

``BAYESLINGAM_DISABLE_NUMBA=1`` (or a missing numba) selects the pure-numpy
path; the choice is fixed at import time.
"""

import os

ENV_FLAG = "BAYESLINGAM_DISABLE_NUMBA"

NUMBA_DISABLED = os.environ.get(ENV_FLAG, "").strip().lower() not in ("", "0", "false", "no")

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USE_NUMBA = numba is not None and not NUMBA_DISABLED


def maybe_njit(fn):
    """``numba.njit(cache=True)`` when numba is in use, identity otherwise."""
    if USE_NUMBA:
        return numba.njit(cache=True)(fn)
    return fn

"""Hot numeric kernels with a numba backend and a pure-numpy fallback.

The backend is chosen once at import time by :mod:`bayeslingam._accel`
(``BAYESLINGAM_DISABLE_NUMBA=1`` forces numpy). Both backends are exposed as
``numpy_backend`` and ``numba_backend`` (``None`` when numba is off) for
parity tests and benchmarks.
"""

from .._accel import USE_NUMBA
from . import _numpy as numpy_backend

if USE_NUMBA:
    from . import _numba as numba_backend

    backend = numba_backend
    BACKEND_NAME = "numba"
else:
    numba_backend = None
    backend = numpy_backend
    BACKEND_NAME = "numpy"

gl_loglik_grad = backend.gl_loglik_grad
gl_loglik = backend.gl_loglik
mog_loglik_grad = backend.mog_loglik_grad
gl_metropolis = backend.gl_metropolis
enumerate_dag_masks = backend.enumerate_dag_masks
dag_scores = backend.dag_scores
class_keys = backend.class_keys

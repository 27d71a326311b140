"""Backend selection for the hot loops.

The compiled extension is used when it imports; set ``AAMDP_PURE=1`` to force
the numpy fallback.
"""
import os

import numpy as np

from . import _fallback

BACKEND = "python"
_impl = _fallback
if os.environ.get("AAMDP_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback


def bellman_q(blocks, rewards, v, gamma, impl=None):
    impl = impl or _impl
    return impl.bellman_q(
        np.ascontiguousarray(blocks, dtype=float),
        np.ascontiguousarray(rewards, dtype=float),
        np.ascontiguousarray(v, dtype=float),
        float(gamma),
    )


def resampled_backward(p_pi, r_pi, idx, gamma, impl=None):
    impl = impl or _impl
    return impl.resampled_backward(
        np.ascontiguousarray(p_pi, dtype=float),
        np.ascontiguousarray(r_pi, dtype=float),
        np.ascontiguousarray(idx, dtype=np.intp),
        float(gamma),
    )

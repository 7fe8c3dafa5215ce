"""Backend selection for the hot kernels.

The compiled extension is used when it imports; setting ``CURVETRACK_PURE=1``
forces the pure-Python fallback.
"""

import os

if os.environ.get("CURVETRACK_PURE", "") not in ("", "0"):
    from . import _pykernels as _impl
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        from . import _pykernels as _impl

BACKEND = _impl.BACKEND
fast_march = _impl.fast_march
advect = _impl.advect
transport_step = _impl.transport_step
region_sums = _impl.region_sums

__all__ = ["BACKEND", "fast_march", "advect", "transport_step", "region_sums"]

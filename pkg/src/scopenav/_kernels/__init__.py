"""Hot-loop kernels: compiled extension when available, numpy fallback otherwise.

Set SCOPENAV_PURE=1 to force the fallback (used by the benchmark and by
tests that compare both backends).
"""

import os

if os.environ.get("SCOPENAV_PURE") == "1":
    from scopenav._kernels._pure import BACKEND, crc64, ray_crossings, trilinear_sample
else:
    try:
        from scopenav._kernels._native import BACKEND, crc64, ray_crossings, trilinear_sample
    except ImportError:
        from scopenav._kernels._pure import BACKEND, crc64, ray_crossings, trilinear_sample

__all__ = ["BACKEND", "crc64", "ray_crossings", "trilinear_sample"]

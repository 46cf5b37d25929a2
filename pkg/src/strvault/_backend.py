"""Pick the kernel implementation at import time.

The compiled extension is preferred; ``STRVAULT_PURE=1`` forces the pure
Python fallback (used by the test suite and the backend benchmark).
"""

from __future__ import annotations

import os

from . import _pure

try:
    if os.environ.get("STRVAULT_PURE", "") not in ("", "0"):
        raise ImportError("pure backend forced by STRVAULT_PURE")
    from . import _kernels as kernels
except ImportError:
    kernels = _pure

BACKEND = kernels.NAME

"""Selects the compositing kernels at import time.

The compiled ``_raster`` extension is preferred. Setting the environment
variable ``GEOSPLAT_PURE_PYTHON=1`` forces the numpy fallback, as does a
missing or broken build.
"""

from __future__ import annotations

import logging
import os

from . import _raster_py

logger = logging.getLogger(__name__)

python_kernels = _raster_py
compiled_kernels = None

if os.environ.get("GEOSPLAT_PURE_PYTHON", "") not in ("", "0"):
    kernels = _raster_py
else:
    try:
        from . import _raster as compiled_kernels  # type: ignore[no-redef]
    except ImportError:  # pragma: no cover - depends on the build
        logger.info("compiled raster kernels unavailable; using numpy fallback")
        kernels = _raster_py
    else:
        kernels = compiled_kernels

NAME = "compiled" if kernels is compiled_kernels else "python"


def get(name: str | None = None):
    """Kernel module by name (``"compiled"``, ``"python"``) or the default."""
    if name is None:
        return kernels
    if name == "python":
        return _raster_py
    if name == "compiled":
        if compiled_kernels is None:
            raise RuntimeError("compiled kernels were not built")
        return compiled_kernels
    raise ValueError(f"unknown backend {name!r}")

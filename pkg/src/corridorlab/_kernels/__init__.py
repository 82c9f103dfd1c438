"""Hot numeric kernels, with numba-jitted and pure-numpy twins.

The simulator spends nearly all of its time in a few inner loops: beam
raycasting, plant integration, DWA arc scoring, and the per-scene
goal-distance grid. Each has two implementations with identical signatures:

* ``_numba_impl`` -- ``@njit`` loops, the default when numba imports.
* ``_numpy_impl`` -- vectorized numpy, always available.

Selection is by the ``CORRIDORLAB_BACKEND`` environment variable
(``numba`` or ``numpy``), read once at import. ``benchmarks/bench_kernels.py``
compares the two.
"""

from __future__ import annotations

import os

_requested = os.environ.get("CORRIDORLAB_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise RuntimeError(f"CORRIDORLAB_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

if _requested == "numba":
    try:
        from . import _numba_impl as _impl

        BACKEND = "numba"
    except ImportError:
        from . import _numpy_impl as _impl

        BACKEND = "numpy"
else:
    from . import _numpy_impl as _impl

    BACKEND = "numpy"

ray_ranges = _impl.ray_ranges
plant_step_batch = _impl.plant_step_batch
arc_evaluate = _impl.arc_evaluate
grid_distance = _impl.grid_distance


def backend() -> str:
    """Name of the active kernel backend."""
    return BACKEND

"""Hot-kernel backend selection.

The numba backend is used by default; set ``EPI_NO_NUMBA=1`` (or any of
"true"/"yes") to force the pure numpy/scipy path.  Both implement the same
contracts and agree to rounding error.  ``benchmarks/bench_step.py`` compares
them head to head.
"""

import os

_flag = os.environ.get("EPI_NO_NUMBA", "").strip().lower()
_force_numpy = _flag in ("1", "true", "yes")

if not _force_numpy:
    try:
        from ._numba import (BACKEND, step_core, transport_apply,
                             transport_sweep_weighted, tridiag_solve)
    except ImportError:  # pragma: no cover - numba missing
        _force_numpy = True

if _force_numpy:
    from ._numpy import (BACKEND, step_core, transport_apply,
                         transport_sweep_weighted, tridiag_solve)

__all__ = ["BACKEND", "step_core", "transport_apply",
           "transport_sweep_weighted", "tridiag_solve"]

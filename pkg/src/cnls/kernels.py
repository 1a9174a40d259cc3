"""Backend selection for the inner-loop kernels.

The compiled extension ``cnls._kernels`` is used when it was built; the
numpy module ``cnls._kernels_py`` otherwise. Setting ``CNLS_PURE_PYTHON=1``
forces the fallback (used by the benchmark and the parity tests).
"""
import os

from . import _kernels_py

if os.environ.get("CNLS_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "python" if _impl is _kernels_py else "compiled"

multiplier = _impl.multiplier
max_multiplier = _impl.max_multiplier
rotate_phase = _impl.rotate_phase
potential_density = _impl.potential_density
tridiag_solve = _impl.tridiag_solve

__all__ = [
    "BACKEND",
    "multiplier",
    "max_multiplier",
    "rotate_phase",
    "potential_density",
    "tridiag_solve",
]

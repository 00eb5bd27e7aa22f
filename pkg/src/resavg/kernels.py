"""Kernel backend selection.

The compiled extension ``resavg._kernels`` is preferred when importable;
otherwise the pure-numpy kernels take over. Set ``RESAVG_PURE_PYTHON=1``
to force the fallback (useful for debugging and for the benchmark).

The general-noise integrator always runs on the numpy backend because
its coefficients are opaque Python callables.
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("RESAVG_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _kernels_py

BACKEND = _impl.BACKEND_NAME

run_original = _impl.run_original
run_interaction = _impl.run_interaction
run_effective = _impl.run_effective
run_action = _impl.run_action
holder_seminorm = _impl.holder_seminorm
run_general = _kernels_py.run_general


def get_backends():
    """All importable backends, keyed by name (for tests and benchmarks)."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels  # type: ignore[attr-defined]

        out["cython"] = _kernels
    except ImportError:
        pass
    return out

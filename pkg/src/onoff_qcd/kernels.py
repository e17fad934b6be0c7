"""Backend selection for the hot loops.

The compiled extension is used when it imports; set ``ONOFF_QCD_BACKEND=python``
to force the pure-Python twins. Both expose the same four functions.
"""

from __future__ import annotations

import os

from . import _pykernels

_forced = os.environ.get("ONOFF_QCD_BACKEND", "").lower()

if _forced == "python":
    _impl = _pykernels
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        if _forced == "cython":
            raise
        _impl = _pykernels

BACKEND: str = _impl.BACKEND
NEVER = _pykernels.NEVER

simulate_trials = _impl.simulate_trials
overshoot = _impl.overshoot
eta_samples = _impl.eta_samples
exit_paths = _impl.exit_paths


def get_backend(name: str | None = None):
    """Return the kernel module for ``name`` ("cython"/"python"), or the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")

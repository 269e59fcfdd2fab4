"""Kernel backend selection.

The compiled Cython extension is preferred when it importable; the pure-numpy
module is the fallback. Set ``QFEDSIM_BACKEND=python`` or
``QFEDSIM_BACKEND=compiled`` to force a choice (forcing ``compiled`` raises if
the extension was not built).
"""

from __future__ import annotations

import os

from . import _kernels_py

_forced = os.environ.get("QFEDSIM_BACKEND", "").strip().lower()

if _forced == "python":
    kernels = _kernels_py
elif _forced == "compiled":
    from . import _kernels as kernels  # type: ignore[no-redef]
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        kernels = _kernels_py

BACKEND_NAME: str = kernels.BACKEND_NAME

apply_1q = kernels.apply_1q
apply_cnot = kernels.apply_cnot
depolarize = kernels.depolarize

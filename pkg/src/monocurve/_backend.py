"""Kernel backend selection: the compiled Cython core when available, the
pure-NumPy twin otherwise. MONOCURVE_BACKEND=python|compiled forces a choice.
"""

import os

_forced = os.environ.get("MONOCURVE_BACKEND", "").strip().lower()
if _forced not in ("", "python", "compiled"):
    raise RuntimeError(f"MONOCURVE_BACKEND must be 'python' or 'compiled', got {_forced!r}")

if _forced == "python":
    from . import _kernels as _impl
    BACKEND = "python"
else:
    try:
        from . import _speedups as _impl
        BACKEND = "compiled"
    except ImportError:
        if _forced == "compiled":
            raise RuntimeError(
                "compiled backend requested but monocurve._speedups is not built; "
                "run `python setup.py build_ext --inplace`"
            )
        from . import _kernels as _impl
        BACKEND = "python"

forward = _impl.forward
backward = _impl.backward

"""Hot Monte Carlo kernels: compiled extension with a pure-Python fallback.

The compiled module is used when it was built and ``HYPSIGMA_PURE_PYTHON`` is
not set to a true value.  ``BACKEND`` names the implementation in use.
"""
import os

from . import _pykernels as python

compiled = None
if os.environ.get("HYPSIGMA_PURE_PYTHON", "").lower() not in ("1", "true", "yes"):
    try:
        from . import _ckernels as compiled
    except ImportError:  # extension not built
        compiled = None

if compiled is not None:
    sweep_lowrank = compiled.sweep_lowrank
    accumulate_correlator = compiled.accumulate_correlator
    BACKEND = "cython"
else:
    sweep_lowrank = python.sweep_lowrank
    accumulate_correlator = python.accumulate_correlator
    BACKEND = "python"

__all__ = ["BACKEND", "accumulate_correlator", "compiled", "python", "sweep_lowrank"]

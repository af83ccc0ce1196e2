"""Kernel selection: compiled extension when importable, else pure Python.

Set ``FJSIM_BACKEND=python`` to force the fallback.
"""
import os
import warnings

from . import _pykernels

python = _pykernels
compiled = None
if os.environ.get("FJSIM_BACKEND", "").lower() != "python":
    try:
        from . import _ckernels as compiled
    except ImportError:  # pragma: no cover - depends on build
        warnings.warn("fjsim: compiled kernels unavailable, using the pure-Python fallback", RuntimeWarning)

kernels = compiled if compiled is not None else python
NAME = "cython" if compiled is not None else "python"


def get(name=None):
    """Kernel module by name ("cython" or "python"); default is the active one."""
    if name is None:
        return kernels
    if name == "python":
        return python
    if name == "cython":
        if compiled is None:
            raise RuntimeError("compiled kernels are not built")
        return compiled
    raise ValueError(f"unknown backend {name!r}")

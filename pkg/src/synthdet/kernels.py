"""Kernel backend selection.

The compiled extension is used when importable. Set ``SYNTHDET_BACKEND=python``
to force the numpy fallback (``cython`` makes a missing extension an error).
"""
import importlib
import os

from . import _pykernels


def load_backend(name=None):
    """Return the kernel module for ``name`` (``"cython"``, ``"python"`` or ``None`` for auto)."""
    name = name or os.environ.get("SYNTHDET_BACKEND", "auto")
    if name == "python":
        return _pykernels
    try:
        return importlib.import_module("synthdet._ckernels")
    except ImportError:
        if name == "cython":
            raise
        return _pykernels


_backend = load_backend()
BACKEND = _backend.NAME
ace_response = _backend.ace_response
rasterize = _backend.rasterize
alpha_over = _backend.alpha_over

"""Kernel backend chosen at import time.

The compiled ``_ckernels`` extension is preferred. Set ``INDAGG_BACKEND`` to
``python`` to force the numpy fallback, or to ``cython`` to fail loudly when
the extension is missing.
"""
import importlib
import logging
import os

log = logging.getLogger(__name__)

_MODULES = {"cython": "indagg._ckernels", "python": "indagg._pykernels"}


def load(name):
    """Import a specific backend by name (``"cython"`` or ``"python"``)."""
    return importlib.import_module(_MODULES[name])


def available():
    names = []
    for name in _MODULES:
        try:
            load(name)
        except ImportError:
            continue
        names.append(name)
    return names


def _select():
    forced = os.environ.get("INDAGG_BACKEND", "").strip().lower()
    if forced:
        if forced not in _MODULES:
            raise ImportError(f"INDAGG_BACKEND must be one of {sorted(_MODULES)}, got {forced!r}")
        return load(forced)
    try:
        return load("cython")
    except ImportError:
        log.info("compiled kernels unavailable, using the pure-Python fallback")
        return load("python")


kernels = _select()
NAME = kernels.NAME

"""Backend selection for the hot kernels.

The compiled ``_core`` extension is used when it imports; otherwise the
pure-Python ``_pycore`` twin takes over. Both expose the same functions.
"""

from __future__ import annotations

import importlib
import types

from . import _pycore

try:
    from . import _core as _default
except ImportError:  # extension not built
    _default = _pycore

MODEL_INTRO = _pycore.MODEL_INTRO
MODEL_CHEMO = _pycore.MODEL_CHEMO
MODEL_DSDI = _pycore.MODEL_DSDI

BACKEND: str = _default.BACKEND


def available() -> list[str]:
    names = ["python"]
    try:
        importlib.import_module("stepwise._core")
        names.insert(0, "cython")
    except ImportError:
        pass
    return names


def get(name: str | None = None) -> types.ModuleType:
    """Kernel module by name (``"cython"`` or ``"python"``); None gives the default."""
    if name is None:
        return _default
    if name == "python":
        return _pycore
    if name == "cython":
        return importlib.import_module("stepwise._core")
    raise ValueError(f"unknown backend {name!r}; available: {available()}")


def diverged_types() -> tuple[type, ...]:
    types_ = {_pycore.IntegrationDivergedCore}
    if _default is not _pycore:
        types_.add(_default.IntegrationDivergedCore)
    return tuple(types_)

"""Selects the walk kernel implementation.

The compiled extension is preferred when importable; otherwise the pure
Python kernel is used.  Both produce bit-identical output, so the choice
only affects speed.  Override with set_backend() or the STRUCTWALK_BACKEND
environment variable ("compiled" or "python").
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _kernels_py


def _load(name: str) -> ModuleType:
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}; choose 'compiled' or 'python'")


def _default() -> ModuleType:
    forced = os.environ.get("STRUCTWALK_BACKEND")
    if forced:
        return _load(forced)
    try:
        return _load("compiled")
    except ImportError:
        return _kernels_py


kernels: ModuleType = _default()


def backend_name() -> str:
    return kernels.NAME


def set_backend(name: str) -> None:
    global kernels
    kernels = _load(name)


def available_backends() -> list[str]:
    names = ["python"]
    try:
        _load("compiled")
        names.insert(0, "compiled")
    except ImportError:
        pass
    return names

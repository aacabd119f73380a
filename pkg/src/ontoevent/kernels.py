"""Backend selection for the training-step kernels.

The compiled extension is preferred when importable; the numpy fallback is
always available. Set ``ONTOEVENT_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _kernels_np


def _load_compiled() -> ModuleType | None:
    try:
        from . import _speedups  # type: ignore[attr-defined]
    except ImportError:
        return None
    return _speedups


if os.environ.get("ONTOEVENT_PURE_PYTHON"):
    _active: ModuleType = _kernels_np
else:
    _active = _load_compiled() or _kernels_np

BACKEND = _active.BACKEND_NAME

sigmoid = _active.sigmoid
bce_loss_dz = _active.bce_loss_dz
cos_loss_dz = _active.cos_loss_dz
nesterov_step = _active.nesterov_step


def available_backends() -> list[str]:
    names = ["numpy"]
    if _load_compiled() is not None:
        names.append("compiled")
    return names


def get_backend(name: str) -> ModuleType:
    if name == "numpy":
        return _kernels_np
    if name == "compiled":
        compiled = _load_compiled()
        if compiled is None:
            raise RuntimeError("compiled kernels are not built")
        return compiled
    raise ValueError(f"unknown backend {name!r}")

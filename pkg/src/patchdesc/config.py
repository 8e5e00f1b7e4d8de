"""Global numeric precision switch.

All tensors are created in the active precision: float32 for normal
training (fast, half the memory) or float64 for gradient verification,
where finite-difference tolerances need the extra bits.  The switch is
process-global so that a whole forward/backward chain runs in one dtype.

The environment variable PATCHDESC_PRECISION ("f32" or "f64") overrides
the default at import time and takes precedence over run-config files.
"""

from __future__ import annotations

import os
from contextlib import contextmanager

import numpy as np

from .errors import ConfigError

PRECISIONS = {"f32": np.float32, "f64": np.float64}

_active = "f32"
precision_from_env = False


def set_precision(name: str) -> None:
    """Select the global precision mode ("f32" or "f64")."""
    global _active
    if name not in PRECISIONS:
        raise ConfigError(f"unknown precision {name!r}; expected one of {sorted(PRECISIONS)}")
    _active = name


def active_precision() -> str:
    return _active


def dtype() -> type:
    """numpy scalar type for the active precision."""
    return PRECISIONS[_active]


@contextmanager
def precision(name: str):
    """Temporarily switch precision (used heavily by the test suite)."""
    previous = _active
    set_precision(name)
    try:
        yield
    finally:
        set_precision(previous)


_env = os.environ.get("PATCHDESC_PRECISION")
if _env is not None:
    set_precision(_env)
    precision_from_env = True

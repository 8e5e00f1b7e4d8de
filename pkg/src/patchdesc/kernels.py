"""Backend selection for the convolution inner loops.

On import, prefer the compiled extension and fall back to the numpy
implementation when it is absent (e.g. a source checkout without a build
step).  PATCHDESC_BACKEND=compiled|python forces the choice; forcing
"compiled" fails loudly instead of silently degrading.
"""

from __future__ import annotations

import os

_forced = os.environ.get("PATCHDESC_BACKEND")
if _forced not in (None, "compiled", "python"):
    raise ImportError(f"PATCHDESC_BACKEND must be 'compiled' or 'python', got {_forced!r}")

if _forced == "python":
    from . import _convkernels_py as _impl

    BACKEND = "python"
else:
    try:
        from . import _convkernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        if _forced == "compiled":
            raise ImportError(
                "PATCHDESC_BACKEND=compiled but the extension is not built; "
                "run `pip install -e . --no-build-isolation`"
            ) from None
        from . import _convkernels_py as _impl  # type: ignore[no-redef]

        BACKEND = "python"

conv2d_forward = _impl.conv2d_forward
conv2d_grad_input = _impl.conv2d_grad_input
conv2d_grad_kernels = _impl.conv2d_grad_kernels

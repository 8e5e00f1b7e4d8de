"""Pure-Python (numpy) fallback for the compiled convolution kernels.

Same call contracts as `_convkernels`: callers allocate the outputs,
`conv2d_forward` accumulates into a bias-filled `out`, the gradient
routines expect zero-filled outputs.  The heavy lifting is delegated to
BLAS through `tensordot` over sliding-window views, so this backend is
usable for real work, just without the compiled extension's predictable
single-core profile.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv2d_forward(x: np.ndarray, k: np.ndarray, out: np.ndarray) -> None:
    kh, kw = k.shape[2], k.shape[3]
    # windows: (C, H', W', kh, kw)
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))
    out += np.tensordot(k, win, axes=([1, 2, 3], [0, 3, 4]))


def conv2d_grad_input(k: np.ndarray, gout: np.ndarray, gin: np.ndarray) -> None:
    kh, kw = k.shape[2], k.shape[3]
    ho, wo = gout.shape[1], gout.shape[2]
    # Scatter each kernel tap's contribution onto the shifted input window.
    for u in range(kh):
        for v in range(kw):
            gin[:, u : u + ho, v : v + wo] += np.tensordot(k[:, :, u, v], gout, axes=([0], [0]))


def conv2d_grad_kernels(x: np.ndarray, gout: np.ndarray, gk: np.ndarray) -> None:
    ho, wo = gout.shape[1], gout.shape[2]
    # windows: (C, kh, kw, H', W')
    win = sliding_window_view(x, (ho, wo), axis=(1, 2))
    gk += np.tensordot(gout, win, axes=([1, 2], [3, 4]))

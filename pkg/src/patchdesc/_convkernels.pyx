# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled inner loops for valid 2-D convolution (forward and both gradients).

These three routines are where nearly all training time goes, so they are
kept as plain nested loops over contiguous memoryviews: the innermost index
always walks the last axis of every operand, which lets the C compiler
vectorize them.  Callers allocate the output arrays; `conv2d_forward`
accumulates into `out` (pre-filled with the bias), the gradient routines
expect zero-filled outputs.
"""

ctypedef fused floating:
    float
    double


def conv2d_forward(floating[:, :, ::1] x, floating[:, :, :, ::1] k, floating[:, :, ::1] out):
    """out[o,i,j] += sum_{c,u,v} k[o,c,u,v] * x[c,i+u,j+v]."""
    cdef Py_ssize_t co = k.shape[0], ci = k.shape[1], kh = k.shape[2], kw = k.shape[3]
    cdef Py_ssize_t ho = out.shape[1], wo = out.shape[2]
    cdef Py_ssize_t o, c, u, v, i, j
    cdef floating w
    with nogil:
        for o in range(co):
            for c in range(ci):
                for u in range(kh):
                    for v in range(kw):
                        w = k[o, c, u, v]
                        for i in range(ho):
                            for j in range(wo):
                                out[o, i, j] += w * x[c, i + u, j + v]


def conv2d_grad_input(floating[:, :, :, ::1] k, floating[:, :, ::1] gout, floating[:, :, ::1] gin):
    """gin[c,i+u,j+v] += sum_o k[o,c,u,v] * gout[o,i,j] (gin zero-filled)."""
    cdef Py_ssize_t co = k.shape[0], ci = k.shape[1], kh = k.shape[2], kw = k.shape[3]
    cdef Py_ssize_t ho = gout.shape[1], wo = gout.shape[2]
    cdef Py_ssize_t o, c, u, v, i, j
    cdef floating w
    with nogil:
        for c in range(ci):
            for o in range(co):
                for u in range(kh):
                    for v in range(kw):
                        w = k[o, c, u, v]
                        for i in range(ho):
                            for j in range(wo):
                                gin[c, i + u, j + v] += w * gout[o, i, j]


def conv2d_grad_kernels(floating[:, :, ::1] x, floating[:, :, ::1] gout, floating[:, :, :, ::1] gk):
    """gk[o,c,u,v] += sum_{i,j} gout[o,i,j] * x[c,i+u,j+v] (gk zero-filled)."""
    cdef Py_ssize_t co = gk.shape[0], ci = gk.shape[1], kh = gk.shape[2], kw = gk.shape[3]
    cdef Py_ssize_t ho = gout.shape[1], wo = gout.shape[2]
    cdef Py_ssize_t o, c, u, v, i, j
    cdef floating acc
    with nogil:
        for o in range(co):
            for c in range(ci):
                for u in range(kh):
                    for v in range(kw):
                        acc = 0
                        for i in range(ho):
                            for j in range(wo):
                                acc += gout[o, i, j] * x[c, i + u, j + v]
                        gk[o, c, u, v] = acc

"""Forward and backward passes for the four layer kinds the network uses.

Valid (no padding, stride 1, fully connected maps) 2-D convolution,
non-overlapping 2x2 average subsampling, elementwise tanh, and a linear
fully connected layer.  Every forward returns `(output, cache)` where the
cache holds exactly what the matching backward needs; backwards return
analytic gradients.  All functions are pure: parameters, inputs and caches
are never mutated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import config, kernels
from .errors import ShapeMismatchError
from .tensor import Tensor


@dataclass(frozen=True)
class ConvParams:
    """Convolution kernels (out_maps, in_maps, kh, kw) and per-map bias."""

    kernels: Tensor
    bias: Tensor

    def __post_init__(self):
        if self.kernels.rank != 4:
            raise ShapeMismatchError(f"conv kernels must be rank 4, got {self.kernels.shape}")
        if self.bias.rank != 1 or self.bias.shape[0] != self.kernels.shape[0]:
            raise ShapeMismatchError(
                f"conv bias shape {self.bias.shape} does not match {self.kernels.shape[0]} output maps"
            )

    @property
    def out_maps(self) -> int:
        return self.kernels.shape[0]

    @property
    def in_maps(self) -> int:
        return self.kernels.shape[1]

    @property
    def kernel_size(self) -> tuple[int, int]:
        return self.kernels.shape[2], self.kernels.shape[3]


@dataclass(frozen=True)
class FcParams:
    """Fully connected weights (out_units, in_units) and bias."""

    weights: Tensor
    bias: Tensor

    def __post_init__(self):
        if self.weights.rank != 2:
            raise ShapeMismatchError(f"fc weights must be rank 2, got {self.weights.shape}")
        if self.bias.rank != 1 or self.bias.shape[0] != self.weights.shape[0]:
            raise ShapeMismatchError(
                f"fc bias shape {self.bias.shape} does not match {self.weights.shape[0]} output units"
            )

    @property
    def out_units(self) -> int:
        return self.weights.shape[0]

    @property
    def in_units(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class ConvCache:
    input: Tensor
    params: ConvParams
    out_shape: tuple[int, int, int]


@dataclass(frozen=True)
class PoolCache:
    in_shape: tuple[int, int, int]
    out_shape: tuple[int, int, int]


@dataclass(frozen=True)
class TanhCache:
    output: Tensor


@dataclass(frozen=True)
class FcCache:
    input: Tensor
    params: FcParams


def conv2d_forward(x: Tensor, p: ConvParams) -> tuple[Tensor, ConvCache]:
    """Valid convolution: output (out_maps, H-kh+1, W-kw+1)."""
    if x.rank != 3:
        raise ShapeMismatchError(f"conv input must be rank 3, got {x.shape}")
    c, h, w = x.shape
    kh, kw = p.kernel_size
    if c != p.in_maps:
        raise ShapeMismatchError(f"input has {c} maps, kernels expect {p.in_maps}")
    if h < kh or w < kw:
        raise ShapeMismatchError(f"kernel {kh}x{kw} larger than input {h}x{w}")
    ho, wo = h - kh + 1, w - kw + 1
    out = np.empty((p.out_maps, ho, wo), dtype=x.array.dtype)
    out[:] = p.bias.array[:, None, None]
    kernels.conv2d_forward(x.array, p.kernels.array, out)
    return Tensor._wrap(out), ConvCache(x, p, (p.out_maps, ho, wo))


def conv2d_backward(cache: ConvCache, grad_out: Tensor) -> tuple[Tensor, Tensor, Tensor]:
    """Gradients w.r.t. (input, kernels, bias)."""
    if grad_out.shape != cache.out_shape:
        raise ShapeMismatchError(
            f"grad_out shape {grad_out.shape} does not match forward output {cache.out_shape}"
        )
    x, p = cache.input, cache.params
    gin = np.zeros(x.shape, dtype=x.array.dtype)
    gk = np.zeros(p.kernels.shape, dtype=x.array.dtype)
    kernels.conv2d_grad_input(p.kernels.array, grad_out.array, gin)
    kernels.conv2d_grad_kernels(x.array, grad_out.array, gk)
    gb = grad_out.array.sum(axis=(1, 2))
    return Tensor._wrap(gin), Tensor._wrap(gk), Tensor._wrap(np.ascontiguousarray(gb))


def avgpool2_forward(x: Tensor) -> tuple[Tensor, PoolCache]:
    """Non-overlapping 2x2 mean; a trailing odd row/column is dropped."""
    if x.rank != 3:
        raise ShapeMismatchError(f"pool input must be rank 3, got {x.shape}")
    c, h, w = x.shape
    if h < 2 or w < 2:
        raise ShapeMismatchError(f"pool needs spatial extents >= 2, got {h}x{w}")
    ho, wo = h // 2, w // 2
    blocks = x.array[:, : 2 * ho, : 2 * wo].reshape(c, ho, 2, wo, 2)
    out = blocks.mean(axis=(2, 4))
    return Tensor._wrap(out), PoolCache((c, h, w), (c, ho, wo))


def avgpool2_backward(cache: PoolCache, grad_out: Tensor) -> Tensor:
    """Each output gradient spreads as grad/4 over its 2x2 source window."""
    if grad_out.shape != cache.out_shape:
        raise ShapeMismatchError(
            f"grad_out shape {grad_out.shape} does not match forward output {cache.out_shape}"
        )
    c, h, w = cache.in_shape
    _, ho, wo = cache.out_shape
    gin = np.zeros((c, h, w), dtype=grad_out.array.dtype)
    quarter = grad_out.array * grad_out.array.dtype.type(0.25)
    gin[:, : 2 * ho, : 2 * wo] = np.repeat(np.repeat(quarter, 2, axis=1), 2, axis=2)
    return Tensor._wrap(gin)


def tanh_forward(x: Tensor) -> tuple[Tensor, TanhCache]:
    out = Tensor._wrap(np.tanh(x.array))
    return out, TanhCache(out)


def tanh_backward(cache: TanhCache, grad_out: Tensor) -> Tensor:
    y = cache.output
    if grad_out.shape != y.shape:
        raise ShapeMismatchError(f"grad_out shape {grad_out.shape} does not match output {y.shape}")
    return Tensor._wrap(grad_out.array * (1.0 - y.array * y.array))


def fc_forward(x: Tensor, p: FcParams) -> tuple[Tensor, FcCache]:
    """Linear layer: weights @ x + bias (no squashing of the output)."""
    if x.rank != 1:
        raise ShapeMismatchError(f"fc input must be rank 1, got {x.shape}")
    if x.shape[0] != p.in_units:
        raise ShapeMismatchError(f"fc input length {x.shape[0]} != {p.in_units} input units")
    out = p.weights.array @ x.array + p.bias.array
    return Tensor._wrap(out), FcCache(x, p)


def fc_backward(cache: FcCache, grad_out: Tensor) -> tuple[Tensor, Tensor, Tensor]:
    """Gradients w.r.t. (input, weights, bias)."""
    p = cache.params
    if grad_out.shape != (p.out_units,):
        raise ShapeMismatchError(f"grad_out shape {grad_out.shape} != ({p.out_units},)")
    g = grad_out.array
    gin = p.weights.array.T @ g
    gw = np.outer(g, cache.input.array)
    return Tensor._wrap(np.ascontiguousarray(gin)), Tensor._wrap(gw), Tensor._wrap(g.copy())

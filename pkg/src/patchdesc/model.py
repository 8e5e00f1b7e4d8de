"""The six-stage descriptor network: conv/pool/conv/pool/conv/fc.

The standard architecture maps one 64x64 grayscale patch through
6 -> 21 -> 55 feature maps into a 32-dimensional descriptor.  The same
code also runs a small "verification" architecture (16x16 input, 2/3/4
maps) so finite-difference gradient checks finish in seconds; both are
plain `Architecture` values and share every code path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict

import numpy as np

from . import config
from .errors import CacheMismatchError, ShapeMismatchError
from .layers import (
    ConvCache,
    ConvParams,
    FcCache,
    FcParams,
    PoolCache,
    TanhCache,
    avgpool2_backward,
    avgpool2_forward,
    conv2d_backward,
    conv2d_forward,
    fc_backward,
    fc_forward,
    tanh_backward,
    tanh_forward,
)
from .tensor import Tensor

PARAM_NAMES = (
    "c1.kernels",
    "c1.bias",
    "c2.kernels",
    "c2.bias",
    "c3.kernels",
    "c3.bias",
    "fc.weights",
    "fc.bias",
)

# Gradients keyed by parameter name, shapes mirroring NetworkParams.
ParamGrads = Dict[str, Tensor]


@dataclass(frozen=True)
class Architecture:
    """Stage sizing: three conv stages (maps, kernel sizes) plus the fc width."""

    input_size: int = 64
    in_maps: int = 1
    conv_maps: tuple[int, int, int] = (6, 21, 55)
    kernel_sizes: tuple[int, int, int] = (5, 6, 5)
    fc_units: int = 32

    def shape_plan(self) -> list[tuple[str, tuple[int, ...]]]:
        """Ordered (stage, output shape) chain; raises if any stage is infeasible."""
        plan: list[tuple[str, tuple[int, ...]]] = []
        h = w = self.input_size
        for stage, (maps, ksize) in enumerate(zip(self.conv_maps, self.kernel_sizes), start=1):
            if h < ksize or w < ksize:
                raise ShapeMismatchError(
                    f"C{stage} kernel {ksize}x{ksize} does not fit its {h}x{w} input"
                )
            h, w = h - ksize + 1, w - ksize + 1
            plan.append((f"C{stage}", (maps, h, w)))
            if stage < 3:
                if h < 2 or w < 2:
                    raise ShapeMismatchError(f"S{stage} input {h}x{w} too small to subsample")
                h, w = h // 2, w // 2
                plan.append((f"S{stage}", (maps, h, w)))
        plan.append(("flatten", (self.conv_maps[2] * h * w,)))
        plan.append(("FC", (self.fc_units,)))
        return plan

    @property
    def flat_size(self) -> int:
        return self.shape_plan()[-2][1][0]

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        m1, m2, m3 = self.conv_maps
        k1, k2, k3 = self.kernel_sizes
        return {
            "c1.kernels": (m1, self.in_maps, k1, k1),
            "c1.bias": (m1,),
            "c2.kernels": (m2, m1, k2, k2),
            "c2.bias": (m2,),
            "c3.kernels": (m3, m2, k3, k3),
            "c3.bias": (m3,),
            "fc.weights": (self.fc_units, self.flat_size),
            "fc.bias": (self.fc_units,),
        }


STANDARD = Architecture()


def verification_arch() -> Architecture:
    """Tiny net for gradient checks: 16x16 input, 2/3/4 maps, 8-d output."""
    return Architecture(input_size=16, conv_maps=(2, 3, 4), kernel_sizes=(2, 2, 2), fc_units=8)


@dataclass(frozen=True)
class NetworkParams:
    """All learnable tensors of the six-stage network."""

    c1: ConvParams
    c2: ConvParams
    c3: ConvParams
    fc: FcParams

    def __post_init__(self):
        if self.c2.in_maps != self.c1.out_maps or self.c3.in_maps != self.c2.out_maps:
            raise ShapeMismatchError("conv stage map counts do not chain")


@dataclass(frozen=True)
class Descriptor:
    """Fixed-length descriptor vector for one patch."""

    values: Tensor

    def __post_init__(self):
        if self.values.rank != 1:
            raise ShapeMismatchError(f"descriptor must be rank 1, got {self.values.shape}")

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class NetworkCache:
    conv1: ConvCache
    tanh1: TanhCache
    pool1: PoolCache
    conv2: ConvCache
    tanh2: TanhCache
    pool2: PoolCache
    conv3: ConvCache
    tanh3: TanhCache
    pre_flatten: tuple[int, int, int]
    fc: FcCache


def shape_plan(arch: Architecture = STANDARD) -> list[tuple[str, tuple[int, ...]]]:
    return arch.shape_plan()


def param_count(params: NetworkParams) -> int:
    return sum(t.size for t in params_to_dict(params).values())


def params_to_dict(params: NetworkParams) -> dict[str, Tensor]:
    return {
        "c1.kernels": params.c1.kernels,
        "c1.bias": params.c1.bias,
        "c2.kernels": params.c2.kernels,
        "c2.bias": params.c2.bias,
        "c3.kernels": params.c3.kernels,
        "c3.bias": params.c3.bias,
        "fc.weights": params.fc.weights,
        "fc.bias": params.fc.bias,
    }


def params_from_dict(tensors: dict[str, Tensor]) -> NetworkParams:
    missing = [n for n in PARAM_NAMES if n not in tensors]
    if missing:
        raise ShapeMismatchError(f"missing parameter tensors: {missing}")
    return NetworkParams(
        c1=ConvParams(tensors["c1.kernels"], tensors["c1.bias"]),
        c2=ConvParams(tensors["c2.kernels"], tensors["c2.bias"]),
        c3=ConvParams(tensors["c3.kernels"], tensors["c3.bias"]),
        fc=FcParams(tensors["fc.weights"], tensors["fc.bias"]),
    )


def validate_params(params: NetworkParams, arch: Architecture) -> None:
    """Reject parameters whose shapes do not match the architecture's plan."""
    expected = arch.param_shapes()
    for name, tensor in params_to_dict(params).items():
        if tensor.shape != expected[name]:
            raise ShapeMismatchError(
                f"parameter {name} has shape {tensor.shape}, architecture expects {expected[name]}"
            )


def init_params(seed: int, arch: Architecture = STANDARD) -> NetworkParams:
    """Glorot-uniform kernels/weights (bound sqrt(6/(fan_in+fan_out))), zero biases."""
    rng = np.random.default_rng(seed)
    dt = config.dtype()

    def uniform(shape: tuple[int, ...], fan_in: int, fan_out: int) -> Tensor:
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return Tensor._wrap(rng.uniform(-bound, bound, size=shape).astype(dt))

    def zeros(n: int) -> Tensor:
        return Tensor._wrap(np.zeros(n, dtype=dt))

    shapes = arch.param_shapes()
    tensors: dict[str, Tensor] = {}
    for stage in ("c1", "c2", "c3"):
        o, c, kh, kw = shapes[f"{stage}.kernels"]
        tensors[f"{stage}.kernels"] = uniform((o, c, kh, kw), c * kh * kw, o * kh * kw)
        tensors[f"{stage}.bias"] = zeros(o)
    m, n = shapes["fc.weights"]
    tensors["fc.weights"] = uniform((m, n), n, m)
    tensors["fc.bias"] = zeros(m)
    return params_from_dict(tensors)


def forward(params: NetworkParams, patch: Tensor) -> tuple[Descriptor, NetworkCache]:
    """Descriptor = fc(flatten(tanh(c3(pool(tanh(c2(pool(tanh(c1(patch)))))))))."""
    if patch.rank != 3:
        raise ShapeMismatchError(f"patch must be rank 3 (maps, H, W), got {patch.shape}")
    a1, conv1 = conv2d_forward(patch, params.c1)
    t1, tanh1 = tanh_forward(a1)
    s1, pool1 = avgpool2_forward(t1)
    a2, conv2 = conv2d_forward(s1, params.c2)
    t2, tanh2 = tanh_forward(a2)
    s2, pool2 = avgpool2_forward(t2)
    a3, conv3 = conv2d_forward(s2, params.c3)
    t3, tanh3 = tanh_forward(a3)
    flat = t3.reshape((t3.size,))
    desc, fc = fc_forward(flat, params.fc)
    cache = NetworkCache(conv1, tanh1, pool1, conv2, tanh2, pool2, conv3, tanh3, t3.shape, fc)
    return Descriptor(desc), cache


def backward(cache: NetworkCache, grad_descriptor: Tensor) -> tuple[ParamGrads, Tensor]:
    """Chain the descriptor gradient back through all six stages."""
    if grad_descriptor.rank != 1 or grad_descriptor.shape[0] != cache.fc.params.out_units:
        raise CacheMismatchError(
            f"gradient length {grad_descriptor.shape} does not match the cached "
            f"descriptor length ({cache.fc.params.out_units},)"
        )
    g_flat, g_fcw, g_fcb = fc_backward(cache.fc, grad_descriptor)
    g_t3 = g_flat.reshape(cache.pre_flatten)
    g_a3 = tanh_backward(cache.tanh3, g_t3)
    g_s2, g_k3, g_b3 = conv2d_backward(cache.conv3, g_a3)
    g_t2 = avgpool2_backward(cache.pool2, g_s2)
    g_a2 = tanh_backward(cache.tanh2, g_t2)
    g_s1, g_k2, g_b2 = conv2d_backward(cache.conv2, g_a2)
    g_t1 = avgpool2_backward(cache.pool1, g_s1)
    g_a1 = tanh_backward(cache.tanh1, g_t1)
    g_in, g_k1, g_b1 = conv2d_backward(cache.conv1, g_a1)
    grads: ParamGrads = {
        "c1.kernels": g_k1,
        "c1.bias": g_b1,
        "c2.kernels": g_k2,
        "c2.bias": g_b2,
        "c3.kernels": g_k3,
        "c3.bias": g_b3,
        "fc.weights": g_fcw,
        "fc.bias": g_fcb,
    }
    return grads, g_in


def replace_param(params: NetworkParams, name: str, tensor: Tensor) -> NetworkParams:
    """Copy of `params` with one named tensor swapped (gradient-check helper)."""
    tensors = dict(params_to_dict(params))
    if name not in tensors:
        raise KeyError(name)
    tensors[name] = tensor
    return params_from_dict(tensors)


def apply_update(params: NetworkParams, grads: ParamGrads, learning_rate: float) -> NetworkParams:
    """params - learning_rate * grads, as fresh tensors."""
    lr = config.dtype()(learning_rate)
    tensors = {
        name: Tensor._wrap(t.array - lr * grads[name].array)
        for name, t in params_to_dict(params).items()
    }
    return params_from_dict(tensors)

"""Pairwise pull/push objective over descriptor distances.

Similar pairs (label 1) pay a hinge on the amount their Euclidean
distance exceeds the pull margin; dissimilar pairs (label 0) pay a
squared hinge on the amount they fall short of the push margin:

    pull(d) = pull_scale * max(0, d - pull_margin)
    push(d) = push_scale * max(0, push_margin - d)**2

A batch objective is the plain sum over pairs (an optional mean flag
exists for learning-rate stability and is off by default).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyBatchError, ShapeMismatchError
from .tensor import Tensor

# Below this distance the pair gradient is defined as zero: the unit
# vector (f1-f2)/d is singular at d=0 and a zero subgradient is safe.
GRAD_DISTANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class LossConfig:
    """Scales and margins of the two partial losses."""

    pull_scale: float = 1.0
    pull_margin: float = 0.5
    push_scale: float = 1.0
    push_margin: float = 2.0

    def __post_init__(self):
        if min(self.pull_scale, self.pull_margin, self.push_scale) < 0:
            raise ValueError("loss scales and margins must be nonnegative")
        if self.push_margin <= 0:
            raise ValueError("push margin must be positive")


@dataclass(frozen=True)
class LabeledPair:
    """A binary label plus either a precomputed distance or two descriptors."""

    y: int
    d: float | None = None
    f1: Tensor | None = None
    f2: Tensor | None = None

    def __post_init__(self):
        if self.y not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.y}")
        if self.d is None and (self.f1 is None or self.f2 is None):
            raise ValueError("pair needs either a distance or both descriptors")
        if self.d is not None and self.d < 0:
            raise ValueError(f"distance must be nonnegative, got {self.d}")

    def distance(self) -> float:
        if self.d is not None:
            return self.d
        return euclidean_distance(self.f1, self.f2)


def _as_vector(f) -> np.ndarray:
    arr = f.values.array if hasattr(f, "values") else f.array
    if arr.ndim != 1:
        raise ShapeMismatchError(f"descriptor must be rank 1, got shape {arr.shape}")
    return arr


def euclidean_distance(f1, f2) -> float:
    """L2 distance between two descriptors (Tensor or Descriptor)."""
    a, b = _as_vector(f1), _as_vector(f2)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"descriptor lengths differ: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def pull_loss(d: float, cfg: LossConfig) -> float:
    return cfg.pull_scale * max(0.0, d - cfg.pull_margin)


def push_loss(d: float, cfg: LossConfig) -> float:
    return cfg.push_scale * max(0.0, cfg.push_margin - d) ** 2


def pair_loss(pair: LabeledPair, cfg: LossConfig) -> float:
    d = pair.distance()
    return pull_loss(d, cfg) if pair.y == 1 else push_loss(d, cfg)


def pair_loss_grad(f1, f2, y: int, cfg: LossConfig) -> tuple[Tensor, Tensor]:
    """Gradients of the pair loss w.r.t. both descriptors (g2 == -g1).

    In the inactive hinge regions, and within GRAD_DISTANCE_FLOOR of d=0,
    the gradient is zero.
    """
    a, b = _as_vector(f1), _as_vector(f2)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"descriptor lengths differ: {a.shape} vs {b.shape}")
    diff = a - b
    d = float(np.linalg.norm(diff))
    if d < GRAD_DISTANCE_FLOOR:
        coeff = 0.0
    elif y == 1:
        coeff = cfg.pull_scale / d if d > cfg.pull_margin else 0.0
    else:
        coeff = -2.0 * cfg.push_scale * (cfg.push_margin - d) / d if d < cfg.push_margin else 0.0
    g1 = diff * diff.dtype.type(coeff)
    return Tensor._wrap(g1), Tensor._wrap(-g1)


def batch_loss(pairs: list[LabeledPair], cfg: LossConfig, mean: bool = False) -> tuple[float, list[float]]:
    """Total objective over a pair list plus the per-pair values."""
    if not pairs:
        raise EmptyBatchError("batch loss needs at least one pair")
    per_pair = [pair_loss(p, cfg) for p in pairs]
    total = math.fsum(per_pair)
    if mean:
        total /= len(pairs)
    return total, per_pair

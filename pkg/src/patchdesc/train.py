"""Gradient-descent training over patch pairs, plus checkpoint persistence.

Plain SGD with a constant learning rate: each step runs the network
forward on both patches of every pair in the batch, pushes the pair-loss
gradients back through the shared parameters, and applies the summed
update.  Training stops on a plateau of the epoch objective (the full
training-pair loss) or at max_epochs, and returns the parameters of the
best epoch seen.

Checkpoints are a small binary format (magic "PDN1"), storing every
parameter tensor by name in 32-bit little-endian floats; see
`save_checkpoint` for the exact layout.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import config
from .data import PatchPair, as_store_list, get_patch, preprocess
from .errors import ConfigError, CheckpointFormatError, DivergenceError, NonFiniteError
from .loss import LossConfig, pair_loss_grad, pull_loss, push_loss
from .model import (
    PARAM_NAMES,
    Architecture,
    NetworkParams,
    STANDARD,
    apply_update,
    backward,
    forward,
    init_params,
    params_from_dict,
    params_to_dict,
    validate_params,
)
from .tensor import Tensor

CHECKPOINT_MAGIC = b"PDN1"
CHECKPOINT_VERSION = 1

# Above this many pairs the per-epoch objective is measured on a fixed
#-seed subsample to keep epoch cost bounded.
OBJECTIVE_SUBSAMPLE = 50_000


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 32
    max_epochs: int = 40
    plateau_patience: int = 10
    plateau_rel_tol: float = 1e-3
    loss: LossConfig = field(default_factory=LossConfig)
    seed: int = 0
    precision: str = "f32"
    balanced_batches: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if self.plateau_patience < 1:
            raise ConfigError("plateau_patience must be >= 1")
        if not 0 < self.plateau_rel_tol < 1:
            raise ConfigError("plateau_rel_tol must be in (0, 1)")
        if self.precision not in config.PRECISIONS:
            raise ConfigError(f"precision must be one of {sorted(config.PRECISIONS)}")


@dataclass
class TrainHistory:
    """Objective trajectory; index 0 is the pre-training value."""

    objectives: list[float] = field(default_factory=list)
    heldout: list[float] = field(default_factory=list)
    best_epoch: int = 0


def sgd_step(
    params: NetworkParams, batch: list[PatchPair], stores, cfg: TrainConfig
) -> tuple[NetworkParams, float]:
    """One SGD update over a batch; returns the pre-update batch objective.

    Gradients accumulate in fixed pair-index order so a batch result is
    reproducible regardless of available parallelism.
    """
    if not batch:
        raise DivergenceError("sgd_step needs a nonempty batch")
    store_list = as_store_list(stores)
    acc = {name: np.zeros(t.shape, dtype=t.array.dtype) for name, t in params_to_dict(params).items()}
    objective = 0.0
    try:
        for pair in batch:
            x1 = preprocess(get_patch(store_list, pair.store1, pair.idx1))
            x2 = preprocess(get_patch(store_list, pair.store2, pair.idx2))
            f1, cache1 = forward(params, x1)
            f2, cache2 = forward(params, x2)
            d = float(np.linalg.norm(f1.values.array - f2.values.array))
            objective += pull_loss(d, cfg.loss) if pair.y == 1 else push_loss(d, cfg.loss)
            g1, g2 = pair_loss_grad(f1, f2, pair.y, cfg.loss)
            if not g1.array.any():
                continue  # inactive hinge: zero gradient for both patches
            for cache, g in ((cache1, g1), (cache2, g2)):
                grads, _ = backward(cache, g)
                for name, tensor in grads.items():
                    acc[name] += tensor.array
    except NonFiniteError as exc:
        raise DivergenceError(f"non-finite values during batch forward/backward: {exc}") from exc
    if not np.isfinite(objective):
        raise DivergenceError(f"batch objective is not finite: {objective}")
    for name, arr in acc.items():
        if not np.isfinite(arr).all():
            raise DivergenceError(f"gradient for {name} contains non-finite values")
    grads = {name: Tensor._wrap(arr) for name, arr in acc.items()}
    return apply_update(params, grads, cfg.learning_rate), objective


def should_stop(history: TrainHistory, cfg: TrainConfig) -> bool:
    """Plateau rule: no relative improvement > plateau_rel_tol over the best
    for plateau_patience consecutive epochs, or max_epochs trained."""
    objectives = history.objectives
    if not objectives:
        raise ConfigError("should_stop needs at least one recorded epoch")
    if len(objectives) - 1 >= cfg.max_epochs:
        return True
    best = objectives[0]
    stall = 0
    for value in objectives[1:]:
        if best - value > cfg.plateau_rel_tol * abs(best):
            stall = 0
        else:
            stall += 1
        best = min(best, value)
    return stall >= cfg.plateau_patience


def _epoch_batches(
    pairs: list[PatchPair], cfg: TrainConfig, rng: np.random.Generator
) -> list[list[PatchPair]]:
    """Shuffled minibatches; balanced ones interleave the label streams so each
    batch is half similar / half dissimilar while both streams last."""
    if cfg.balanced_batches:
        pos = [p for p in pairs if p.y == 1]
        neg = [p for p in pairs if p.y == 0]
        rng.shuffle(pos)
        rng.shuffle(neg)
        ordered = []
        while pos and neg:
            ordered.append(pos.pop())
            ordered.append(neg.pop())
        ordered += pos[::-1] + neg[::-1]
    else:
        ordered = list(pairs)
        rng.shuffle(ordered)
    return [ordered[i : i + cfg.batch_size] for i in range(0, len(ordered), cfg.batch_size)]


def _pair_objective(params: NetworkParams, pairs: list[PatchPair], stores, cfg: TrainConfig) -> float:
    """Sum of pair losses, computing each distinct patch's descriptor once."""
    from .evaluate import pair_distances

    distances, labels = pair_distances(params, stores, pairs)
    total = 0.0
    for d, y in zip(distances, labels):
        total += pull_loss(float(d), cfg.loss) if y == 1 else push_loss(float(d), cfg.loss)
    return total


def train(
    stores,
    pairs: list[PatchPair],
    cfg: TrainConfig,
    arch: Architecture = STANDARD,
    heldout_pairs: list[PatchPair] | None = None,
    log=None,
) -> tuple[NetworkParams, TrainHistory]:
    """Full training loop; returns the best-objective parameters and history."""
    if not pairs:
        raise ConfigError("train needs a nonempty pair list")
    config.set_precision(cfg.precision)
    store_list = as_store_list(stores)
    rng = np.random.default_rng([cfg.seed, 1])

    eval_pairs = pairs
    if len(pairs) > OBJECTIVE_SUBSAMPLE:
        sub_rng = np.random.default_rng([cfg.seed, 2])
        idx = sub_rng.choice(len(pairs), size=OBJECTIVE_SUBSAMPLE, replace=False)
        eval_pairs = [pairs[i] for i in sorted(idx)]

    params = init_params(cfg.seed, arch)
    history = TrainHistory()
    history.objectives.append(_pair_objective(params, eval_pairs, store_list, cfg))
    if heldout_pairs:
        history.heldout.append(_pair_objective(params, heldout_pairs, store_list, cfg))
    best = history.objectives[0]
    best_params = params
    if log:
        log(f"epoch 0: objective {best:.6g}")

    for epoch in range(1, cfg.max_epochs + 1):
        for batch in _epoch_batches(pairs, cfg, rng):
            params, _ = sgd_step(params, batch, store_list, cfg)
        objective = _pair_objective(params, eval_pairs, store_list, cfg)
        history.objectives.append(objective)
        if heldout_pairs:
            history.heldout.append(_pair_objective(params, heldout_pairs, store_list, cfg))
        if objective < best:
            best = objective
            best_params = params
            history.best_epoch = epoch
        if log:
            log(f"epoch {epoch}: objective {objective:.6g}")
        if should_stop(history, cfg):
            break
    return best_params, history


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(params: NetworkParams, path) -> None:
    """Layout: magic "PDN1", u32 version, u32 tensor count, then per tensor:
    u16 name length, UTF-8 name, u8 rank, u32 extents, f32 LE row-major data."""
    tensors = params_to_dict(params)
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<I", CHECKPOINT_VERSION)
    blob += struct.pack("<I", len(tensors))
    for name in PARAM_NAMES:
        tensor = tensors[name]
        encoded = name.encode("utf-8")
        blob += struct.pack("<H", len(encoded))
        blob += encoded
        blob += struct.pack("<B", tensor.rank)
        for extent in tensor.shape:
            blob += struct.pack("<I", extent)
        blob += np.ascontiguousarray(tensor.array, dtype="<f4").tobytes()
    Path(path).write_bytes(bytes(blob))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        if self.offset + n > len(self.blob):
            raise CheckpointFormatError(
                f"truncated checkpoint: needed {n} bytes for {what} at offset {self.offset}"
            )
        piece = self.blob[self.offset : self.offset + n]
        self.offset += n
        return piece


def load_checkpoint(path, expect_arch: Architecture | None = None) -> NetworkParams:
    """Read a checkpoint into the active precision.

    With `expect_arch`, tensor shapes must match that architecture's plan
    (a verification-net checkpoint is rejected by the standard net).
    """
    reader = _Reader(Path(path).read_bytes())
    magic = reader.take(4, "magic")
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(f"bad magic {magic!r} at offset 0")
    (version,) = struct.unpack("<I", reader.take(4, "version"))
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"unsupported version {version} at offset 4")
    (count,) = struct.unpack("<I", reader.take(4, "tensor count"))
    if count != len(PARAM_NAMES):
        raise CheckpointFormatError(f"expected {len(PARAM_NAMES)} tensors, got {count} at offset 8")
    tensors: dict[str, Tensor] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", reader.take(2, "name length"))
        name = reader.take(name_len, "name").decode("utf-8")
        if name not in PARAM_NAMES:
            raise CheckpointFormatError(f"unknown tensor name {name!r}")
        if name in tensors:
            raise CheckpointFormatError(f"duplicate tensor name {name!r}")
        (rank,) = struct.unpack("<B", reader.take(1, "rank"))
        shape = tuple(
            struct.unpack("<I", reader.take(4, f"{name} extent"))[0] for _ in range(rank)
        )
        n_values = int(np.prod(shape)) if shape else 0
        if not shape or n_values == 0:
            raise CheckpointFormatError(f"tensor {name!r} has invalid shape {shape}")
        raw = reader.take(4 * n_values, f"{name} values")
        values = np.frombuffer(raw, dtype="<f4").reshape(shape)
        try:
            tensors[name] = Tensor(values.astype(config.dtype()))
        except NonFiniteError:
            raise CheckpointFormatError(f"tensor {name!r} contains non-finite values") from None
    if reader.offset != len(reader.blob):
        raise CheckpointFormatError(
            f"{len(reader.blob) - reader.offset} unexpected trailing bytes at offset {reader.offset}"
        )
    params = params_from_dict(tensors)
    if expect_arch is not None:
        validate_params(params, expect_arch)
    return params

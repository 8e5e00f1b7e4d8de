"""Shared test utilities: finite differences and independent metric oracles.

Everything here is deliberately brute force so it stays independent of the
library code paths it is used to check.
"""

from __future__ import annotations

import numpy as np

from patchdesc.data import sample_pairs, synth_scene, SynthConfig
from patchdesc.model import forward, params_to_dict, replace_param
from patchdesc.tensor import Tensor


def fd_gradient(f, arr: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of an ndarray."""
    grad = np.zeros(arr.shape, dtype=np.float64)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        up = arr.copy()
        up[idx] += eps
        down = arr.copy()
        down[idx] -= eps
        grad[idx] = (f(up) - f(down)) / (2 * eps)
    return grad


def rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """max |a-n| scaled by the larger gradient magnitude (floored)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(a).max(), np.abs(n).max(), floor)
    return float(np.abs(a - n).max() / scale)


def fd_param_gradients(objective, params, eps: float = 1e-5) -> dict[str, np.ndarray]:
    """Finite-difference gradient of objective(params) w.r.t. every tensor."""
    grads: dict[str, np.ndarray] = {}
    for name, tensor in params_to_dict(params).items():
        base = tensor.array

        def f(arr, name=name):
            return objective(replace_param(params, name, Tensor(arr)))

        grads[name] = fd_gradient(f, np.asarray(base, dtype=np.float64), eps)
    return grads


def brute_force_fpr_at_tpr(distances, labels, target_tpr: float) -> float:
    """Independent oracle: try every distinct distance as the threshold,
    take the smallest whose recall reaches the target, count negatives at
    or below it."""
    distances = np.asarray(distances, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    assert n_pos > 0 and n_neg > 0
    best_t = None
    for t in sorted(set(distances.tolist())):
        tpr = int((distances[labels == 1] <= t).sum()) / n_pos
        if tpr >= target_tpr:
            best_t = t
            break
    assert best_t is not None  # target <= 1 so the max distance always works
    fp = int((distances[labels == 0] <= best_t).sum())
    return 100.0 * fp / n_neg


def descriptor_of(params, patch) -> np.ndarray:
    """Manual preprocess+forward composition used for spot checks."""
    from patchdesc.data import preprocess

    desc, _ = forward(params, preprocess(patch))
    return desc.values.array.copy()


def split_train_heldout(store, n_train=(300, 300), n_held=(100, 100), seed=11):
    """One duplicate-free sample split into train/held-out pair lists."""
    n_sim = n_train[0] + n_held[0]
    n_dis = n_train[1] + n_held[1]
    pairs = sample_pairs(store, n_sim, n_dis, seed=seed)
    sim = [p for p in pairs if p.y == 1]
    dis = [p for p in pairs if p.y == 0]
    train_pairs = sim[: n_train[0]] + dis[: n_train[1]]
    heldout = sim[n_train[0] :] + dis[n_train[1] :]
    return train_pairs, heldout


def acceptance_scene(seed: int = 7):
    """The desk-scale synthetic scene used by the end-to-end criteria."""
    return synth_scene(SynthConfig(n_points=40, patches_per_point=8, noise_std=4.0, jitter_px=2, seed=seed))

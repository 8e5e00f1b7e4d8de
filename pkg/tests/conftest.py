from __future__ import annotations

import time
from dataclasses import dataclass

import pytest

from patchdesc import config
from patchdesc.model import NetworkParams, init_params
from patchdesc.train import TrainConfig, TrainHistory, train

from helpers import acceptance_scene, split_train_heldout


@pytest.fixture(autouse=True)
def _restore_precision():
    """train() switches the global precision; keep tests isolated."""
    previous = config.active_precision()
    yield
    config.set_precision(previous)


@pytest.fixture
def f64():
    with config.precision("f64"):
        yield


@dataclass
class DeskRun:
    """One shared desk-scale training run (it is the expensive fixture)."""

    store: object
    train_pairs: list
    heldout_pairs: list
    untrained: NetworkParams
    params: NetworkParams
    history: TrainHistory
    cfg: TrainConfig
    train_seconds: float


@pytest.fixture(scope="session")
def desk_run() -> DeskRun:
    with config.precision("f32"):
        store = acceptance_scene(seed=7)
        train_pairs, heldout = split_train_heldout(store, seed=11)
        cfg = TrainConfig()  # the shipped defaults are what the run validates
        untrained = init_params(cfg.seed)
        start = time.perf_counter()
        params, history = train(store, train_pairs, cfg)
        elapsed = time.perf_counter() - start
    return DeskRun(store, train_pairs, heldout, untrained, params, history, cfg, elapsed)

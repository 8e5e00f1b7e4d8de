from dataclasses import dataclass

import numpy as np
import pytest

from patchdesc import config
from patchdesc.data import SynthConfig, sample_pairs, synth_scene, PatchPair
from patchdesc.errors import CheckpointFormatError, ConfigError, ShapeMismatchError
from patchdesc.loss import LossConfig, pair_loss, LabeledPair
from patchdesc.model import (
    PARAM_NAMES,
    STANDARD,
    forward,
    init_params,
    params_to_dict,
    verification_arch,
)
from patchdesc.train import (
    TrainConfig,
    TrainHistory,
    load_checkpoint,
    save_checkpoint,
    sgd_step,
    should_stop,
    train,
)
from patchdesc.data import preprocess


@dataclass
class FakeStore:
    """16x16 'patches' so the verification net can drive sgd_step."""

    patches: np.ndarray
    point_ids: np.ndarray


def fake_store(rng, n=4):
    return FakeStore(
        rng.integers(0, 256, size=(n, 16, 16)).astype(np.uint8),
        np.arange(n, dtype=np.int64),
    )


def pair_objective(params, store, pair, cfg):
    f1, _ = forward(params, preprocess(store.patches[pair.idx1]))
    f2, _ = forward(params, preprocess(store.patches[pair.idx2]))
    return pair_loss(LabeledPair(y=pair.y, f1=f1.values, f2=f2.values), cfg.loss)


# ---------------------------------------------------------------------------
# sgd_step
# ---------------------------------------------------------------------------


def test_sgd_step_zero_learning_rate_keeps_params(f64):
    rng = np.random.default_rng(0)
    arch = verification_arch()
    params = init_params(1, arch)
    store = fake_store(rng)
    batch = [PatchPair(0, 1, y=1), PatchPair(2, 3, y=0)]
    # learning_rate must be positive per config; emulate lr->0 by scaling
    cfg = TrainConfig(learning_rate=1e-300, precision="f64")
    updated, objective = sgd_step(params, batch, store, cfg)
    assert objective >= 0.0
    for name, t in params_to_dict(params).items():
        assert np.array_equal(t.array, params_to_dict(updated)[name].array)


def test_sgd_step_inactive_batch_keeps_params(f64):
    rng = np.random.default_rng(1)
    arch = verification_arch()
    params = init_params(2, arch)
    store = fake_store(rng)
    # Margins chosen so every pair is strictly inside its no-loss region.
    loose = LossConfig(pull_margin=1e6, push_margin=1e-9)
    cfg = TrainConfig(loss=loose, precision="f64")
    updated, objective = sgd_step(params, [PatchPair(0, 1, y=1), PatchPair(2, 3, y=0)], store, cfg)
    assert objective == 0.0
    for name, t in params_to_dict(params).items():
        assert np.array_equal(t.array, params_to_dict(updated)[name].array)


def test_sgd_step_descends_on_single_pair(f64):
    rng = np.random.default_rng(3)
    arch = verification_arch()
    params = init_params(4, arch)
    store = fake_store(rng)
    pair = PatchPair(0, 1, y=0)
    # Make the pair active: push margin above its current distance.
    f1, _ = forward(params, preprocess(store.patches[0]))
    f2, _ = forward(params, preprocess(store.patches[1]))
    d = float(np.linalg.norm(f1.values.array - f2.values.array))
    loss_cfg = LossConfig(push_margin=2 * d + 1.0)
    decreased = []
    for lr in (1e-3, 1e-2, 1e-1):
        cfg = TrainConfig(learning_rate=lr, loss=loss_cfg, precision="f64")
        before = pair_objective(params, store, pair, cfg)
        updated, reported = sgd_step(params, [pair], store, cfg)
        assert reported == pytest.approx(before, rel=1e-12)
        after = pair_objective(updated, store, pair, cfg)
        decreased.append(after < before)
    assert decreased[0], "smallest step size must descend"
    assert any(decreased)


# ---------------------------------------------------------------------------
# should_stop
# ---------------------------------------------------------------------------


def make_history(values):
    h = TrainHistory()
    h.objectives = list(values)
    return h


def test_should_stop_still_improving():
    cfg = TrainConfig(plateau_patience=5, plateau_rel_tol=1e-3, max_epochs=100)
    h = make_history([100.0, 80.0, 64.0])  # strictly and significantly decreasing
    assert not should_stop(h, cfg)


def test_should_stop_constant_history():
    cfg = TrainConfig(plateau_patience=4, plateau_rel_tol=1e-3, max_epochs=100)
    assert should_stop(make_history([5.0] * 5), cfg)
    assert not should_stop(make_history([5.0] * 4), cfg)


def test_should_stop_sub_tolerance_improvements_count_as_plateau():
    cfg = TrainConfig(plateau_patience=6, plateau_rel_tol=1e-3, max_epochs=100)
    values = [100.0]
    for _ in range(6):
        values.append(values[-1] * (1 - cfg.plateau_rel_tol / 2))
    assert should_stop(make_history(values), cfg)
    assert not should_stop(make_history(values[:-1]), cfg)


def test_should_stop_max_epochs():
    cfg = TrainConfig(plateau_patience=50, max_epochs=3)
    assert should_stop(make_history([4.0, 3.0, 2.0, 1.0]), cfg)  # 3 trained epochs
    assert not should_stop(make_history([4.0, 3.0, 2.0]), cfg)


def test_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(max_epochs=0)
    with pytest.raises(ConfigError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ConfigError):
        TrainConfig(plateau_rel_tol=1.0)
    with pytest.raises(ConfigError):
        TrainConfig(precision="f16")


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def tiny_scene_setup():
    store = synth_scene(SynthConfig(6, 4, 4.0, 2, seed=2))
    pairs = sample_pairs(store, 12, 12, seed=3)
    cfg = TrainConfig(batch_size=8, max_epochs=2, seed=5)
    return store, pairs, cfg


def test_train_is_deterministic():
    store, pairs, cfg = tiny_scene_setup()
    params_a, hist_a = train(store, pairs, cfg)
    params_b, hist_b = train(store, pairs, cfg)
    assert hist_a.objectives == hist_b.objectives
    for name in PARAM_NAMES:
        assert (
            params_to_dict(params_a)[name].array.tobytes()
            == params_to_dict(params_b)[name].array.tobytes()
        )


def test_train_records_heldout_and_best_epoch():
    store, pairs, cfg = tiny_scene_setup()
    heldout = sample_pairs(store, 4, 4, seed=77)
    params, history = train(store, pairs, cfg, heldout_pairs=heldout)
    assert len(history.objectives) == len(history.heldout) == cfg.max_epochs + 1
    assert history.best_epoch <= cfg.max_epochs
    assert min(history.objectives) == history.objectives[history.best_epoch]


def test_train_returns_best_epoch_params():
    # With an aggressive learning rate the objective can get worse; the
    # returned parameters must still be the best recorded ones.
    store, pairs, _ = tiny_scene_setup()
    cfg = TrainConfig(learning_rate=0.5, batch_size=4, max_epochs=3, seed=1)
    params, history = train(store, pairs, cfg)
    from patchdesc.evaluate import pair_distances
    from patchdesc.loss import pull_loss, push_loss

    d, l = pair_distances(params, store, pairs)
    total = sum(
        pull_loss(float(x), cfg.loss) if y == 1 else push_loss(float(x), cfg.loss)
        for x, y in zip(d, l)
    )
    assert total == pytest.approx(min(history.objectives), rel=1e-6)


def test_train_rejects_empty_pairs():
    store, _, cfg = tiny_scene_setup()
    with pytest.raises(ConfigError):
        train(store, [], cfg)


def test_desk_scale_objective_halves(desk_run):
    objectives = desk_run.history.objectives
    assert min(objectives) <= 0.5 * objectives[0]


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def test_checkpoint_round_trip_bit_exact(tmp_path):
    params = init_params(11)
    path = tmp_path / "net.ckpt"
    save_checkpoint(params, path)
    loaded = load_checkpoint(path)
    for name in PARAM_NAMES:
        assert (
            params_to_dict(loaded)[name].array.tobytes()
            == params_to_dict(params)[name].array.tobytes()
        )


def test_checkpoint_same_params_same_bytes(tmp_path):
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(init_params(21), a)
    save_checkpoint(init_params(21), b)
    assert a.read_bytes() == b.read_bytes()
    save_checkpoint(init_params(22), b)
    assert a.read_bytes() != b.read_bytes()


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "net.ckpt"
    save_checkpoint(init_params(0, verification_arch()), path)
    blob = bytearray(path.read_bytes())
    blob[:4] = b"XXXX"
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointFormatError, match="magic"):
        load_checkpoint(path)


def test_checkpoint_truncation_names_offset(tmp_path):
    path = tmp_path / "net.ckpt"
    save_checkpoint(init_params(0, verification_arch()), path)
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) // 2])
    with pytest.raises(CheckpointFormatError, match="offset"):
        load_checkpoint(path)


def test_checkpoint_trailing_garbage(tmp_path):
    path = tmp_path / "net.ckpt"
    save_checkpoint(init_params(0, verification_arch()), path)
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(CheckpointFormatError, match="trailing"):
        load_checkpoint(path)


def test_checkpoint_cross_architecture_rejected(tmp_path):
    path = tmp_path / "reduced.ckpt"
    save_checkpoint(init_params(0, verification_arch()), path)
    loaded = load_checkpoint(path)  # structurally fine on its own
    assert loaded.fc.out_units == verification_arch().fc_units
    with pytest.raises(ShapeMismatchError):
        load_checkpoint(path, expect_arch=STANDARD)

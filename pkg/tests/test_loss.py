import math

import numpy as np
import pytest

from patchdesc.errors import EmptyBatchError, ShapeMismatchError
from patchdesc.loss import (
    LabeledPair,
    LossConfig,
    batch_loss,
    euclidean_distance,
    pair_loss,
    pair_loss_grad,
    pull_loss,
    push_loss,
)
from patchdesc.tensor import Tensor

from helpers import fd_gradient, rel_error


def test_distance_examples():
    f = Tensor([1.0, 2.0, 3.0])
    assert euclidean_distance(f, f) == 0.0
    assert euclidean_distance(Tensor([3.0, 4.0, 0.0]), Tensor([0.0, 0.0, 0.0])) == 5.0
    a = Tensor([1.0, -2.0, 0.5])
    b = Tensor([0.0, 4.0, 2.5])
    offset = Tensor([7.0, 7.0, 7.0])
    shifted = euclidean_distance(
        Tensor(a.array + offset.array), Tensor(b.array + offset.array)
    )
    assert math.isclose(shifted, euclidean_distance(a, b), rel_tol=1e-12)
    with pytest.raises(ShapeMismatchError):
        euclidean_distance(Tensor([1.0]), Tensor([1.0, 2.0]))


def test_pull_loss_closed_forms(f64):
    cfg = LossConfig(pull_scale=1.0, pull_margin=0.5)
    assert pull_loss(0.5, cfg) == 0.0
    assert pull_loss(0.2, cfg) == 0.0
    # 0.8 - 0.5 is one ulp off the decimal literal 0.3; equality holds
    # against the formula itself, closeness against the literal.
    assert pull_loss(0.8, cfg) == 1.0 * max(0.0, 0.8 - 0.5)
    assert math.isclose(pull_loss(0.8, cfg), 0.3, rel_tol=1e-15)
    assert pull_loss(1.0, LossConfig(pull_scale=2.0, pull_margin=0.0)) == 2.0


def test_push_loss_closed_forms(f64):
    cfg = LossConfig(push_scale=1.0, push_margin=1.0)
    assert push_loss(1.0, cfg) == 0.0
    assert push_loss(5.0, cfg) == 0.0
    assert push_loss(0.0, cfg) == 1.0
    assert push_loss(0.4, cfg) == 0.36


def test_pair_loss_selects_by_label(f64):
    cfg = LossConfig(pull_scale=1.0, pull_margin=0.5, push_scale=3.0, push_margin=2.0)
    assert pair_loss(LabeledPair(y=1, d=0.5), cfg) == 0.0
    assert pair_loss(LabeledPair(y=0, d=2.0), cfg) == 0.0
    assert pair_loss(LabeledPair(y=0, d=1.0), cfg) == 3.0


def test_labeled_pair_validation():
    with pytest.raises(ValueError):
        LabeledPair(y=2, d=1.0)
    with pytest.raises(ValueError):
        LabeledPair(y=1, d=-0.5)
    with pytest.raises(ValueError):
        LabeledPair(y=1)
    pair = LabeledPair(y=1, f1=Tensor([0.0, 0.0]), f2=Tensor([3.0, 4.0]))
    assert pair.distance() == 5.0


def test_grad_inactive_regions_are_zero():
    cfg = LossConfig()
    f1, f2 = Tensor([0.1, 0.0]), Tensor([0.0, 0.0])  # d=0.1 <= pull margin
    g1, g2 = pair_loss_grad(f1, f2, 1, cfg)
    assert not g1.array.any() and not g2.array.any()
    f3 = Tensor([5.0, 0.0])  # d=5 >= push margin
    g1, g2 = pair_loss_grad(f3, f2, 0, cfg)
    assert not g1.array.any() and not g2.array.any()


def test_grad_zero_at_coincident_descriptors():
    cfg = LossConfig()
    f = Tensor([1.0, 2.0])
    g1, g2 = pair_loss_grad(f, f, 0, cfg)  # push active region but d=0
    assert not g1.array.any() and not g2.array.any()


def test_grad_antisymmetry():
    rng = np.random.default_rng(0)
    cfg = LossConfig()
    for y in (0, 1):
        for _ in range(5):
            f1 = Tensor(rng.standard_normal(8))
            f2 = Tensor(rng.standard_normal(8))
            g1, g2 = pair_loss_grad(f1, f2, y, cfg)
            assert np.array_equal(g1.array, -g2.array)


def test_grad_matches_finite_differences_on_active_pairs(f64):
    rng = np.random.default_rng(1)
    for seed in range(5):
        local = np.random.default_rng(100 + seed)
        f1 = local.standard_normal(6)
        f2 = local.standard_normal(6)
        d = float(np.linalg.norm(f1 - f2))
        # Margins chosen so both branches are active and d stays well away
        # from the hinge points under the finite-difference step.
        cfg = LossConfig(pull_scale=1.3, pull_margin=d / 2, push_scale=0.8, push_margin=2 * d)
        for y in (0, 1):
            g1, g2 = pair_loss_grad(Tensor(f1), Tensor(f2), y, cfg)

            def from_f1(arr):
                return pair_loss(LabeledPair(y=y, f1=Tensor(arr), f2=Tensor(f2)), cfg)

            def from_f2(arr):
                return pair_loss(LabeledPair(y=y, f1=Tensor(f1), f2=Tensor(arr)), cfg)

            assert rel_error(g1.array, fd_gradient(from_f1, f1)) < 1e-7
            assert rel_error(g2.array, fd_gradient(from_f2, f2)) < 1e-7


def test_partial_losses_monotone_and_nonnegative():
    cfg = LossConfig(pull_scale=1.7, pull_margin=0.4, push_scale=2.2, push_margin=1.9)
    grid = np.sort(np.random.default_rng(2).uniform(0, 4, size=200))
    pulls = [pull_loss(float(d), cfg) for d in grid]
    pushes = [push_loss(float(d), cfg) for d in grid]
    assert all(v >= 0 for v in pulls + pushes)
    assert all(b >= a for a, b in zip(pulls, pulls[1:]))
    assert all(b <= a for a, b in zip(pushes, pushes[1:]))


def test_batch_loss_zero_iff_margins_satisfied():
    cfg = LossConfig(pull_margin=0.5, push_margin=2.0)
    good = [LabeledPair(y=1, d=0.5), LabeledPair(y=1, d=0.1), LabeledPair(y=0, d=2.0), LabeledPair(y=0, d=3.7)]
    total, per_pair = batch_loss(good, cfg)
    assert total == 0.0 and per_pair == [0.0] * 4
    bad = good + [LabeledPair(y=0, d=1.9)]
    total, _ = batch_loss(bad, cfg)
    assert total > 0.0


def test_batch_loss_matches_per_pair_sum_exactly():
    rng = np.random.default_rng(3)
    cfg = LossConfig()
    pairs = [
        LabeledPair(y=int(rng.integers(2)), d=float(rng.uniform(0, 3))) for _ in range(57)
    ]
    total, per_pair = batch_loss(pairs, cfg)
    assert total == math.fsum(pair_loss(p, cfg) for p in pairs)
    assert per_pair == [pair_loss(p, cfg) for p in pairs]


def test_batch_loss_doubling_and_mean_flag():
    cfg = LossConfig()
    pairs = [LabeledPair(y=0, d=0.5), LabeledPair(y=1, d=1.5), LabeledPair(y=0, d=1.0)]
    total, _ = batch_loss(pairs, cfg)
    doubled, _ = batch_loss(pairs + pairs, cfg)
    assert doubled == 2.0 * total
    mean_total, _ = batch_loss(pairs, cfg, mean=True)
    assert mean_total == total / 3


def test_batch_loss_empty_rejected():
    with pytest.raises(EmptyBatchError):
        batch_loss([], LossConfig())


def test_scaling_config_scales_loss_exactly():
    base = LossConfig(pull_scale=1.25, pull_margin=0.5, push_scale=0.75, push_margin=2.0)
    rng = np.random.default_rng(4)
    pairs = [LabeledPair(y=int(rng.integers(2)), d=float(rng.uniform(0, 3))) for _ in range(40)]
    total, _ = batch_loss(pairs, base)
    for k in (2.0, 0.5):  # powers of two keep the scaling bit-exact
        scaled = LossConfig(
            pull_scale=k * base.pull_scale,
            pull_margin=base.pull_margin,
            push_scale=k * base.push_scale,
            push_margin=base.push_margin,
        )
        scaled_total, _ = batch_loss(pairs, scaled)
        assert scaled_total == k * total


def test_config_validation():
    with pytest.raises(ValueError):
        LossConfig(pull_scale=-1.0)
    with pytest.raises(ValueError):
        LossConfig(push_margin=0.0)

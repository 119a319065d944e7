import math

import numpy as np
import pytest

from oracles import finite_diff_grads, max_rel_error
from plkg.channel import ChannelParams
from plkg.numerics import RngStream
from plkg.predictor import (
    AdversaryPredictor,
    PredictorConfig,
    PredictorDataset,
    Rollout,
    build_dataset,
    evaluate_predictor,
    generate_rollout,
    load_dataset_csv,
    load_predictor,
    save_dataset_csv,
    save_predictor,
    train_predictor,
)


def small_cfg(**kw):
    defaults = dict(L=4, hidden=8, pretrain_steps=300, batch_size=32,
                    rollout_slots=600)
    defaults.update(kw)
    return PredictorConfig(**defaults)


def quick_rollout(kappa=0.9, slots=600, n=2, rho=0.95, seed=1, Pa=10.0):
    root = RngStream(seed)
    params = ChannelParams(n=n, rho=rho, kappa=kappa)
    return generate_rollout(params, Pa, slots, root.child(1), root.child(2))


# -- dataset -----------------------------------------------------------------


def test_window_count():
    ro = quick_rollout(slots=100)
    cfg = small_cfg(L=8)
    train, val = build_dataset(ro, cfg, RngStream(2, 1))
    assert len(train) + len(val) == 93


def test_rollout_shorter_than_window_rejected():
    ro = quick_rollout(slots=5)
    with pytest.raises(ValueError):
        build_dataset(ro, small_cfg(L=8), RngStream(2, 2))


def test_split_deterministic():
    ro = quick_rollout()
    cfg = small_cfg()
    t1, v1 = build_dataset(ro, cfg, RngStream(3, 3))
    t2, v2 = build_dataset(ro, cfg, RngStream(3, 3))
    assert np.array_equal(t1.inputs, t2.inputs)
    assert np.array_equal(v1.xi, v2.xi)


def test_windows_align_with_final_slot_targets():
    ro = quick_rollout(slots=50)
    cfg = small_cfg(L=4, val_fraction=0.5)
    train, val = build_dataset(ro, cfg, RngStream(4, 4))
    # reassemble and compare one window against the rollout arrays
    k = 10
    merged_inputs = np.concatenate([train.inputs, val.inputs])
    merged_targets = np.concatenate([train.targets, val.targets])
    found = False
    for i in range(merged_inputs.shape[0]):
        if np.array_equal(merged_inputs[i], ro.fred[k:k + 4]):
            assert np.array_equal(merged_targets[i], ro.hae[k + 3])
            found = True
    assert found


def test_kappa_one_inputs_follow_targets():
    # with perfect correlation Fred's alice-side channel equals Eve's
    ro = quick_rollout(kappa=1.0, slots=200)
    assert np.allclose(ro.fred[:, 0], ro.hae[:, 0])
    assert np.allclose(ro.fred[:, 1], ro.hae[:, 1])


def test_episodic_rollout_and_segmented_windows():
    root = RngStream(44)
    params = ChannelParams(n=2, rho=0.9999, kappa=0.9)
    ro = generate_rollout(params, 1.0, 300, root.child(1), root.child(2),
                          reset_every=50)
    # fresh channels at each reset: attacker flag varies across segments
    seg_flags = {tuple(ro.xi[k * 50:(k + 1) * 50]) for k in range(6)}
    modes = [f[0] for f in seg_flags]
    assert len(set(modes)) > 1 or len(seg_flags) > 1
    cfg = small_cfg(L=8)
    train, val = build_dataset(ro, cfg, RngStream(44, 3), segment_len=50)
    # 6 segments x (50 - 8 + 1) windows
    assert len(train) + len(val) == 6 * 43
    # no window mixes data across a reset boundary
    merged = np.concatenate([train.inputs, val.inputs])
    for row in merged[:50]:
        matches = [
            k for k in range(300 - 8 + 1)
            if np.array_equal(ro.fred[k:k + 8], row)
        ]
        assert matches
        k = matches[0]
        assert k // 50 == (k + 7) // 50


def test_dataset_csv_round_trip(tmp_path):
    ro = quick_rollout(slots=40)
    path = tmp_path / "rollout.csv"
    save_dataset_csv(path, ro)
    back = load_dataset_csv(path)
    assert np.array_equal(back.fred, ro.fred)
    assert np.array_equal(back.hae, ro.hae)
    assert np.array_equal(back.xi, ro.xi)


# -- network -----------------------------------------------------------------


def test_zero_parameters_give_neutral_outputs():
    cfg = small_cfg()
    pred = AdversaryPredictor(cfg, RngStream(5, 5))
    for p in pred.cell.params.values():
        p[:] = 0.0
    for p in pred.head.params.values():
        p[:] = 0.0
    hae, xi = pred.predict(np.ones((cfg.L, 4)))
    assert hae == 0j
    assert xi == pytest.approx(0.5)


def test_predict_deterministic_and_shape_checked():
    cfg = small_cfg()
    pred = AdversaryPredictor(cfg, RngStream(6, 6))
    window = RngStream(6, 7).normal((cfg.L, 4))
    a = pred.predict(window)
    b = pred.predict(window)
    assert a == b
    assert 0.0 < a[1] < 1.0
    with pytest.raises(ValueError):
        pred.predict(np.ones((cfg.L + 1, 4)))


def test_constant_half_predictor_bce_is_log2():
    cfg = small_cfg()
    pred = AdversaryPredictor(cfg, RngStream(7, 7))
    for p in pred.cell.params.values():
        p[:] = 0.0
    for p in pred.head.params.values():
        p[:] = 0.0
    data = PredictorDataset(
        inputs=RngStream(7, 8).normal((50, cfg.L, 4)),
        targets=np.zeros((50, 2)),
        xi=(RngStream(7, 9).uniform(0, 1, 50) > 0.5).astype(float),
    )
    metrics = evaluate_predictor(pred, data)
    assert metrics.val_bce == pytest.approx(math.log(2.0), abs=1e-12)


def test_joint_loss_gradients():
    cfg = small_cfg(L=3, hidden=4)
    pred = AdversaryPredictor(cfg, RngStream(8, 8), input_scale=0.7)
    rng = RngStream(8, 9)
    windows = rng.normal((5, 3, 4))
    targets = rng.normal((5, 2))
    xi = (rng.uniform(0, 1, 5) > 0.5).astype(float)

    def loss():
        val, _, _ = pred.loss_and_grads(windows, targets, xi)
        return val

    pred.loss_and_grads(windows, targets, xi)
    ana = [g.copy() for g in pred.grad_list()]
    num = finite_diff_grads(loss, pred.param_list())
    assert max_rel_error(ana, num) <= 1e-4


def test_checkpoint_round_trip(tmp_path):
    cfg = small_cfg()
    ro = quick_rollout()
    train, val = build_dataset(ro, cfg, RngStream(9, 1))
    pred, _ = train_predictor(train, val, cfg, RngStream(9, 2))
    path = tmp_path / "pred.ckpt"
    save_predictor(path, pred)
    back = load_predictor(path, cfg)
    assert back.input_scale == pred.input_scale
    window = val.inputs[0]
    assert back.predict(window) == pred.predict(window)


# -- training ----------------------------------------------------------------


def test_training_reduces_loss_and_beats_zero_predictor():
    cfg = small_cfg(pretrain_steps=600)
    ro = quick_rollout(slots=1500, seed=11)
    train, val = build_dataset(ro, cfg, RngStream(10, 1))
    pred, metrics = train_predictor(train, val, cfg, RngStream(10, 2))
    zero_mse = float(np.mean((val.targets**2).sum(axis=1)))
    assert metrics.val_mse < zero_mse
    assert metrics.channel_r2 > 0.0


def test_kappa_zero_accuracy_near_base_rate():
    cfg = small_cfg(pretrain_steps=400)
    ro = quick_rollout(kappa=0.0, slots=1500, seed=12)
    train, val = build_dataset(ro, cfg, RngStream(11, 1))
    _, metrics = train_predictor(train, val, cfg, RngStream(11, 2))
    # inputs carry no signal: accuracy within binomial noise of base rate
    noise = 3.0 * math.sqrt(0.25 / len(val))
    assert metrics.mode_accuracy <= metrics.base_rate + noise


def test_information_monotone_in_kappa():
    # smoothed over 3 seeds, accuracy should not decrease with kappa
    cfg = small_cfg(L=8, hidden=16, pretrain_steps=800, batch_size=64)
    kappas = (0.0, 0.5, 0.9, 1.0)
    means = []
    for kappa in kappas:
        accs = []
        for seed in (31, 32, 33):
            ro = quick_rollout(kappa=kappa, slots=2500, n=2, rho=0.99,
                               seed=seed)
            train, val = build_dataset(ro, cfg, RngStream(seed, 1))
            _, metrics = train_predictor(train, val, cfg, RngStream(seed, 2))
            accs.append(metrics.mode_accuracy)
        means.append(float(np.mean(accs)))
    slack = 0.01  # binomial noise on ~250-sample validation folds
    assert means[1] >= means[0] - slack
    assert means[2] >= means[1] - slack
    assert means[3] >= means[2] - slack


def test_empty_training_set_rejected():
    cfg = small_cfg()
    empty = PredictorDataset(np.empty((0, cfg.L, 4)), np.empty((0, 2)),
                             np.empty(0))
    with pytest.raises(ValueError):
        train_predictor(empty, empty, cfg, RngStream(12, 1))


def test_config_validation():
    with pytest.raises(ValueError):
        PredictorConfig(L=0)
    with pytest.raises(ValueError):
        PredictorConfig(lr=0.0)
    with pytest.raises(ValueError):
        PredictorConfig(val_fraction=1.0)

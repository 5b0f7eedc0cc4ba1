"""Encoder-decoder forward/backward and checkpointing."""
import numpy as np
import pytest

from boxsal.core import ConfigurationError
from boxsal.losses import total_loss
from boxsal.predictor import (PredictorConfig, PredictorState, backward, forward,
                              init_predictor, load_checkpoint, parameter_count,
                              save_checkpoint)

MICRO = PredictorConfig(stages=2, stage_channels=(4, 8), lateral_channels=4, seed=3)


def test_parameter_count_matches_hand_sum():
    # stages=2, channels (4, 8), laterals to 4, 3x3 kernels, RGB input:
    # encoder: (4*3*9+4) + (4*4*9+4) + (8*4*9+8) + (8*8*9+8)
    # laterals: (4*4*9+4) + (4*8*9+4)
    # decoder fuse: (4*4*9+4); head: (1*4*9+1)
    expected = (4 * 3 * 9 + 4) + (4 * 4 * 9 + 4) + (8 * 4 * 9 + 8) + (8 * 8 * 9 + 8) \
        + (4 * 4 * 9 + 4) + (4 * 8 * 9 + 4) + (4 * 4 * 9 + 4) + (1 * 4 * 9 + 1)
    assert parameter_count(MICRO) == expected


def test_init_deterministic_and_seed_sensitive():
    a = init_predictor(MICRO)
    b = init_predictor(MICRO)
    np.testing.assert_array_equal(a.params, b.params)
    c = init_predictor(PredictorConfig(stages=2, stage_channels=(4, 8),
                                       lateral_channels=4, seed=4))
    assert not np.array_equal(a.params, c.params)


def test_output_shape_and_range():
    state = init_predictor(MICRO)
    rng = np.random.default_rng(0)
    for h, w in ((8, 8), (8, 12), (6, 10)):  # last one needs padding
        sal, _ = forward(state, rng.uniform(0, 1, (h, w, 3)))
        assert sal.shape == (h, w)
        assert (sal > 0).all() and (sal < 1).all()


def test_zero_parameters_give_half_everywhere():
    state = PredictorState(MICRO, np.zeros(parameter_count(MICRO)))
    sal, _ = forward(state, np.random.default_rng(1).uniform(0, 1, (8, 8, 3)))
    np.testing.assert_allclose(sal, 0.5)


def test_fully_convolutional_param_count():
    assert parameter_count(MICRO) == parameter_count(MICRO)
    state = init_predictor(MICRO)
    rng = np.random.default_rng(2)
    forward(state, rng.uniform(0, 1, (8, 8, 3)))
    forward(state, rng.uniform(0, 1, (16, 16, 3)))  # same state, bigger input


def test_zero_grad_s_gives_zero_parameter_gradient():
    state = init_predictor(MICRO)
    sal, tape = forward(state, np.random.default_rng(3).uniform(0, 1, (8, 8, 3)))
    g = backward(state, tape, np.zeros_like(sal))
    assert (g == 0).all()


def test_backward_deterministic():
    state = init_predictor(MICRO)
    rng = np.random.default_rng(4)
    sal, tape = forward(state, rng.uniform(0, 1, (8, 8, 3)))
    grad_s = rng.normal(0, 1, sal.shape)
    np.testing.assert_array_equal(backward(state, tape, grad_s),
                                  backward(state, tape, grad_s))


def test_end_to_end_parameter_gradients_match_finite_differences():
    rng = np.random.default_rng(5)
    image = rng.uniform(0, 1, (8, 8, 3))
    pseudo = (rng.uniform(0, 1, (8, 8)) > 0.5).astype(float)
    box = np.zeros((8, 8)); box[2:7, 2:7] = 1.0
    state = init_predictor(MICRO)

    def loss_at(params):
        s = PredictorState(MICRO, params)
        pred, tape = forward(s, image)
        return total_loss(pred, pseudo, box, image), tape, s

    lv, tape, s = loss_at(state.params)
    grad = backward(s, tape, lv.grad_s)
    h = 1e-4
    for i in rng.choice(state.params.size, 50, replace=False):
        up = state.params.copy(); up[i] += h
        down = state.params.copy(); down[i] -= h
        fd = (loss_at(up)[0].value - loss_at(down)[0].value) / (2 * h)
        assert abs(grad[i] - fd) <= 1e-3 * max(abs(fd), 1e-4), f"param {i}"


def test_parameter_gradients_through_pad_and_crop():
    # 6x10 input forces reflect padding to 8x12 and an output crop
    rng = np.random.default_rng(9)
    image = rng.uniform(0, 1, (6, 10, 3))
    target = (rng.uniform(0, 1, (6, 10)) > 0.5).astype(float)
    state = init_predictor(MICRO)

    def loss_at(params):
        s = PredictorState(MICRO, params)
        pred, tape = forward(s, image)
        from boxsal.losses import cross_entropy
        return cross_entropy(pred, target), tape, s

    lv, tape, s = loss_at(state.params)
    grad = backward(s, tape, lv.grad_s)
    h = 1e-4
    for i in rng.choice(state.params.size, 25, replace=False):
        up = state.params.copy(); up[i] += h
        down = state.params.copy(); down[i] -= h
        fd = (loss_at(up)[0].value - loss_at(down)[0].value) / (2 * h)
        assert abs(grad[i] - fd) <= 1e-3 * max(abs(fd), 1e-4), f"param {i}"


def test_config_validation():
    with pytest.raises(ConfigurationError):
        PredictorConfig(stages=1, stage_channels=(4,))
    with pytest.raises(ConfigurationError):
        PredictorConfig(stages=2, stage_channels=(4,))
    with pytest.raises(ConfigurationError):
        PredictorConfig(kernel_size=4, stage_channels=(4, 8), stages=2)


def test_state_validates_vector():
    with pytest.raises(ConfigurationError):
        PredictorState(MICRO, np.zeros(3))
    bad = np.zeros(parameter_count(MICRO)); bad[0] = np.nan
    with pytest.raises(ConfigurationError):
        PredictorState(MICRO, bad)


def test_checkpoint_round_trip_bit_exact(tmp_path):
    state = init_predictor(MICRO)
    velocity = np.random.default_rng(6).normal(0, 1, state.params.shape)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, state, velocity, extra={"epoch": 3})
    loaded, vel, extra = load_checkpoint(path)
    assert loaded.config == MICRO
    np.testing.assert_array_equal(loaded.params, state.params)
    np.testing.assert_array_equal(vel, velocity)
    assert extra == {"epoch": 3}

    # byte determinism of the container itself
    path2 = tmp_path / "model2.ckpt"
    save_checkpoint(path2, state, velocity, extra={"epoch": 3})
    assert path.read_bytes() == path2.read_bytes()


def test_checkpoint_rejects_foreign_file(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"not a checkpoint\n{}")
    with pytest.raises(ConfigurationError):
        load_checkpoint(path)

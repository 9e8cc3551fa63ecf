import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import central_diff, rel_err
from quakesurrogate.errors import DegenerateError, ShapeError
from quakesurrogate.masked_net import LossConfig, huber, physics_loss, source_loss, target_loss


class TestHuber:
    def test_branches(self):
        assert huber([0.0], [0.5], 1.0) == 0.125
        assert huber([0.0], [2.0], 1.0) == 1.5
        assert huber([0.0], [-2.0], 1.0) == 1.5

    def test_zero(self):
        assert huber(np.arange(5.0), np.arange(5.0)) == 0.0

    @given(st.floats(-50, 50), st.floats(0.1, 5))
    def test_continuous_at_delta(self, e, d):
        a = huber([0.0], [e], d)
        assert a >= 0
        assert a <= 0.5 * e * e + 1e-12


class TestPhysics:
    def test_consistent_is_zero(self, rng):
        v = rng.normal(size=50)
        d = np.cumsum(v) * 0.01
        assert physics_loss(v, d, 0.01)[0] == pytest.approx(0.0, abs=1e-28)

    def test_hand_sum(self):
        value, _, _ = physics_loss(np.ones(3), np.zeros(3), 0.01)
        expected = sum(0.5 * (0.01 * (T + 1)) ** 2 for T in range(3))
        assert expected == pytest.approx(0.0007, abs=1e-18)
        assert value == pytest.approx(expected, rel=1e-12, abs=1e-18)

    def test_quadratic_homogeneity(self, rng):
        v, d = 0.1 * rng.normal(size=(3, 40)), 0.01 * rng.normal(size=(3, 40))
        a = physics_loss(v, d, 0.02)[0]
        b = physics_loss(2.5 * v, 2.5 * d, 0.02)[0]
        assert b == pytest.approx(2.5 ** 2 * a, rel=1e-12)

    def test_batch_mean(self, rng):
        v, d = rng.normal(size=(4, 20)), rng.normal(size=(4, 20))
        single = [physics_loss(v[i], d[i], 0.05)[0] for i in range(4)]
        assert physics_loss(v, d, 0.05)[0] == pytest.approx(np.mean(single), rel=1e-12)

    def test_gradients(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            T = int(rng.integers(2, 30))
            v, d = 20 * rng.normal(size=(2, T)), rng.normal(size=(2, T))
            dt = float(rng.uniform(0.005, 0.1))
            _, gv, gd = physics_loss(v, d, dt)
            f = lambda: physics_loss(v, d, dt)[0]
            idx = np.arange(v.size)
            assert rel_err(gv, central_diff(f, v, idx)) < 1e-5
            assert rel_err(gd, central_diff(f, d, idx)) < 1e-5

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            physics_loss(np.zeros(3), np.zeros(4), 0.01)


def _batch(rng, B=3, T=30):
    true = rng.normal(size=(B, 4, T))
    return true + 0.3 * rng.normal(size=true.shape), true


class TestSourceLoss:
    def test_perfect(self, rng):
        _, true = _batch(rng)
        value, grad = source_loss(true.copy(), true, 0)
        assert value == 0.0 and not grad.any()

    def test_switch_adds_exact_physics(self, rng):
        pred, true = _batch(rng)
        cfg = LossConfig(dt_s=0.02)
        before, _ = source_loss(pred, true, 49, cfg)
        after, _ = source_loss(pred, true, 50, cfg)
        A = np.abs(true).max(axis=-1)
        v = pred[:, 1] / A[:, 2:3]
        d = pred[:, 2] / A[:, 2:3]
        lp, _, _ = physics_loss(v, d, 0.02)
        assert cfg.physics_weight == 5e-6
        assert lp > 0
        assert after - before == pytest.approx(5e-6 * lp, rel=1e-12, abs=1e-12)

    def test_channel_scales_units(self, rng):
        # stored channels divided by global scales; the physics term undoes that
        pred, true = _batch(rng)
        s = np.array([2.0, 0.5, 0.25, 3.0])
        cfg = LossConfig(dt_s=0.01)
        diff = source_loss(pred, true, 60, cfg, s)[0] - source_loss(pred, true, 0, cfg, s)[0]
        Ad = np.abs(true[:, 2]).max(axis=-1, keepdims=True) * s[2]
        lp, _, _ = physics_loss(pred[:, 1] * s[1] / Ad, pred[:, 2] * s[2] / Ad, 0.01)
        assert diff == pytest.approx(5e-6 * lp, rel=1e-12)

    def test_peak_normalization(self, rng):
        pred, true = _batch(rng, B=1)
        A = np.abs(true).max(axis=-1)[:, :, None]
        assert source_loss(pred, true, 0)[0] == pytest.approx(huber(true / A, pred / A), rel=1e-14)

    @pytest.mark.parametrize("epoch", [0, 75])
    def test_gradients(self, epoch):
        rng = np.random.default_rng(epoch)
        cfg = LossConfig(physics_weight=0.3, dt_s=0.05)
        s = np.array([1.0, 2.0, 0.5, 1.0])
        for _ in range(20):
            pred, true = _batch(rng, B=2, T=int(rng.integers(3, 15)))
            pred *= 3
            _, g = source_loss(pred, true, epoch, cfg, s)
            f = lambda: source_loss(pred, true, epoch, cfg, s)[0]
            idx = rng.choice(pred.size, 20, replace=False)
            assert rel_err(g.ravel()[idx], central_diff(f, pred, idx)) < 1e-5

    def test_degenerate_sample_skipped(self, rng):
        pred, true = _batch(rng)
        true[1, 3] = 0.0
        with pytest.warns(RuntimeWarning):
            value, grad = source_loss(pred, true, 0)
        keep = [0, 2]
        assert value == pytest.approx(source_loss(pred[keep], true[keep], 0)[0], rel=1e-14)
        assert not grad[1].any()

    def test_all_degenerate(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            with pytest.raises(DegenerateError):
                source_loss(np.ones((1, 4, 5)), np.zeros((1, 4, 5)), 0)

    def test_shapes(self):
        with pytest.raises(ShapeError):
            source_loss(np.ones((1, 3, 5)), np.ones((1, 3, 5)), 0)
        with pytest.raises(ShapeError):
            source_loss(np.ones((0, 4, 5)), np.ones((0, 4, 5)), 0)


class TestTargetLoss:
    def test_perfect(self, rng):
        y = rng.normal(size=(2, 3, 10))
        assert target_loss(y, y)[0] == 0.0

    def test_zero_prediction(self):
        y = np.array([[[0.5, -1.0, 0.25], [2.0, 1.0, -0.5]]])
        A = np.array([[1.0], [2.0]])
        expected = np.mean(0.5 * (y[0] / A) ** 2)
        assert target_loss(np.zeros_like(y), y)[0] == pytest.approx(expected, abs=1e-15)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_scale_invariance(self, seed):
        rng = np.random.default_rng(seed)
        y = rng.normal(size=(2, 3, 8))
        yh = y + rng.normal(size=y.shape)
        s = rng.uniform(0.01, 100, size=(2, 3, 1))
        assert target_loss(yh * s, y * s)[0] == pytest.approx(target_loss(yh, y)[0], abs=1e-12)

    def test_gradients(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            y = rng.normal(size=(2, 2, int(rng.integers(2, 12))))
            yh = y + 2 * rng.normal(size=y.shape)
            _, g = target_loss(yh, y)
            f = lambda: target_loss(yh, y)[0]
            idx = np.arange(yh.size)
            assert rel_err(g, central_diff(f, yh, idx)) < 1e-5

    def test_zero_peak(self):
        y = np.ones((2, 2, 4))
        y[1, 0] = 0
        with pytest.raises(DegenerateError):
            target_loss(y, y)

import math

import numpy as np
import pytest

from quakesurrogate.errors import TrainingError
from quakesurrogate.hazard import CatalogEvent, SynthesizerConfig, synthesize_motion
from quakesurrogate.masked_net import NetworkConfig, SourceNetwork, TargetNetwork
from quakesurrogate.masked_net.training import params_checksum, train_source, train_target
from quakesurrogate.solver import SDOFParams, newmark_sdof


def linear_sdof_data(n, T, dt=0.02, seed=0):
    """Normalized ground motions and elastic SDOF responses ``(x, y, scales)``."""
    rng = np.random.default_rng(seed)
    synth = SynthesizerConfig(duration_base_s=2.0, duration_per_mw_s=1.0)
    p = SDOFParams(1.0, 0.5, 0.05, math.inf, 0.1)
    xs, ys = [], []
    for i in range(n):
        ev = CatalogEvent(i, 0.0, float(rng.uniform(5.5, 6.8)), 0.0, float(rng.uniform(15, 50)))
        gm = synthesize_motion(ev, synth, T, dt, (seed, i))
        xs.append(gm.samples)
        ys.append(newmark_sdof(p, gm).sdof_channels())
    x = np.array(xs)[:, None]
    y = np.array(ys)
    xs_ = np.abs(x).max()
    sc = np.abs(y).max(axis=(0, 2))
    return x / xs_, y / sc[None, :, None], sc


@pytest.fixture(scope="module")
def small_data():
    return linear_sdof_data(12, 24)


@pytest.fixture
def cfg24(tiny_cfg):
    return tiny_cfg


def test_zero_epochs(cfg24, small_data):
    x, y, sc = small_data
    net = SourceNetwork(cfg24, seed=0)
    before = params_checksum(net)
    res = train_source(net, x, y, epochs=0, channel_scales=sc)
    assert res.train_loss == [] and params_checksum(net) == before


def test_deterministic(cfg24, small_data):
    x, y, sc = small_data
    runs = []
    for _ in range(2):
        net = SourceNetwork(cfg24, seed=1)
        res = train_source(net, x, y, epochs=4, lr=1e-3, batch=5, seed=3, channel_scales=sc,
                           x_val=x[:3], y_val=y[:3])
        runs.append((res.train_loss, res.val_loss, params_checksum(net)))
    assert runs[0] == runs[1]
    net = SourceNetwork(cfg24, seed=1)
    other = train_source(net, x, y, epochs=4, lr=1e-3, batch=5, seed=4, channel_scales=sc)
    assert other.train_loss != runs[0][0]


def test_resume_matches_uninterrupted(cfg24, small_data):
    x, y, sc = small_data
    a = SourceNetwork(cfg24, seed=2)
    train_source(a, x, y, epochs=6, lr=1e-3, batch=4, channel_scales=sc)
    b = SourceNetwork(cfg24, seed=2)
    first = train_source(b, x, y, epochs=3, lr=1e-3, batch=4, channel_scales=sc)
    train_source(b, x, y, epochs=3, lr=1e-3, batch=4, channel_scales=sc,
                 optimizer=first.optimizer, start_epoch=3)
    assert params_checksum(a) == params_checksum(b)


def test_masks_survive_training(cfg24, small_data):
    x, y, sc = small_data
    net = SourceNetwork(cfg24, seed=0)
    train_source(net, x, y, epochs=3, lr=1e-2, batch=4, channel_scales=sc)
    for _, layer in net.named_layers():
        w = layer.params["weight"]
        assert np.all(w[np.broadcast_to(layer.mask, w.shape) == 0] == 0)


def test_divergence_reports_epoch(cfg24, small_data):
    x, y, sc = small_data
    net = SourceNetwork(cfg24, seed=0)
    seen = []

    def poison(epoch, tr, va):
        seen.append(epoch)
        if epoch == 1:
            net.layers[0].params["bias"][:] = np.nan

    with pytest.raises(TrainingError) as info:
        train_source(net, x, y, epochs=5, channel_scales=sc, on_epoch=poison)
    assert info.value.epoch == 2 and seen == [0, 1]


def test_on_epoch_stop(cfg24, small_data):
    x, y, sc = small_data
    res = train_source(SourceNetwork(cfg24), x, y, epochs=10, channel_scales=sc,
                       on_epoch=lambda e, tr, va: e == 2)
    assert len(res.train_loss) == 3


def test_linear_network_monotone():
    """Identity activation, elastic data, lr 1e-5: loss falls every epoch for 5 seeds."""
    cfg = NetworkConfig(T_step=64, t_past=8, n_floors=2, conv_kernel=32, head_t_past=8,
                        activation="identity")
    x, y, sc = linear_sdof_data(32, 64, seed=7)
    for seed in range(5):
        net = SourceNetwork(cfg, seed=seed)
        res = train_source(net, x, y, epochs=10, lr=1e-5, batch=8, seed=seed, channel_scales=sc)
        assert np.all(np.diff(res.train_loss) < 0), (seed, res.train_loss)


@pytest.mark.slow
def test_single_sample_overfit(desk_cfg):
    x, y, sc = linear_sdof_data(1, desk_cfg.T_step, seed=11)
    net = SourceNetwork(desk_cfg, seed=0)
    res = train_source(net, x, y, epochs=2000, lr=1e-3, batch=1, channel_scales=sc,
                       on_epoch=lambda e, tr, va: tr < 1e-5)
    assert min(res.train_loss) < 1e-4


class TestTarget:
    def data(self, cfg, n, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(n, 1, cfg.T_step))
        y = np.cumsum(rng.normal(size=(n, cfg.n_floors, cfg.T_step)), axis=-1)
        return x, y

    def test_backbone_frozen(self, cfg24):
        src = SourceNetwork(cfg24, seed=0)
        net = TargetNetwork(src, cfg24, seed=0)
        before = params_checksum(net, "backbone.")
        head_before = params_checksum(net, "head.")
        x, y = self.data(cfg24, 8, 0)
        xv, yv = self.data(cfg24, 4, 1)
        res = train_target(net, x, y, lr=1e-2, max_epochs=15, patience=5, batch=4, x_val=xv,
                           y_val=yv)
        assert params_checksum(net, "backbone.") == before
        assert params_checksum(net, "head.") != head_before
        assert res.best_epoch == int(np.argmin(res.val_loss))

    def test_zero_epochs(self, cfg24):
        net = TargetNetwork(SourceNetwork(cfg24), cfg24)
        before = params_checksum(net)
        x, y = self.data(cfg24, 4, 0)
        train_target(net, x, y, max_epochs=0)
        assert params_checksum(net) == before

    def test_restores_best(self, cfg24):
        net = TargetNetwork(SourceNetwork(cfg24, seed=0), cfg24, seed=0)
        x, y = self.data(cfg24, 6, 2)
        xv, yv = self.data(cfg24, 3, 3)
        res = train_target(net, x, y, lr=5e-2, max_epochs=30, patience=3, batch=2, x_val=xv,
                           y_val=yv)
        from quakesurrogate.masked_net import target_loss
        from quakesurrogate.masked_net.training import predict_target
        final = target_loss(predict_target(net, xv), yv)[0]
        assert final == pytest.approx(min(res.val_loss), rel=1e-12)
        assert len(res.val_loss) <= res.best_epoch + 1 + 3

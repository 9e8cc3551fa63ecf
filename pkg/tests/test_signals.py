import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from quakesurrogate.errors import DegenerateError, DomainError
from quakesurrogate.signals import (NormalizationStats, ResponseHistory, Waveform,
                                    apply_normalization, compute_pga, compute_pgv,
                                    fit_normalization)


def hist(scale=1.0, n=6):
    base = np.linspace(-1, 1, n)[None, :]
    return ResponseHistory(scale * base, 2 * scale * base, 3 * scale * base, 4 * scale * base, 0.01)


class TestWaveform:
    def test_rejects_bad(self):
        with pytest.raises(DomainError):
            Waveform(np.zeros((2, 2)), 0.01)
        with pytest.raises(DomainError):
            Waveform(np.zeros(3), 0.0)
        with pytest.raises(DomainError):
            Waveform(np.array([0.0, math.inf]), 0.01)


class TestPGA:
    def test_zeros(self):
        assert compute_pga(Waveform(np.zeros(5), 0.01)) == 0.0

    def test_example(self):
        assert compute_pga(Waveform(np.array([1.0, -3.0, 2.0]), 0.01)) == 3.0

    def test_sine_crest(self):
        n, dt = 400, 0.01
        t = np.arange(n) * dt
        a = 2.5 * np.sin(2 * math.pi * t / 1.0)  # crest at t=0.25, on the grid
        assert compute_pga(Waveform(a, dt)) == pytest.approx(2.5, abs=1e-14)

    def test_empty(self):
        with pytest.raises(DomainError):
            compute_pga(Waveform(np.zeros(0), 0.01))
        with pytest.raises(DomainError):
            compute_pgv(Waveform(np.zeros(0), 0.01))


class TestPGV:
    def test_zeros(self):
        assert compute_pgv(Waveform(np.zeros(5), 0.01)) == 0.0

    def test_constant(self):
        n, dt = 101, 0.01
        assert compute_pgv(Waveform(np.full(n, 0.7), dt)) == pytest.approx(0.7 * (n - 1) * dt,
                                                                            rel=1e-13)

    def test_sine(self):
        a, w, dt = 1.5, 2 * math.pi, 0.001
        t = np.arange(4001) * dt
        assert compute_pgv(Waveform(a * np.sin(w * t), dt)) == pytest.approx(2 * a / w, rel=1e-5)

    @given(arrays(np.float64, st.integers(1, 50), elements=st.floats(-10, 10)))
    def test_sign_symmetry(self, x):
        w = Waveform(x, 0.02)
        assert compute_pgv(w) == compute_pgv(w.scaled(-1.0))


class TestNormalization:
    def test_input_scale(self):
        ws = [Waveform(np.array([0.0, -2.0]), 0.01), Waveform(np.array([5.0, 1.0]), 0.01)]
        stats = fit_normalization(ws, [hist()])
        assert stats.input_scale == 5.0
        assert stats.response_scales == {"rel_accel": 1.0, "rel_vel": 2.0, "rel_disp": 3.0,
                                         "restoring_force": 4.0}

    def test_duplication(self):
        ws = [Waveform(np.array([1.0, -4.0]), 0.01)]
        a = fit_normalization(ws, [hist(2.0)])
        b = fit_normalization(ws * 3, [hist(2.0)] * 3)
        assert a == b

    def test_fixed_point(self):
        rng = np.random.default_rng(0)
        ws = [Waveform(rng.normal(size=20), 0.01) for _ in range(3)]
        hs = [hist(s) for s in (0.3, 1.7, 0.9)]
        stats = fit_normalization(ws, hs)
        ws2, hs2 = apply_normalization(stats, ws, hs)
        again = fit_normalization(ws2, hs2)
        assert again.input_scale == 1.0
        assert all(v == 1.0 for v in again.response_scales.values())

    def test_zero_family(self):
        h = hist()
        h.rel_vel = np.zeros_like(h.rel_vel)
        with pytest.raises(DegenerateError):
            fit_normalization([Waveform(np.ones(6), 0.01)], [h])

    def test_zero_input(self):
        with pytest.raises(DegenerateError):
            fit_normalization([Waveform(np.zeros(6), 0.01)], [hist()])

    def test_round_trip(self):
        stats = NormalizationStats(0.1 + 0.2, {"rel_disp": 1 / 3})
        assert NormalizationStats.from_dict(stats.to_dict()) == stats
        y = np.array([0.1, -7.0])
        np.testing.assert_allclose(stats.denormalize("rel_disp", stats.normalize("rel_disp", y)),
                                   y, rtol=1e-15)

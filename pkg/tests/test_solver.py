import math

import numpy as np
import pytest
from scipy import linalg

from quakesurrogate.errors import DomainError, ModelError, SolverError
from quakesurrogate.signals import Waveform
from quakesurrogate.solver import (BilinearState, SDOFParams, ShearBuildingParams, bilinear_force,
                                   default_building, eigen_analysis, newmark_mdof, newmark_sdof,
                                   rayleigh_coefficients, sdof_equivalent, tune_building)
from quakesurrogate.solver import dynamics
from quakesurrogate.solver.kernels import get_backend

ELASTIC = math.inf


def elastic_sdof(T=1.0, zeta=0.05):
    return SDOFParams(1.0, T, zeta, ELASTIC, 0.5)


def _peaks(u):
    i = np.flatnonzero((u[1:-1] > u[:-2]) & (u[1:-1] >= u[2:])) + 1
    return u[i]


def linear_newmark(M, C, K, p, dt):
    """Textbook incremental average-acceleration Newmark for a linear system."""
    n = p.shape[0]
    d = M.shape[0]
    u = np.zeros((n, d))
    v = np.zeros((n, d))
    a = np.zeros((n, d))
    a[0] = np.linalg.solve(M, p[0])
    Keff = K + 2.0 / dt * C + 4.0 / dt ** 2 * M
    for i in range(n - 1):
        dp = (p[i + 1] - p[i]) + M @ (4.0 / dt * v[i] + 2.0 * a[i]) + C @ (2.0 * v[i])
        du = np.linalg.solve(Keff, dp)
        dv = 2.0 / dt * du - 2.0 * v[i]
        u[i + 1] = u[i] + du
        v[i + 1] = v[i] + dv
        a[i + 1] = np.linalg.solve(M, p[i + 1] - C @ v[i + 1] - K @ u[i + 1])
    return u, v, a


class TestSDOF:
    def test_zero_input(self, backend):
        h = newmark_sdof(SDOFParams(), Waveform(np.zeros(50), 0.02), backend=backend)
        for arr in (h.rel_accel, h.rel_vel, h.rel_disp, h.restoring_force):
            assert np.all(arr == 0.0)

    def test_free_vibration_decay(self, backend):
        zeta = 0.05
        h = newmark_sdof(elastic_sdof(1.0, zeta), Waveform(np.zeros(4000), 1.0 / 400), u0=1.0,
                         backend=backend)
        pk = _peaks(h.rel_disp[0])
        ratio = pk[1:6] / pk[:5]
        expected = math.exp(-2 * math.pi * zeta / math.sqrt(1 - zeta ** 2))
        assert expected == pytest.approx(0.7301, abs=1e-4)
        np.testing.assert_allclose(ratio, expected, rtol=0.01)

    def test_resonant_amplitude(self, backend):
        zeta, T, p0 = 0.05, 1.0, 2.0
        dt = T / 200
        n = int(80 * T / dt)
        ag = -p0 * np.sin(2 * math.pi * np.arange(n) * dt / T)  # unit mass, load p0 sin
        h = newmark_sdof(elastic_sdof(T, zeta), Waveform(ag, dt), backend=backend)
        k = (2 * math.pi / T) ** 2
        steady = np.max(np.abs(h.rel_disp[0, -int(5 * T / dt):]))
        assert steady == pytest.approx(p0 / k / (2 * zeta), rel=0.02)

    def test_elastic_linearity(self, rng, backend):
        gm = Waveform(rng.normal(size=600), 0.01)
        p = elastic_sdof(0.8, 0.03)
        h1 = newmark_sdof(p, gm, backend=backend)
        h3 = newmark_sdof(p, gm.scaled(3.7), backend=backend)
        np.testing.assert_allclose(h3.rel_disp, 3.7 * h1.rel_disp, rtol=1e-8,
                                   atol=1e-8 * np.abs(h3.rel_disp).max())

    def test_energy_balance(self, rng):
        p = elastic_sdof(0.7, 0.04)
        ag = np.convolve(rng.normal(size=3000), np.ones(20) / 20, mode="same")
        dt = 0.005
        h = newmark_sdof(p, Waveform(ag, dt))
        u, v = h.rel_disp[0], h.rel_vel[0]
        du = np.diff(u)
        work = lambda f: np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * du)])
        e_in = work(-p.mass_kg * ag)
        e_damp = work(p.damping_coeff * v)
        e_store = 0.5 * p.mass_kg * v * v + work(h.restoring_force[0])
        scale = np.maximum.accumulate(np.abs(e_in))
        ok = scale > 0
        assert np.max(np.abs(e_in - e_store - e_damp)[ok] / scale[ok]) < 0.005

    def test_backends_agree(self, rng):
        gm = Waveform(5 * rng.normal(size=800), 0.01)
        p = SDOFParams(1.0, 1.2, 0.03, 2.0, 0.2)
        a = newmark_sdof(p, gm, backend="python")
        b = newmark_sdof(p, gm, backend="cython") if "cython" in _backends() else a
        np.testing.assert_allclose(a.rel_disp, b.rel_disp, rtol=0, atol=1e-12)
        np.testing.assert_allclose(a.restoring_force, b.restoring_force, rtol=0, atol=1e-10)

    def test_newton_failure_reports_step(self, monkeypatch, rng):
        monkeypatch.setattr(dynamics, "NEWTON_MAX_ITER", 1)
        gm = Waveform(20 * rng.normal(size=200), 0.01)
        with pytest.raises(SolverError) as info:
            newmark_sdof(SDOFParams(1.0, 1.0, 0.02, 0.5, 0.1), gm)
        assert info.value.step is not None and info.value.step >= 1

    def test_invalid_params(self):
        with pytest.raises(ModelError):
            SDOFParams(period_s=-1.0)
        with pytest.raises(ModelError):
            SDOFParams(post_yield_ratio=1.5)

    def test_dt_halving(self):
        from quakesurrogate.hazard import (CatalogEvent, SynthesizerConfig, event_noise_seed,
                                           synthesize_motion)
        ev = CatalogEvent(0, 1.0, 6.6, 10.0, math.hypot(10.0, 15.0))
        gm = synthesize_motion(ev, SynthesizerConfig(), 1024, 0.02, event_noise_seed(1, ev))
        fine = np.interp(np.arange(2047) * 0.01, np.arange(1024) * 0.02, gm.samples)
        gm2 = Waveform(fine, 0.01)
        p = SDOFParams(1.0, 2.41, 0.032, 4.33, 0.37)
        a = np.max(np.abs(newmark_sdof(p, gm).rel_disp))
        b = np.max(np.abs(newmark_sdof(p, gm2).rel_disp))
        assert abs(a - b) / b < 0.005
        bld = default_building(n_stories=4)
        a = np.max(np.abs(newmark_mdof(bld, gm).rel_disp), axis=1)
        b = np.max(np.abs(newmark_mdof(bld, gm2).rel_disp), axis=1)
        assert np.max(np.abs(a - b) / b) < 0.005


def _backends():
    from quakesurrogate.solver import kernels
    return ["python"] + (["cython"] if kernels.compiled_backend is not None else [])


class TestBilinear:
    k0, fy, r = 100.0, 5.0, 0.1

    def _drive(self, path, backend=None):
        st = BilinearState()
        out = []
        for d in path:
            f, st = bilinear_force(st, d, self.k0, self.fy, self.r, backend=backend)
            out.append(f)
        return np.array(out)

    def test_elastic_range(self, backend):
        dy = self.fy / self.k0
        d = np.linspace(0, 0.9 * dy, 10)
        np.testing.assert_allclose(self._drive(d, backend), self.k0 * d, rtol=1e-14)

    def test_backbone(self, backend):
        dy = self.fy / self.k0
        f = self._drive(np.linspace(0, 2 * dy, 101), backend)
        assert f[-1] == pytest.approx(self.fy + self.r * self.k0 * dy, rel=1e-12)

    def test_loop_area(self, backend):
        dy = self.fy / self.k0
        D = 2 * dy
        n = 2000  # grid step dy/1000 puts every kink on a grid point
        up = np.linspace(0, D, n + 1)
        down = np.linspace(D, -D, 2 * n + 1)[1:]
        back = np.linspace(-D, D, 2 * n + 1)[1:]
        path = np.concatenate([up, down, back, down, back])
        f = self._drive(path, backend)
        # second full cycle, starting at +D
        start = len(up) + len(down) + len(back) - 1
        d_c, f_c = path[start:], f[start:]
        area = abs(np.sum(0.5 * (f_c[1:] + f_c[:-1]) * np.diff(d_c)))
        expected = 4 * self.fy * (1 - self.r) * (D - dy)
        assert area == pytest.approx(expected, rel=1e-6)
        # the loop is stable: the second cycle repeats the first
        first = f[len(up) - 1:start + 1]
        np.testing.assert_allclose(first, f_c, atol=1e-9)

    def test_state_invariant(self, rng, backend):
        st = BilinearState()
        for d in np.cumsum(rng.normal(scale=0.03, size=500)):
            f, st = bilinear_force(st, d, self.k0, self.fy, self.r, backend=backend)
            assert abs(f - st.back_force_N) <= self.fy * (1 + 1e-12)


def three_story(fy=ELASTIC):
    return ShearBuildingParams(masses=(2.0e5, 2.0e5, 1.5e5), story_heights_m=(4.0, 3.5, 3.5),
                               elastic_story_stiffness=(3.0e8, 2.5e8, 1.5e8),
                               story_yield_force_N=(fy, fy, fy), post_yield_ratio=(0.1,) * 3)


class TestMDOF:
    def test_zero_input(self, backend):
        h = newmark_mdof(three_story(), Waveform(np.zeros(40), 0.01), backend=backend)
        assert np.all(h.rel_disp == 0) and np.all(h.idr == 0)

    def test_modal_superposition(self, rng, backend):
        bld = three_story()
        ag = np.convolve(rng.normal(size=2000), np.ones(5) / 5, mode="same")
        dt = 0.01
        h = newmark_mdof(bld, Waveform(ag, dt), backend=backend)
        M, K = bld.mass_matrix(), bld.stiffness_matrix()
        w2, phi = linalg.eigh(K, M)
        a0, a1 = dynamics.building_rayleigh(bld)
        ones = np.ones(3)
        u = np.zeros((len(ag), 3))
        for j in range(3):
            ph = phi[:, j]
            mj = ph @ M @ ph
            gam = ph @ M @ ones / mj
            cj = a0 + a1 * w2[j]
            q, _, _ = linear_newmark(np.eye(1), np.array([[cj]]), np.array([[w2[j]]]),
                                     (-gam * ag)[:, None], dt)
            u += q[:, :1] * ph[None, :]
        peak_oracle = np.max(np.abs(u), axis=0)
        peak = np.max(np.abs(h.rel_disp), axis=1)
        np.testing.assert_allclose(peak, peak_oracle, rtol=1e-6)

    def test_one_story_equals_sdof(self, rng, backend):
        bld = ShearBuildingParams((1.0,), (3.0,), (40.0,), (3.0,), (0.2,),
                                  rayleigh_zetas=(0.04, 0.04))
        gm = Waveform(8 * rng.normal(size=700), 0.01)
        a = newmark_mdof(bld, gm, backend=backend)
        b = newmark_sdof(sdof_equivalent(bld), gm, backend=backend)
        np.testing.assert_allclose(a.rel_disp, b.rel_disp, rtol=0, atol=1e-10)

    def test_idr_identity(self, rng):
        bld = default_building(n_stories=4)
        h = newmark_mdof(bld, Waveform(3 * rng.normal(size=300), 0.02))
        hgt = np.array(bld.story_heights_m)[:, None]
        below = np.vstack([np.zeros((1, h.n_steps)), h.rel_disp[:-1]])
        np.testing.assert_allclose(h.idr * hgt + below, h.rel_disp, rtol=0, atol=1e-15)

    def test_backends_agree(self, rng):
        if "cython" not in _backends():
            pytest.skip("compiled kernels not built")
        bld = default_building(n_stories=4)
        gm = Waveform(6 * rng.normal(size=500), 0.02)
        a = newmark_mdof(bld, gm, backend="python")
        b = newmark_mdof(bld, gm, backend="cython")
        np.testing.assert_allclose(a.rel_disp, b.rel_disp, rtol=1e-9, atol=1e-14)

    def test_elastic_linearity(self, rng):
        bld = three_story()
        gm = Waveform(rng.normal(size=400), 0.01)
        a = newmark_mdof(bld, gm).rel_disp
        b = newmark_mdof(bld, gm.scaled(-2.5)).rel_disp
        np.testing.assert_allclose(b, -2.5 * a, rtol=1e-8, atol=1e-8 * np.abs(b).max())


class TestEigen:
    def test_one_story(self):
        bld = ShearBuildingParams((3.0,), (3.0,), (300.0,), (1.0,), (0.1,))
        assert eigen_analysis(bld)[0] == pytest.approx(2 * math.pi * math.sqrt(3.0 / 300.0))

    def test_uniform_chain(self):
        n, m, k = 6, 2.0, 500.0
        bld = ShearBuildingParams((m,) * n, (3.0,) * n, (k,) * n, (1.0,) * n, (0.1,) * n)
        j = np.arange(1, n + 1)
        w = 2 * math.sqrt(k / m) * np.sin((2 * j - 1) * math.pi / (2 * (2 * n + 1)))
        np.testing.assert_allclose(eigen_analysis(bld), 2 * math.pi / w, rtol=1e-12)

    def test_default_twenty_story(self):
        T1 = eigen_analysis(default_building())[0]
        assert 2.3976 <= T1 <= 2.4024

    def test_tune_idempotent(self):
        tpl = default_building(target_T1=None)
        once = tune_building(2.40, tpl)
        twice = tune_building(2.40, once)
        np.testing.assert_allclose(once.elastic_story_stiffness, twice.elastic_story_stiffness,
                                   rtol=1e-12)
        assert 2.3976 <= eigen_analysis(once)[0] <= 2.4024

    def test_not_positive_definite(self):
        with pytest.raises(ModelError):
            ShearBuildingParams((1.0,), (3.0,), (-1.0,), (1.0,), (0.1,))


class TestRayleigh:
    def test_closed_form(self):
        a0, a1 = rayleigh_coefficients(2.0, 4.0, 0.03, 0.03)
        assert a0 == pytest.approx(0.08, abs=1e-15)
        assert a1 == pytest.approx(0.01, abs=1e-15)

    def test_round_trip(self):
        w1, w2, z1, z2 = 3.1, 9.7, 0.02, 0.05
        a0, a1 = rayleigh_coefficients(w1, w2, z1, z2)
        for w, z in ((w1, z1), (w2, z2)):
            assert a0 / (2 * w) + a1 * w / 2 == pytest.approx(z, abs=1e-12)

    def test_stiffness_proportional(self):
        a0, a1 = rayleigh_coefficients(2.0, 5.0, 0.02 * 2.0, 0.02 * 5.0)
        assert a0 == pytest.approx(0.0, abs=1e-14)
        assert a1 == pytest.approx(0.04)

    def test_equal_frequencies(self):
        with pytest.raises(DomainError):
            rayleigh_coefficients(3.0, 3.0, 0.05, 0.05)


def test_backend_lookup():
    assert get_backend("python").__name__.endswith("_pykernels")
    with pytest.raises(ValueError):
        get_backend("fortran")

import math

import numpy as np
import pytest

from quakesurrogate.masked_net import NetworkConfig
from quakesurrogate.solver import kernels


BACKENDS = ["python"] + (["cython"] if kernels.compiled_backend is not None else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_cfg():
    """Small network that keeps every structural feature of the real one."""
    return NetworkConfig(T_step=24, n_layers=4, n_single_channel=2, channels=4, t_past=5,
                         t_future=1, n_floors=2, conv_kernel=8, head_t_past=4)


@pytest.fixture
def desk_cfg():
    return NetworkConfig(T_step=512, t_past=64, n_floors=4, conv_kernel=256, head_t_past=64)


def sine(n, dt, period, amp=1.0):
    t = np.arange(n) * dt
    return amp * np.sin(2 * math.pi * t / period)


def rel_err(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if denom == 0 else float(np.linalg.norm(a - b) / denom)


def central_diff(f, arr, idx, h=1e-6):
    """Central differences of scalar ``f()`` wrt ``arr.flat[idx]`` (mutated in place)."""
    out = np.empty(len(idx))
    flat = arr.reshape(-1)
    for n, i in enumerate(idx):
        keep = flat[i]
        flat[i] = keep + h
        up = f()
        flat[i] = keep - h
        down = f()
        flat[i] = keep
        out[n] = (up - down) / (2 * h)
    return out


# -- acceptance reporting: one verdict line per criterion --------------------------------

_VERDICTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n = marker.args[0]
    failed = rep.failed and (rep.when == "call" or rep.when == "setup")
    if rep.when == "call" or failed:
        detail = dict(item.user_properties).get("detail", "")
        prev = _VERDICTS.get(n)
        if prev is None or failed:
            _VERDICTS[n] = ("FAIL" if failed else "PASS", detail, item.name)


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_VERDICTS):
        verdict, detail, name = _VERDICTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {verdict}  {detail}".rstrip())

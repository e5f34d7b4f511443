import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from clamsense.scene import ArrayGeometry, PathKind, PathParams, derive_paths, load_bundled_scene
from clamsense.synth import OfdmParams

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running Monte Carlo or full-profile test")


@pytest.fixture
def small_ofdm():
    return OfdmParams(n_sc=16, n_sym=8)


@pytest.fixture
def desk_geom():
    return ArrayGeometry(8, 8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def table3_paths():
    return derive_paths(load_bundled_scene("table3"))


def make_path(az, zen, delay_us=0.0, doppler=0.0, gain=1.0, kind=PathKind.TARGET, label=""):
    return PathParams(complex(gain), delay_us * 1e-6, doppler, az, zen, kind, label)


# ---------------------------------------------------------------- acceptance report

_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def acceptance(request):
    """``acceptance(n, ok, detail)`` records and prints one PASS/FAIL line."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"ACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        _ACCEPTANCE[number] = line
        capman = request.config.pluginmanager.getplugin("capturemanager")
        with capman.global_and_fixture_disabled():
            print("\n" + line, flush=True)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[k])

import numpy as np
import pytest

from selfsteer.dsp import StftConfig
from selfsteer.geom import circular_array, steering_vector
from selfsteer.scene import ScenarioTemplate, generate_scenario


@pytest.fixture(scope="session")
def cfg():
    return StftConfig()


@pytest.fixture(scope="session")
def geom():
    return circular_array()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def short_scene():
    """Two crossing speakers over 80 frames, free field."""
    tpl = ScenarioTemplate(frames=80, require_crossing=False)
    return generate_scenario(tpl, seed=77)


def plane_wave_frame(geom, azimuth, cfg, amplitude=None):
    """Far-field frame ``a_k(azimuth) * s_k`` with unit (or given) source spectrum."""
    a = steering_vector(geom, azimuth, cfg).values
    s = np.ones(cfg.bins) if amplitude is None else amplitude
    return a * s[None, :]


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            if rep.when == "call":
                lines += [v for k, v in rep.user_properties if k == "acceptance"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: s.split("criterion")[1]):
            terminalreporter.write_line(line)

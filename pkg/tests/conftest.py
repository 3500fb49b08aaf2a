import json
import os

import numpy as np
import pytest
from hypothesis import settings

from dualfisheye.pipeline import split_halves
from dualfisheye.synth import SynthConfig, make_test_pano, render_dual
from dualfisheye.unwarp import unwarp_lens

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")

# reproducible property runs
settings.register_profile("repro", derandomize=True, print_blob=True)
settings.load_profile("repro")


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def frozen():
    with open(os.path.join(FIXTURES, "frozen.json")) as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def chart_pano():
    return make_test_pano(512, "chart")


@pytest.fixture(scope="session")
def noise_pano():
    return make_test_pano(512, "noise")


def unwarp_pair(pano, cfg):
    """Render ``pano`` through ``cfg`` and unwarp both halves."""
    front_half, rear_half = split_halves(render_dual(pano, cfg))
    front_lens, rear_lens = cfg.lenses()
    return (unwarp_lens(front_half, front_lens, pano.height),
            unwarp_lens(rear_half, rear_lens, pano.height))


@pytest.fixture(scope="session")
def chart_canvases(chart_pano):
    return unwarp_pair(chart_pano, SynthConfig())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def verdict(request):
    """Record and print one pass/fail line for an acceptance criterion."""
    lines = request.config.stash[_ACCEPTANCE]

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)

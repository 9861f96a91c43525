import sys
from pathlib import Path

import hypothesis
import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

hypothesis.settings.register_profile("default", max_examples=60, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile("default")

from aucoder.geometry import TEMPLATE_POINTS  # noqa: E402
from aucoder.io import KeypointFrame  # noqa: E402
from aucoder.synth import SynthConfig, write_synthetic_suite  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def template_frame():
    return KeypointFrame("s", 0, TEMPLATE_POINTS.copy(), np.ones(68, dtype=bool))


@pytest.fixture(scope="session")
def mini_suite(tmp_path_factory):
    """3 subjects x 5 frames in each layout, plus AU sets."""
    out = tmp_path_factory.mktemp("mini")
    write_synthetic_suite(out, SynthConfig(seed=3))
    return out


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for name in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[name])

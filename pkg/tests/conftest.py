import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("ci", max_examples=40, deadline=None)
settings.load_profile("ci")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_pairs():
    """Eight 64x64 pairs from the procedural moving scene."""
    from msdeblur.blur_synth import generate_dataset
    from msdeblur.synthetic import moving_scene

    seq = moving_scene(80, 64, 4, seed=0, max_speed=2.0)
    return generate_dataset(seq, [7, 9, 11, 13], 8)[:8]


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])

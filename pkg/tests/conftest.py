import os

import numpy as np
import pytest

from fixscan.construction import FSigmaSpec, build_scene

SEED = int(os.environ.get("FIXSCAN_SEED", "20240611"))

SPECS = {
    "point": FSigmaSpec.constant([(0.0, 0.0)]),
    "full": FSigmaSpec.constant([(0.0, 1.0)]),
    "mid": FSigmaSpec.constant([(0.0, 0.0)], [(0.0, 0.0), (0.2, 0.4)]),
    "shrinking": FSigmaSpec((((0.0, 0.0),), ((0.0, 0.0), (0.2, 0.4))), "shrinking", 0.5, 1.0, 0.25),
}


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)


@pytest.fixture(scope="session")
def scenes():
    return {name: build_scene(spec) for name, spec in SPECS.items()}


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

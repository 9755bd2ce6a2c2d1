import numpy as np
import pytest
from hypothesis import settings

from lirpose.simlab import SceneConfig, SceneKind, corrupt_matches, generate_scene

# property tests must be reproducible run to run
settings.register_profile("deterministic", derandomize=True, deadline=None, max_examples=60)
settings.load_profile("deterministic")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_scene(seed, kind="normal", n=30, noise_px=0.0, outlier_fraction=0.0):
    rng = np.random.default_rng(seed)
    scene = generate_scene(SceneConfig(scene_kind=SceneKind(kind), n_points=n), rng)
    return scene, corrupt_matches(scene, noise_px, outlier_fraction, rng)


@pytest.fixture
def normal_scene():
    return make_scene(11)


@pytest.fixture
def planar_scene():
    return make_scene(12, "planar")

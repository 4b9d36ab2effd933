import sys

import numpy as np
import pytest
import torch

from topdown.envgen import GenerationConfig, sample_environment, simulate_episode

torch.set_num_threads(max(1, torch.get_num_threads()))


@pytest.fixture(scope="session")
def small_config():
    return GenerationConfig(episode_length=24)


@pytest.fixture(scope="session")
def episodes(small_config):
    """Four short seeded rotation episodes."""
    return [simulate_episode(sample_environment(s, small_config), config=small_config) for s in range(4)]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    results = {}
    for name, mod in list(sys.modules.items()):
        if name.endswith("test_acceptance") and hasattr(mod, "RESULTS"):
            results.update(mod.RESULTS)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])

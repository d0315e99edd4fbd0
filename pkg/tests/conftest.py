import os

import pytest

from learningFlow.driving_sim import default_scenario
from learningFlow.rl_core import configure_determinism


@pytest.fixture(autouse=True, scope="session")
def deterministic_torch():
    configure_determinism()


@pytest.fixture
def overtaking():
    return default_scenario("overtaking")


@pytest.fixture
def merging():
    return default_scenario("merging")


@pytest.fixture
def write_scripts(tmp_path):
    """Write mock provider scripts: write_scripts({"reward_generation": ["...", ...]})."""
    def _write(scripts, root=None):
        root = root or os.path.join(str(tmp_path), "mock")
        for role, texts in scripts.items():
            role_dir = os.path.join(root, role)
            os.makedirs(role_dir, exist_ok=True)
            for i, text in enumerate(texts, start=1):
                with open(os.path.join(role_dir, f"{i:02d}.txt"), "w", encoding="utf-8") as f:
                    f.write(text)
        return root
    return _write

import sys
from pathlib import Path

import pytest

from loopbench.experiment.envspec import BUNDLED, load_env_spec

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def envs():
    return {name: load_env_spec(name) for name in BUNDLED}


@pytest.fixture(scope="session")
def cube(envs):
    return envs["cube_easy"]

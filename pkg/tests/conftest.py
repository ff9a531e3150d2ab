from concurrent.futures import ThreadPoolExecutor

import pytest

from scenes import identity_camera, small_config
from services.simulator_service import SimulatorService


@pytest.fixture
def config():
    return small_config()


@pytest.fixture
def cameras(config):
    return SimulatorService(config).cameras


@pytest.fixture
def camera():
    return identity_camera()


@pytest.fixture
def executor():
    with ThreadPoolExecutor(max_workers=4) as pool:
        yield pool

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    max_examples=60,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def disk9():
    # 13-pixel diamond: |dr| + |dc| <= 2 around the center of a 9x9 grid
    from segnoise import centered_disk

    return centered_disk((9, 9), radius=2)

import hypothesis
import numpy as np
import pytest

from spectral_frg.model_io import generate_synthetic

hypothesis.settings.register_profile("default", max_examples=100, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def probe_model():
    return generate_synthetic("duplicate_probe", 0)


@pytest.fixture(scope="session")
def resnet_model():
    return generate_synthetic("resnet18_like", 0)

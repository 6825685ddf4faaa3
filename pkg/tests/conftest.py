import numpy as np
import pytest

from vaclab import synth


@pytest.fixture(scope="session")
def calib_images():
    """120 deterministic sample images for corruption calibration."""
    ds = synth.make_dataset(120, seed=7, split="calib")
    return [ds.image(i) for i in range(len(ds))]


@pytest.fixture(scope="session")
def tiny_train():
    return synth.make_dataset(300, seed=11, split="train")


@pytest.fixture(scope="session")
def tiny_test():
    return synth.make_dataset(100, seed=11, split="test")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

import numpy as np
import pytest

from eigsens import EntrySpec, SeedContext


@pytest.fixture
def seed():
    return SeedContext(20240901)


@pytest.fixture
def gaussian_spec():
    return EntrySpec("gaussian")


def unit_vector(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.standard_normal(n)
    return v / np.linalg.norm(v)

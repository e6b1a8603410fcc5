import numpy as np
import pytest

from fuzzy_pmp.fuzzy_core import LevelGrid


@pytest.fixture(scope="session")
def grid11() -> LevelGrid:
    return LevelGrid.uniform(11)


@pytest.fixture(scope="session")
def grid3() -> LevelGrid:
    return LevelGrid((0.0, 0.5, 1.0))


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(20240811)

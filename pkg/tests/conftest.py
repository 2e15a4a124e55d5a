import math
import numpy as np
import pytest

from phunmix.problem import GenerationSpec, Instance, generate_instance
from phunmix.utils import make_rng


@pytest.fixture
def rng():
    return make_rng(12345)


def make_instance(m: int, k: int, snr_db: float = math.inf, seed: int = 0) -> Instance:
    return generate_instance(GenerationSpec(m=m, k=k, snr_db=snr_db, seed=seed))


@pytest.fixture
def square_instance():
    return make_instance(3, 3, seed=7)


@pytest.fixture
def wide_instance():
    return make_instance(2, 3, snr_db=30.0, seed=11)


def random_system(rng: np.random.Generator, m: int, k: int):
    mixing = rng.standard_normal((m, k)) + 1j * rng.standard_normal((m, k))
    estimate = rng.standard_normal(k) + 1j * rng.standard_normal(k)
    observation = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    return mixing, estimate, observation

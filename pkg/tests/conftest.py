from __future__ import annotations

import pytest

from seedgrow.phantom import PhantomSpec, generate
from seedgrow.surrogate import SurrogateTrainConfig, train

TRAIN_SEED_BASE = 2000
TRAIN_COUNT = 100
BENCH_SEED_BASE = 900
BENCH_COUNT = 20


@pytest.fixture(scope="session")
def train_phantoms():
    """Training set for the surrogate and the agent."""
    return [generate(PhantomSpec(rng_seed=TRAIN_SEED_BASE + k))
            for k in range(TRAIN_COUNT)]


@pytest.fixture(scope="session")
def bench_phantoms():
    """Fixed 20-phantom benchmark, held out from all training."""
    return [generate(PhantomSpec(rng_seed=BENCH_SEED_BASE + k))
            for k in range(BENCH_COUNT)]


SURROGATE_TRAIN_SLICE = 40


@pytest.fixture(scope="session")
def bench_surrogate(train_phantoms):
    """Surrogate trained once per session on the first training phantoms."""
    dataset = [(s.volume, s.truth) for s in train_phantoms[:SURROGATE_TRAIN_SLICE]]
    return train(dataset, SurrogateTrainConfig(rng_seed=1))

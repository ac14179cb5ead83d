"""Shared fixtures: small simulated worlds and datasets."""
import numpy as np
import pytest

from auctionope.simulator import PolicySpec, SimConfig, build_world, dataset_from_world


def small_config(seed: int = 11, n: int = 4000, **overrides) -> SimConfig:
    base = dict(
        seed=seed,
        n_auctions=n,
        policy_specs=(
            PolicySpec("logging", sigma=1.0, alignment=1.0),
            PolicySpec("better", sigma=1.0, alignment=1.6, noise_from="logging"),
            PolicySpec("worse", sigma=1.0, alignment=0.6, noise_from="logging"),
        ),
        n_candidates=6,
        n_segments=2,
        n_days=4,
        base_ctr=0.05,
        noise_sigma=0.5,
        ctr_beta_a=0.8,
        ctr_beta_b=5.0,
    )
    base.update(overrides)
    return SimConfig(**base)


@pytest.fixture(scope="session")
def small_world():
    return build_world(small_config())


@pytest.fixture(scope="session")
def small_dataset(small_world):
    return dataset_from_world(small_world)


@pytest.fixture
def rng():
    return np.random.default_rng(20260823)

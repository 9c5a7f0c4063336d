"""Pytest configuration and fixtures."""

import numpy as np
import pytest

from uavchain.core.config import Scheme, SimConfig, default_config
from uavchain.sim.channel import Channel, LinkBudget, LinkKind


@pytest.fixture
def config() -> SimConfig:
    """The shipped default scenario."""
    return default_config()


@pytest.fixture
def small_config() -> SimConfig:
    """A short, sparse scenario that still exercises every event kind."""
    return default_config().with_overrides(
        n_nodes=30, duration_s=20.0, cbr_start_spread_s=10.0, scheme=Scheme.N2N_UAV_BC
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def perfect_channel() -> Channel:
    """Lossless links with long ranges and no usable-range shrinkage."""
    budgets = {
        kind: LinkBudget(kind=kind, max_range_m=10_000.0, base_success=1.0, path_loss_exponent=1e6)
        for kind in LinkKind
    }
    return Channel(budgets=budgets)


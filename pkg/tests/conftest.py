import numpy as np
import pytest

from cvrpreopt.instance import Instance


def random_instance(n, seed, capacity=None, demand_hi=10, grid=100, name=None):
    """Small random instance on an integer grid (rounded distances)."""
    rng = np.random.default_rng(seed)
    coords = rng.integers(0, grid + 1, size=(n + 1, 2)).astype(float)
    demands = np.concatenate([[0], rng.integers(1, demand_hi + 1, size=n)])
    if capacity is None:
        capacity = int(max(demands.max() * 3, demand_hi + 1))
    return Instance(
        name=name or f"rand-n{n}-s{seed}",
        capacity=int(capacity),
        coords=coords,
        demands=demands,
    )


@pytest.fixture
def tiny_instance():
    # depot at origin, two clients on a 3-4-5 triangle
    return Instance(
        name="tiny",
        capacity=10,
        coords=np.array([[0.0, 0.0], [3.0, 4.0], [6.0, 0.0]]),
        demands=np.array([0, 2, 3]),
    )

import os

import numpy as np
import pytest

from vibrompo import ModeSpec, NetworkSpec

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture
def small_dimer_spec():
    """Two sites, one mode each, small truncations: cheap but non-trivial."""
    m1 = ModeSpec(1500.0, 0.1, 1e-3, 300.0, 4)
    m2 = ModeSpec(500.0, 0.1, 1e-2, 300.0, 3)
    return NetworkSpec.create(
        [0.0, 0.0], [[0.0, 500.0], [500.0, 0.0]], [m1], modes_per_site=[[m1], [m2]]
    )


@pytest.fixture
def tiny_q2_dimer_spec():
    """Two sites, two modes per site (like the benchmark dimer, smaller)."""
    m1 = ModeSpec(1500.0, 0.1, 1e-3, 300.0, 4)
    m2 = ModeSpec(500.0, 0.1, 1e-2, 300.0, 3)
    return NetworkSpec.create([0.0, 0.0], [[0.0, 500.0], [500.0, 0.0]], [m1, m2])


def random_mpo(rng, phys_dims, bond):
    """Random chain with the given uniform interior bond dimension."""
    from vibrompo import ConditionalMPO

    m = len(phys_dims)
    tensors = []
    for i, p in enumerate(phys_dims):
        dl = 1 if i == 0 else bond
        dr = 1 if i == m - 1 else bond
        t = rng.standard_normal((dl, p, dr)) + 1j * rng.standard_normal((dl, p, dr))
        tensors.append(t / np.sqrt(dl * p * dr))
    return ConditionalMPO(tensors)

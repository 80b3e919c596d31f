import pytest

import darcy_moments as dm


@pytest.fixture
def small_config():
    """Desk-size configuration shared by recursion-level tests."""
    return dm.default_config().replace(
        mesh=dm.MeshConfig(n=16),
        sparse=dm.SparseConfig(h0=0.25, L=2),
        recursion=dm.RecursionConfig(K=2),
        kernel=dm.KernelConfig("exponential", 0.3, 1.0),
    )


@pytest.fixture
def small_problem(small_config):
    return dm.setup_problem(small_config)

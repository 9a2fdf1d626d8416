from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mfmdp import metropolis  # noqa: E402
from mfmdp.instances import GRID_KAPPA, GRID_MU_STAR, grid_distance_exact, grid_model  # noqa: E402


@pytest.fixture(scope="session")
def grid():
    adj, actions, T, reward = grid_model(1.0)
    kernel = metropolis.build_balance_kernel(GRID_MU_STAR, adj, GRID_KAPPA)
    policy = metropolis.invert_kernel(kernel, 1, actions)
    return {
        "adj": adj,
        "actions": actions,
        "T": T,
        "reward": reward,
        "kernel": kernel,
        "policy_exact": policy,
        "policy": type(policy)(np.asarray(policy.rows, dtype=float), actions),
        "dist_exact": grid_distance_exact(),
        "mu_star": np.array([float(v) for v in GRID_MU_STAR]),
    }


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tgflow import build_basis, validate_params
from tgflow.spectral import Field
from tgflow.trajectory import Trajectory


@pytest.fixture
def params():
    return validate_params(nu=1.0, alpha1=0.5, alpha2=-0.2, beta=0.4)


@pytest.fixture
def basis(params):
    return build_basis(4, params.alpha1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_field(basis, rng, amp=0.3):
    return Field(amp * rng.normal(size=basis.n_modes) / np.sqrt(1.0 + basis.lam), basis)


def random_traj(basis, times, rng, amp=0.3, kind="control"):
    phase = rng.uniform(0.0, 2.0 * np.pi)
    omega = rng.uniform(1.0, 4.0)
    profile = 1.0 + 0.5 * np.sin(omega * times + phase)
    coeffs = profile[:, None] * (amp * rng.normal(size=basis.n_modes) / (1.0 + basis.lam))[None, :]
    return Trajectory(times, coeffs, basis, kind)

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from climb.degradation import build_spatial, build_spectral  # noqa: E402
from climb.model import make_special_shape  # noqa: E402
from climb.regularization import RegConfig  # noqa: E402
from climb.solver import CoupledProblem  # noqa: E402
from climb.synth import SyntheticSpec, generate  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end recovery experiments")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="module")
def desk():
    """Noiseless 24x24x32 SRI, ratio 2, K_M=8, R=2, ranks (3,3,3)."""
    return generate(SyntheticSpec())


def small_problem(lam=0.1, eta=0.05, blind=False, seed=7):
    """6x6x8 SRI, 3x3 HSI grid, 4 MSI bands; observations are noisy, not model-exact."""
    rng = np.random.default_rng(seed)
    P1 = build_spatial(6, 2, 3, 0.8)
    P2 = build_spatial(6, 2, 3, 0.8)
    PM = build_spectral(8, [[0, 1], [2, 3], [4, 5], [6, 7]])
    sri = rng.standard_normal((6, 6, 8))
    Y_H = np.einsum("ai,bj,ijk->abk", P1, P2, sri) + 0.1 * rng.standard_normal((3, 3, 8))
    Y_M = np.einsum("ck,ijk->ijc", PM, sri) + 0.1 * rng.standard_normal((6, 6, 4))
    reg = RegConfig(lam=lam, eta=eta)
    if blind:
        prob = CoupledProblem(Y_H, Y_M, None, None, PM, reg=reg, blind=True)
    else:
        prob = CoupledProblem(Y_H, Y_M, P1, P2, PM, reg=reg)
    model = make_special_shape("LMN", (6, 6, 8), [(2, 2, 2)] * 2, seed)
    return prob, model, (P1, P2, PM)

import numpy as np
import pytest

from slq import ControlledSystem, SystemPair, is_l2_stable


def random_stable_pair(rng, n, max_tries=50):
    """Draw a mean-square stable [A, C] by shifting the drift spectrum left."""
    for _ in range(max_tries):
        A = rng.uniform(-1.0, 1.0, (n, n))
        shift = 0.5 * np.max(np.abs(np.linalg.eigvals(A + A.T))) + rng.uniform(0.3, 1.5)
        A = A - shift * np.eye(n)
        C = rng.uniform(-0.4, 0.4, (n, n))
        pair = SystemPair(A, C)
        if is_l2_stable(pair):
            return pair
    raise RuntimeError("failed to draw a stable pair")


def random_scalar_system(rng):
    """Uniform scalar [A, C; B, D] draw."""
    A, C, B, D = rng.uniform(-3.0, 3.0, 4)
    return ControlledSystem([[A]], [[C]], [[B]], [[D]])


def scalar_coeffs(sys):
    return (float(sys.A[0, 0]), float(sys.C[0, 0]),
            float(sys.B[0, 0]), float(sys.D[0, 0]))


def scalar_stabilizable(sys):
    A, C, B, D = scalar_coeffs(sys)
    return (2.0 * A + C * C) * D * D < (B + C * D) ** 2


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)

import numpy as np
import pytest

import ctmcpath as cp


@pytest.fixture(scope="session")
def two_state():
    """Symmetric two-state chain with unit rates."""
    return cp.validate_rate_matrix([[-1.0, 1.0], [1.0, -1.0]], ["0", "1"])


@pytest.fixture(scope="session")
def hky():
    q, pi = cp.build_hky(cp.HkyParams(kappa=2.0, base_freqs=(0.2, 0.3, 0.3, 0.2)))
    return q, pi


@pytest.fixture(scope="session")
def hky_uncalibrated():
    q, pi = cp.build_hky(cp.HkyParams(kappa=2.0, base_freqs=(0.2, 0.3, 0.3, 0.2), calibrate=False))
    return q, pi


@pytest.fixture(scope="session")
def hky_cpg():
    q, pi = cp.build_hky_cpg(cp.HkyCpgParams(kappa=2.0, nu=(0.3, 0.3, 0.2, 0.2), gamma=20.0))
    return q, pi


@pytest.fixture(scope="session")
def hky_cpg_calibrated():
    q, pi = cp.build_hky_cpg(
        cp.HkyCpgParams(kappa=2.0, nu=(0.3, 0.3, 0.2, 0.2), gamma=20.0, calibrate=True)
    )
    return q, pi


@pytest.fixture(scope="session")
def gy():
    q, pi = cp.build_gy(cp.GyParams(kappa=2.0, omega=0.01))
    return q, pi


def random_path(q, seed, T=1.0):
    """Forward path used as a generic valid-path generator in tests."""
    return cp.forward_sample(q, 0, T, cp.RandomStream(seed))


@pytest.fixture(scope="session")
def paper_coeffs_dense4():
    return cp.CostCoefficients(
        alpha_rejection=0.0165,
        beta_rejection=0.0109,
        alpha_direct=0.2155,
        beta_direct=0.1285,
        alpha_uniformization=0.2286,
        beta_uniformization=0.0143,
    )


@pytest.fixture(scope="session")
def paper_coeffs_sparse61():
    return cp.CostCoefficients(
        alpha_rejection=0.017,
        beta_rejection=0.011,
        alpha_direct=1.072,
        beta_direct=0.305,
        alpha_uniformization=1.124,
        beta_uniformization=0.105,
    )


def assert_close(actual, expected, atol, label=""):
    assert abs(actual - expected) <= atol, f"{label}: {actual!r} vs {expected!r} (atol {atol})"

import numpy as np
import pytest

from heliqsim.electrostatics import CouplingTable, PotentialProfile
from heliqsim.units import derive_units

# detuned and mirror-symmetric double wells on the synthetic table below
DETUNED_VOLTAGES = np.array([0.0, 25.0, 0.0, -20.0, 0.0, 20.0, 0.0])
SYMMETRIC_VOLTAGES = np.array([0.0, 30.0, 0.0, -30.0, 0.0, 30.0, 0.0])


@pytest.fixture(scope="session")
def units():
    return derive_units()


@pytest.fixture(scope="session")
def synth_table():
    """Gaussian-bump coupling table: cheap stand-in for a Laplace solution
    that still satisfies the partition-of-unity and [0, 1] invariants."""
    x = np.linspace(-12.0, 12.0, 481)
    centers = np.linspace(-9.0, 9.0, 7)
    width = 2.2
    alpha = 0.13 * np.exp(-((x[None, :] - centers[:, None]) ** 2) / (2 * width**2))
    return CouplingTable(x_samples=x, alpha=alpha,
                         alpha_ground=1.0 - alpha.sum(axis=0),
                         geometry_hash="synthetic")


def profile_from(f, lo=-12.0, hi=12.0, n=2401):
    x = np.linspace(lo, hi, n)
    return PotentialProfile(x_samples=x, v=f(x))

"""Sinc-function discrete variable representation on per-well grids.

Each well gets its own uniform collocation grid; the two grids share the
spacing and meet at the barrier maximum, with the barrier point owned by the
right grid only.  Restricting each basis to its own side of the barrier acts
as an infinite wall at x_b, which is what decouples the two wells into
distinguishable subsystems.  In this basis local potentials are diagonal
(quadrature rule) and the kinetic matrix has the closed form

    t[a, a] = pi^2 / (6 dx^2),   t[a, b] = (-1)^(a-b) / (dx^2 (a-b)^2).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .electrostatics import PotentialProfile, interpolate_potential
from .units import UnitSystem

MIN_POINTS_PER_WELL = 10


@dataclass(frozen=True)
class DvrGrid:
    """Uniform collocation grid for one well."""

    x_points: np.ndarray
    dx: float
    well_label: str  # "L" or "R"

    @property
    def size(self) -> int:
        return len(self.x_points)


@dataclass(frozen=True)
class OneBodyOperator:
    matrix: np.ndarray
    kind: str  # "kinetic" | "potential" | "hamiltonian"


@dataclass(frozen=True)
class CoulombDiagonal:
    """Interaction values u(x_L, x_R) on the product grid.

    The quadrature rule makes any pointwise two-body kernel diagonal per
    particle axis, so the full two-body interaction is represented by this
    (K_L+1) x (K_R+1) matrix of kernel values.
    """

    u: np.ndarray
    epsilon: float
    kappa: float


def build_grids(profile: PotentialProfile, x_b: float, dx: float,
                margins: tuple[float, float]) -> tuple[DvrGrid, DvrGrid]:
    """Two grids sharing dx, meeting at x_b (owned by the right grid).

    The left grid covers [x_b - margins[0], x_b) and the right grid
    [x_b, x_b + margins[1]]; spans are rounded outward to an integer number of
    cells, then clipped to the sampled profile range.
    """
    if dx <= 0:
        raise ValueError("dx must be positive")
    margin_l, margin_r = margins
    lo = max(x_b - margin_l, profile.x_samples[0])
    hi = min(x_b + margin_r, profile.x_samples[-1])
    n_left = int(np.ceil((x_b - lo) / dx - 1e-12))
    n_right = int(np.ceil((hi - x_b) / dx - 1e-12)) + 1
    # outward rounding may step past the profile edge; pull back inside
    while x_b - n_left * dx < profile.x_samples[0]:
        n_left -= 1
    while x_b + (n_right - 1) * dx > profile.x_samples[-1]:
        n_right -= 1
    if n_left < MIN_POINTS_PER_WELL or n_right < MIN_POINTS_PER_WELL:
        raise ValueError(
            f"margins give {n_left}/{n_right} points per well, need >= {MIN_POINTS_PER_WELL}")
    x_left = x_b - dx * np.arange(n_left, 0, -1)
    x_right = x_b + dx * np.arange(n_right)
    return (DvrGrid(x_points=x_left, dx=dx, well_label="L"),
            DvrGrid(x_points=x_right, dx=dx, well_label="R"))


def auto_margins(profile: PotentialProfile, x_b: float, x_minL: float,
                 x_minR: float, pad: float = 0.5) -> tuple[float, float]:
    """Margins placing the grid ends at the outer confinement of each well.

    Walking outward from each minimum, the grid ends at the first sample
    where v recovers the barrier height v(x_b); if the flank turns back down
    before reaching it, the grid ends at the flank's highest point instead,
    so the simulated region never spills into a neighbouring valley.
    """
    v_b = interpolate_potential(profile, x_b)
    x, v = profile.x_samples, profile.v

    def outward_end(i_min: int, direction: int) -> float:
        i = i_min
        i_peak = i_min
        crossing = None
        while 0 <= i < len(x):
            if v[i] > v[i_peak]:
                i_peak = i
            if v[i] >= v_b:
                crossing = i
                break
            i += direction
        if crossing is None:
            return float(x[i_peak])
        j = crossing
        while (0 <= j + direction < len(x) and v[j + direction] > v[j]
               and abs(x[j + direction] - x[crossing]) <= pad):
            j += direction
        return float(x[j])

    left_end = outward_end(int(np.searchsorted(x, x_minL)), -1)
    right_end = outward_end(int(np.searchsorted(x, x_minR)), +1)
    return (x_b - left_end, right_end - x_b)


def kinetic_matrix(grid: DvrGrid) -> OneBodyOperator:
    n = np.arange(grid.size)
    diff = n[:, None] - n[None, :]
    signs = np.where(diff % 2 == 0, 1.0, -1.0)
    with np.errstate(divide="ignore"):
        t = signs / np.square(diff, dtype=float)
    np.fill_diagonal(t, np.pi**2 / 6.0)
    return OneBodyOperator(matrix=t / grid.dx**2, kind="kinetic")


def potential_matrix(grid: DvrGrid, profile: PotentialProfile) -> OneBodyOperator:
    return OneBodyOperator(
        matrix=np.diag(interpolate_potential(profile, grid.x_points)),
        kind="potential")


def one_body_hamiltonian(grid: DvrGrid, profile: PotentialProfile) -> OneBodyOperator:
    h = kinetic_matrix(grid).matrix + potential_matrix(grid, profile).matrix
    return OneBodyOperator(matrix=h, kind="hamiltonian")


def soft_coulomb_kernel(kappa: float, epsilon: float) -> Callable:
    """Regularized 1D repulsion kappa / sqrt((x1 - x2)^2 + epsilon^2)."""
    def kernel(x1, x2):
        return kappa / np.sqrt((x1 - x2) ** 2 + epsilon**2)
    return kernel


def interaction_diagonal(grid_l: DvrGrid, grid_r: DvrGrid, kernel: Callable,
                         epsilon: float = 0.0, kappa: float = 0.0) -> CoulombDiagonal:
    """Evaluate an arbitrary pointwise kernel on the product grid."""
    u = kernel(grid_l.x_points[:, None], grid_r.x_points[None, :])
    return CoulombDiagonal(u=u, epsilon=epsilon, kappa=kappa)


def coulomb_diagonal(grid_l: DvrGrid, grid_r: DvrGrid, units: UnitSystem,
                     epsilon: float = 1e-2, kappa: float | None = None) -> CoulombDiagonal:
    """Soft-Coulomb interaction values; ``kappa`` defaults to the unit-system value."""
    if epsilon <= 0:
        raise ValueError("shielding parameter epsilon must be positive")
    k = units.kappa if kappa is None else kappa
    return interaction_diagonal(grid_l, grid_r, soft_coulomb_kernel(k, epsilon),
                                epsilon=epsilon, kappa=k)

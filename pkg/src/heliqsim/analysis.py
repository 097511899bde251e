"""Entanglement and spectral observables of the two-body eigenstates.

The bipartition is the two wells.  Entanglement entropy of an eigenstate is
computed from the singular values of its coefficient matrix (the Schmidt
coefficients); squared singular values are the subsystem occupations.
Spectral observables collect the per-well transition frequencies and
anharmonicities from the mean-field eigenvalues, plus interaction-induced
quantities from the two-body energies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ci import TwoBodySpectrum
from .hartree import HartreeBasis
from .units import UnitSystem, energy_to_ghz

ENTROPY_FLOOR = 1e-15  # occupations below this contribute 0 (continuity of x log x)


@dataclass(frozen=True)
class SchmidtDecomposition:
    """C = U diag(sigma) V^T with singular values sorted descending."""

    singular_values: np.ndarray
    left_vectors: np.ndarray
    right_vectors: np.ndarray


@dataclass(frozen=True)
class SpectralObservables:
    """Well frequencies, anharmonicities, detuning, ZZ shift, entropies (GHz / bits).

    omega_A is the first mean-field transition of well A; beta_A the change in
    spacing between the first two transitions; detuning = omega_L - omega_R;
    zeta = E4 - E2 - E1 + E0 over energy-ordered two-body states.
    """

    omega_l: float
    omega_r: float
    beta_l: float
    beta_r: float
    detuning: float
    zeta: float
    entropies: np.ndarray


def schmidt(c: np.ndarray) -> SchmidtDecomposition:
    """Singular value decomposition of a normalized coefficient matrix."""
    norm = np.linalg.norm(c)
    if abs(norm - 1.0) > 1e-10:
        raise ValueError(f"coefficient matrix norm {norm} is not 1")
    u, s, vh = np.linalg.svd(c, full_matrices=False)
    return SchmidtDecomposition(singular_values=s, left_vectors=u, right_vectors=vh.T)


def von_neumann_entropy(decomposition: SchmidtDecomposition) -> float:
    """Entropy in bits: -sum(p log2 p) over squared Schmidt coefficients."""
    p = decomposition.singular_values**2
    p = p[p > ENTROPY_FLOOR]
    return max(0.0, float(-(p * np.log2(p)).sum()))


def state_entropy(c: np.ndarray) -> float:
    return von_neumann_entropy(schmidt(c))


def particle_density(c: np.ndarray, basis: HartreeBasis,
                     dx: float) -> np.ndarray:
    """Total particle density on the concatenated (L then R) grid.

    Normalized so that sum(rho) * dx = 2 (two particles).
    """
    norm = np.linalg.norm(c)
    if abs(norm - 1.0) > 1e-10:
        raise ValueError(f"coefficient matrix norm {norm} is not 1")
    rho_l_orb = c @ c.T  # reduced density matrix of the left subsystem
    rho_r_orb = c.T @ c
    dens_l = np.einsum("ai,ij,aj->a", basis.b_l, rho_l_orb, basis.b_l, optimize=True)
    dens_r = np.einsum("ai,ij,aj->a", basis.b_r, rho_r_orb, basis.b_r, optimize=True)
    return np.concatenate([dens_l, dens_r]) / dx


def orbital_densities(b: np.ndarray, dx: float) -> np.ndarray:
    """|phi_i(x)|^2 per orbital column, normalized to unit integral."""
    return np.abs(b) ** 2 / dx


def spectral_observables(spectrum: TwoBodySpectrum, basis: HartreeBasis,
                         units: UnitSystem) -> SpectralObservables:
    if spectrum.n_states < 6:
        raise ValueError("need at least 6 two-body states")
    if len(basis.eps_l) < 3 or len(basis.eps_r) < 3:
        raise ValueError("need at least 3 mean-field levels per well")
    eps_l = energy_to_ghz(basis.eps_l, units)
    eps_r = energy_to_ghz(basis.eps_r, units)
    omega_l = eps_l[1] - eps_l[0]
    omega_r = eps_r[1] - eps_r[0]
    beta_l = (eps_l[2] - eps_l[1]) - (eps_l[1] - eps_l[0])
    beta_r = (eps_r[2] - eps_r[1]) - (eps_r[1] - eps_r[0])
    e = spectrum.energies
    zeta = energy_to_ghz(e[4] - e[2] - e[1] + e[0], units)
    entropies = np.array([state_entropy(spectrum.coefficients[n])
                          for n in range(spectrum.n_states)])
    return SpectralObservables(omega_l=omega_l, omega_r=omega_r,
                               beta_l=beta_l, beta_r=beta_r,
                               detuning=omega_l - omega_r, zeta=zeta,
                               entropies=entropies)


def label_eigenstates(spectrum: TwoBodySpectrum) -> dict[tuple[int, int], int]:
    """Map each orbital product (i, j) to the eigenstate with the largest
    |C[i, j]|^2, breaking ties toward lower energy."""
    labels: dict[tuple[int, int], int] = {}
    nl, nr = spectrum.basis_dims
    weights = spectrum.coefficients**2
    for i in range(nl):
        for j in range(nr):
            labels[(i, j)] = int(np.argmax(weights[:, i, j]))
    return labels


class SweepBoundaryError(ValueError):
    """Gap minimum fell on the sweep boundary; the sweep range is inadequate."""


def extract_gap_coupling(sweep: list[tuple[float, TwoBodySpectrum]],
                         units: UnitSystem) -> tuple[float, float]:
    """Coupling strength from the minimum E2 - E1 gap along a parameter sweep.

    Returns (lambda_star, g) with g = gap/2 in GHz.  The grid minimum is
    refined by a parabola through the three bracketing points.
    """
    if len(sweep) < 3:
        raise ValueError("need at least 3 sweep points")
    lams = np.array([lam for lam, _ in sweep])
    if np.any(np.diff(lams) <= 0):
        raise ValueError("sweep points must be sorted by parameter")
    gaps = np.array([energy_to_ghz(spec.energies[2] - spec.energies[1], units)
                     for _, spec in sweep])
    k = int(np.argmin(gaps))
    if k == 0 or k == len(gaps) - 1:
        raise SweepBoundaryError(
            f"gap minimum at sweep edge (index {k}); extend the sweep range")
    x1, x2, x3 = lams[k - 1:k + 2]
    y1, y2, y3 = gaps[k - 1:k + 2]
    denom = (x2 - x1) * (y2 - y3) - (x2 - x3) * (y2 - y1)
    if abs(denom) < 1e-300:
        lam_star, gap_star = lams[k], gaps[k]
    else:
        lam_star = x2 - 0.5 * ((x2 - x1) ** 2 * (y2 - y3)
                               - (x2 - x3) ** 2 * (y2 - y1)) / denom
        coeffs = np.polyfit([x1, x2, x3], [y1, y2, y3], 2)
        gap_star = float(np.polyval(coeffs, lam_star))
    return float(lam_star), float(gap_star / 2.0)

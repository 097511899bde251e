"""Exact diagonalization of the two-body Hamiltonian in the orbital product basis.

Operators built on the per-well grids are transformed into the truncated
orbital bases, assembled into the product-basis Hamiltonian

    H[ij, kl] = h_L[i, k] delta[j, l] + delta[i, k] h_R[j, l] + u[ij, kl],

and diagonalized densely.  Pair indices map row-major: (i, j) -> i * (N_R + 1) + j.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .dvr import CoulombDiagonal
from .hartree import HartreeBasis


@dataclass(frozen=True)
class TwoBodySpectrum:
    """Eigenvalues (ascending) and coefficient matrices of the two-body problem.

    ``coefficients[n]`` is the (N_L+1) x (N_R+1) matrix C[i, j] of eigenstate n
    over products of left orbital i and right orbital j, sign-fixed so the
    largest-magnitude coefficient is positive.
    """

    energies: np.ndarray
    coefficients: np.ndarray  # shape (n_states, N_L+1, N_R+1)
    basis_dims: tuple[int, int]

    @property
    def n_states(self) -> int:
        return len(self.energies)


def transform_one_body(h: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Project a grid-basis operator into the orbital basis: B^T h B."""
    if h.shape[0] != b.shape[0]:
        raise ValueError(f"operator dim {h.shape} does not match basis rows {b.shape}")
    return b.T @ h @ b


def transform_two_body(u: CoulombDiagonal, b_l: np.ndarray, b_r: np.ndarray) -> np.ndarray:
    """Orbital-basis interaction tensor u[i, j, k, l] from the grid-diagonal kernel.

    The grid-diagonal structure factorizes the contraction into two small
    matrix products over per-well orbital-pair profiles.
    """
    if u.u.shape != (b_l.shape[0], b_r.shape[0]):
        raise ValueError(f"kernel shape {u.u.shape} does not match bases")
    nl, nr = b_l.shape[1], b_r.shape[1]
    pairs_l = (b_l[:, :, None] * b_l[:, None, :]).reshape(b_l.shape[0], nl * nl)
    pairs_r = (b_r[:, :, None] * b_r[:, None, :]).reshape(b_r.shape[0], nr * nr)
    u_pairs = pairs_l.T @ u.u @ pairs_r  # indexed [ik, jl]
    return u_pairs.reshape(nl, nl, nr, nr).transpose(0, 2, 1, 3)


def assemble_ci(h_l_t: np.ndarray, h_r_t: np.ndarray, u_t: np.ndarray) -> np.ndarray:
    nl, nr = h_l_t.shape[0], h_r_t.shape[0]
    if u_t.shape != (nl, nr, nl, nr):
        raise ValueError(f"interaction tensor shape {u_t.shape} inconsistent "
                         f"with one-body dims {nl}, {nr}")
    h = (np.kron(h_l_t, np.eye(nr)) + np.kron(np.eye(nl), h_r_t)
         + u_t.reshape(nl * nr, nl * nr))
    return h


def diagonalize_ci(h: np.ndarray, basis_dims: tuple[int, int]) -> TwoBodySpectrum:
    if not np.isfinite(h).all():
        raise ValueError("CI matrix contains non-finite entries")
    if not np.allclose(h, h.T, atol=1e-10 * max(1.0, np.abs(h).max())):
        raise ValueError("CI matrix is not symmetric")
    energies, vecs = scipy.linalg.eigh(h)
    nl, nr = basis_dims
    coeffs = np.empty((len(energies), nl, nr))
    for n in range(len(energies)):
        c = vecs[:, n].reshape(nl, nr)
        lead = np.unravel_index(np.argmax(np.abs(c)), c.shape)
        if c[lead] < 0:
            c = -c
        coeffs[n] = c
    return TwoBodySpectrum(energies=energies, coefficients=coeffs, basis_dims=(nl, nr))


def solve_two_body(h_l: np.ndarray, h_r: np.ndarray, u: CoulombDiagonal,
                   basis: HartreeBasis) -> TwoBodySpectrum:
    """Transform grid operators to the orbital basis and diagonalize."""
    h_l_t = transform_one_body(h_l, basis.b_l)
    h_r_t = transform_one_body(h_r, basis.b_r)
    u_t = transform_two_body(u, basis.b_l, basis.b_r)
    h = assemble_ci(h_l_t, h_r_t, u_t)
    return diagonalize_ci(h, (h_l_t.shape[0], h_r_t.shape[0]))

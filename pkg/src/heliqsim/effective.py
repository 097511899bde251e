"""Coupled-oscillator reduction of the two-electron system.

Expanding the trap and the Coulomb repulsion to second order around the
equilibrium positions yields two harmonic modes with a bilinear coupling.
Within the rotating-wave approximation the exchange coupling is
g = omega_C^2 / (2 sqrt(omega_L omega_R)) with omega_C^2 = 2 kappa / d^3,
and the hybridized mode frequencies and the conditional (ZZ) shift follow in
closed form.  Frequencies here are dimensionless unless suffixed _ghz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .electrostatics import PotentialProfile
from .units import UnitSystem

CURVATURE_WINDOW = 7  # samples in the local quadratic fit


class EquilibriumError(RuntimeError):
    """Newton iteration for the equilibrium positions failed to converge."""


@dataclass(frozen=True)
class EffectiveParams:
    x_l: float
    x_r: float
    d: float
    omega_c_sq: float
    omega_l_eff: float
    omega_r_eff: float
    g: float


@dataclass(frozen=True)
class ZetaEffective:
    """Closed-form ZZ shift, with its small-angle approximation for diagnostics."""

    zeta: float
    zeta_small_angle: float
    near_pole: bool


@dataclass(frozen=True)
class ResonatorParams:
    """Readout-resonator coupling inputs (SI-ish lab units)."""

    f_rf_ghz: float = 7.0
    z_rf_ohm: float = 50.0
    dalpha_dx_per_m: float = 0.5e6
    omega_e_ghz: float = 5.0  # electron motional frequency /2pi

    def __post_init__(self):
        if min(self.f_rf_ghz, self.z_rf_ohm, self.omega_e_ghz) <= 0:
            raise ValueError("resonator parameters must be positive")


def _local_fit(profile: PotentialProfile, x: float) -> tuple[float, float, float]:
    """(value, slope, curvature) from a least-squares parabola over the
    CURVATURE_WINDOW samples nearest x.  The sampled profile is piecewise
    linear, so derivatives come from this smoothed local fit."""
    xs, vs = profile.x_samples, profile.v
    half = CURVATURE_WINDOW // 2
    k = int(np.clip(np.searchsorted(xs, x), half, len(xs) - half - 1))
    sl = slice(k - half, k + half + 1)
    c2, c1, c0 = np.polyfit(xs[sl] - x, vs[sl], 2)
    return float(c0), float(c1), float(2.0 * c2)


def equilibrium_positions(profile: PotentialProfile, units: UnitSystem,
                          x_min_l: float, x_min_r: float,
                          kappa: float | None = None,
                          tol: float = 1e-12, rel_tol: float = 1e-9,
                          max_iter: int = 200) -> tuple[float, float, float]:
    """Solve v'(x_L) = -kappa/d^2, v'(x_R) = +kappa/d^2 by damped Newton.

    Seeded at the bare well minima; returns (x_L, x_R, d).  Convergence is
    ``tol`` absolute or ``rel_tol`` of the repulsion slope, whichever is
    looser; on steep production potentials the absolute floor sits below the
    round-off of the local slope fits.
    """
    k = units.kappa if kappa is None else kappa
    x = np.array([x_min_l, x_min_r], dtype=float)

    def tolerance(d):
        slope_scale = max(abs(k) / d**2, np.abs(profile.v).max() / (d + 1.0))
        return max(tol, rel_tol * slope_scale)

    def residual(pos):
        d = pos[1] - pos[0]
        if d <= 0:
            return None, None
        _, s_l, c_l = _local_fit(profile, pos[0])
        _, s_r, c_r = _local_fit(profile, pos[1])
        rep = k / d**2
        f = np.array([s_l + rep, s_r - rep])
        jac = np.array([[c_l + 2 * k / d**3, -2 * k / d**3],
                        [-2 * k / d**3, c_r + 2 * k / d**3]])
        return f, jac

    f, jac = residual(x)
    if f is None:
        raise EquilibriumError("seed positions are not ordered")
    for _ in range(max_iter):
        if np.abs(f).max() < tolerance(x[1] - x[0]):
            return float(x[0]), float(x[1]), float(x[1] - x[0])
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError as exc:
            raise EquilibriumError("singular Jacobian in equilibrium solve") from exc
        scale = 1.0
        for _ in range(60):
            f_new, jac_new = residual(x + scale * step)
            if f_new is not None and np.abs(f_new).max() < np.abs(f).max():
                x = x + scale * step
                f, jac = f_new, jac_new
                break
            scale *= 0.5
        else:
            raise EquilibriumError(
                f"Newton stalled at residual {np.abs(f).max():.3e}; wells too shallow")
    raise EquilibriumError(f"no convergence in {max_iter} iterations")


def effective_params(profile: PotentialProfile, equilibria: tuple[float, float, float],
                     units: UnitSystem, kappa: float | None = None) -> EffectiveParams:
    """Frequencies and exchange coupling from curvatures at the equilibria."""
    x_l, x_r, d = equilibria
    if d <= 0:
        raise ValueError("equilibrium separation must be positive")
    k = units.kappa if kappa is None else kappa
    _, _, curv_l = _local_fit(profile, x_l)
    _, _, curv_r = _local_fit(profile, x_r)
    if curv_l <= 0 or curv_r <= 0:
        raise ValueError(f"non-trapping curvature at an equilibrium "
                         f"({curv_l:.3g}, {curv_r:.3g})")
    omega_c_sq = 2.0 * k / d**3
    omega_l = math.sqrt(curv_l + omega_c_sq)
    omega_r = math.sqrt(curv_r + omega_c_sq)
    g = omega_c_sq / (2.0 * math.sqrt(omega_l * omega_r))
    return EffectiveParams(x_l=x_l, x_r=x_r, d=d, omega_c_sq=omega_c_sq,
                           omega_l_eff=omega_l, omega_r_eff=omega_r, g=g)


def hybrid_modes(omega_l: float, omega_r: float, g: float) -> tuple[float, float]:
    """Eigenfrequencies of the resonantly coupled pair:
    Omega_pm = (omega_L + omega_R)/2 +- sqrt(4 g^2 + Delta^2)/2."""
    if omega_l <= 0 or omega_r <= 0:
        raise ValueError("mode frequencies must be positive")
    s = omega_l + omega_r
    r = math.hypot(2.0 * g, omega_l - omega_r)
    return 0.5 * (s + r), 0.5 * (s - r)


def effective_zeta(g: float, detuning: float, beta_l: float, beta_r: float,
                   pole_tol: float = 1e-9) -> ZetaEffective:
    """ZZ shift zeta = sqrt(2) g (tan(theta_R/2) - tan(theta_L/2)) with
    tan(theta_L) = 2 sqrt(2) g / (detuning + beta_L) and
    tan(theta_R) = 2 sqrt(2) g / (detuning - beta_R).

    Vanishes identically for beta_R = -beta_L.  Near a resonance pole
    (vanishing denominator) the exact form stays finite but the mixing-angle
    branch flips; the result is flagged rather than rejected so sweeps can
    pass through the degeneracy.
    """
    den_l = detuning + beta_l
    den_r = detuning - beta_r
    scale = max(abs(detuning), abs(beta_l), abs(beta_r), abs(g), 1e-30)
    near_pole = min(abs(den_l), abs(den_r)) < pole_tol * scale
    theta_l = math.atan2(2.0 * math.sqrt(2.0) * g, den_l)
    theta_r = math.atan2(2.0 * math.sqrt(2.0) * g, den_r)
    zeta = math.sqrt(2.0) * g * (math.tan(theta_r / 2.0) - math.tan(theta_l / 2.0))
    if near_pole:
        small = math.nan
    else:
        small = 2.0 * g**2 / den_r - 2.0 * g**2 / den_l
    return ZetaEffective(zeta=zeta, zeta_small_angle=small, near_pole=near_pole)


def resonator_coupling(params: ResonatorParams, units: UnitSystem) -> float:
    """Electron-resonator coupling g_RF/2pi in MHz:
    e * f_RF * (dalpha/dx) * sqrt(Z_RF / (m_e omega_e)), evaluated as printed.
    """
    c = units.constants
    omega_e = 2.0 * math.pi * params.omega_e_ghz * 1e9
    g_hz = (c.e * params.f_rf_ghz * 1e9 * params.dalpha_dx_per_m
            * math.sqrt(params.z_rf_ohm / (c.m_e * omega_e)))
    return g_hz / 1e6

"""Voltage-configuration search: full pipeline evaluation, cost functions,
finite-difference gradients, ADAM descent, and the linear voltage sweep.

A single evaluation composes: potential assembly -> barrier split -> per-well
sinc grids -> mean-field orbitals -> product-basis diagonalization ->
observables.  Gradients are central finite differences of converged pipeline
outputs; the iterative solvers inside the pipeline make algorithmic
differentiation unattractive, and the cost landscape is smooth away from
level crossings.
"""

from __future__ import annotations

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import analysis, ci, dvr, electrostatics, hartree
from .analysis import SpectralObservables
from .ci import TwoBodySpectrum
from .electrostatics import CouplingTable, NotADoubleWellError, PotentialProfile
from .hartree import HartreeBasis
from .units import UnitSystem

logger = logging.getLogger(__name__)

N_ELECTRODES = 7
VOLTAGE_BOUND_MV = 1000.0

# exceptions that mark a voltage configuration as unusable rather than a bug
INVALID_WELL_ERRORS = (NotADoubleWellError, hartree.ScfError)

# Hand-tuned starting point.  The left well is the merged flat-bottomed pair
# above electrodes 2-3 (the slight 2/3 imbalance holds it just past the
# splitting threshold, which is what makes its anharmonicity positive); the
# right well is a softer single bump above electrodes 5-6; the negative
# centre electrode sets the barrier.  Gives a clean detuned double well with
# both transitions near the 9-11 GHz targets.
DEFAULT_SEED_VOLTAGES = np.array([0.0, 62.0, 72.85, -31.0, 8.0, 8.0, 0.0])


@dataclass(frozen=True)
class VoltageVector:
    v: np.ndarray
    label: str = ""

    def __post_init__(self):
        arr = np.asarray(self.v, dtype=float)
        object.__setattr__(self, "v", arr)
        if arr.shape != (N_ELECTRODES,):
            raise ValueError(f"expected {N_ELECTRODES} voltages, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("voltages must be finite")
        if np.abs(arr).max() > VOLTAGE_BOUND_MV:
            raise ValueError(f"|V| exceeds the {VOLTAGE_BOUND_MV} mV sanity bound")


@dataclass(frozen=True)
class PipelineSettings:
    points_per_well: int = 400
    n_orbitals_per_well: int = 6
    scf_tol: float = 1e-10
    scf_max_iter: int = 500
    epsilon: float = 1e-2
    kappa: float | None = None  # None -> unit-system value
    kappa_scale: float = 1.0
    margin_pad: float = 0.5
    cache_size: int = 256  # evaluations kept; gradient stencils reuse recent ones


@dataclass(frozen=True)
class PipelineResult:
    spectrum: TwoBodySpectrum
    observables: SpectralObservables
    basis: HartreeBasis
    grid_l: dvr.DvrGrid
    grid_r: dvr.DvrGrid
    profile: PotentialProfile
    barrier: tuple[float, float, float]  # (x_b, x_minL, x_minR)


class Pipeline:
    """Deterministic voltages -> spectrum evaluator with memoization.

    Results are cached by the voltage bytes; repeated evaluation of identical
    voltages returns the identical object.  Sequential evaluations warm-start
    the mean-field iteration from the previous converged density, which is a
    large speedup for gradient stencils; pass ``warm=False`` (or construct
    with ``warm_start=False``) for history-independent solves.
    """

    def __init__(self, table: CouplingTable, units: UnitSystem,
                 settings: PipelineSettings = PipelineSettings(),
                 warm_start: bool = True):
        from collections import OrderedDict

        self.table = table
        self.units = units
        self.settings = settings
        self.warm_start = warm_start
        self._cache: OrderedDict[bytes, PipelineResult] = OrderedDict()
        self._cache_lock = threading.Lock()
        # (x_l, rho_l, x_r, rho_r) of the most recent converged ground orbitals
        self._last_density: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray] | None = None

    @property
    def kappa_eff(self) -> float:
        base = self.units.kappa if self.settings.kappa is None else self.settings.kappa
        return base * self.settings.kappa_scale

    def evaluate(self, voltages, warm: bool | None = None) -> PipelineResult:
        v = voltages.v if isinstance(voltages, VoltageVector) else np.asarray(voltages, float)
        key = v.tobytes()
        with self._cache_lock:
            hit = self._cache.get(key)
            if hit is not None:
                self._cache.move_to_end(key)
                return hit
        result = self._evaluate(v, self.warm_start if warm is None else warm)
        with self._cache_lock:
            self._cache[key] = result
            while len(self._cache) > self.settings.cache_size:
                self._cache.popitem(last=False)
        return result

    def _evaluate(self, v: np.ndarray, warm: bool) -> PipelineResult:
        s = self.settings
        profile = electrostatics.assemble_potential(self.table, v, self.units)
        x_b, x_min_l, x_min_r = electrostatics.find_barrier(profile)
        margins = dvr.auto_margins(profile, x_b, x_min_l, x_min_r, pad=s.margin_pad)
        span = margins[0] + margins[1]
        dx = span / (2 * s.points_per_well)
        grid_l, grid_r = dvr.build_grids(profile, x_b, dx, margins)

        # reference energies to the barrier top; the per-well offsets cancel in
        # all observables and the smaller magnitudes help the eigensolver
        v_b = electrostatics.interpolate_potential(profile, x_b)
        shifted = PotentialProfile(x_samples=profile.x_samples, v=profile.v - v_b,
                                   voltages_mv=profile.voltages_mv)
        h_l = dvr.one_body_hamiltonian(grid_l, shifted)
        h_r = dvr.one_body_hamiltonian(grid_r, shifted)
        u = dvr.coulomb_diagonal(grid_l, grid_r, self.units, epsilon=s.epsilon,
                                 kappa=self.kappa_eff)

        init = None
        if warm and self._last_density is not None:
            # carry the previous ground densities onto the new grids; nearby
            # voltage configurations then converge in a few sweeps
            x_l_prev, rho_l_prev, x_r_prev, rho_r_prev = self._last_density
            rho_l = np.clip(np.interp(grid_l.x_points, x_l_prev, rho_l_prev, left=0, right=0), 0, None)
            rho_r = np.clip(np.interp(grid_r.x_points, x_r_prev, rho_r_prev, left=0, right=0), 0, None)
            if rho_l.sum() > 0.5 and rho_r.sum() > 0.5:
                init = (rho_l / rho_l.sum(), rho_r / rho_r.sum())
        basis = hartree.scf_solve(h_l, h_r, u,
                                  n_l=s.n_orbitals_per_well - 1,
                                  n_r=s.n_orbitals_per_well - 1,
                                  tol=s.scf_tol, max_iter=s.scf_max_iter,
                                  initial_density=init)
        if not basis.converged:
            raise hartree.ScfError(
                f"mean-field iteration did not converge in {s.scf_max_iter} steps")
        if warm:
            rho_l, rho_r = hartree.ground_densities(basis)
            self._last_density = (grid_l.x_points, rho_l, grid_r.x_points, rho_r)

        spectrum = ci.solve_two_body(h_l.matrix, h_r.matrix, u, basis)
        observables = analysis.spectral_observables(spectrum, basis, self.units)
        return PipelineResult(spectrum=spectrum, observables=observables, basis=basis,
                              grid_l=grid_l, grid_r=grid_r, profile=profile,
                              barrier=(x_b, x_min_l, x_min_r))


@dataclass(frozen=True)
class ConfigTargets:
    """Target observables (GHz) for the two optimized configurations."""

    omega_l: float = 11.0
    omega_r: float = 9.0
    beta_l: float = 1.0
    beta_r: float = -1.0
    detuning_iii: float = -1.0
    entropies_iii: tuple[float, float, float] = (1.5, 1.0, 1.5)


def cost_config_i(obs: SpectralObservables,
                  targets: ConfigTargets = ConfigTargets()) -> float:
    """Quadratic distance of well frequencies and anharmonicities from target."""
    return ((obs.omega_l - targets.omega_l) ** 2
            + (obs.omega_r - targets.omega_r) ** 2
            + (obs.beta_l - targets.beta_l) ** 2
            + (obs.beta_r - targets.beta_r) ** 2)


def cost_config_iii(obs: SpectralObservables,
                    targets: ConfigTargets = ConfigTargets()) -> float:
    """Entropy-targeted cost for the triple-degeneracy configuration."""
    if len(obs.entropies) < 6:
        raise ValueError("need entropies for at least 6 states")
    s = obs.entropies
    t3, t4, t5 = targets.entropies_iii
    return (s[1] ** 2 + s[2] ** 2
            + (s[3] - t3) ** 2 + (s[4] - t4) ** 2 + (s[5] - t5) ** 2
            + (obs.beta_l - targets.beta_l) ** 2
            + (obs.beta_r - targets.beta_r) ** 2
            + (obs.detuning - targets.detuning_iii) ** 2)


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    max_iters: int = 20000
    cost_tol: float = 1e-6
    fd_step: float = 1e-3

    def __post_init__(self):
        if self.learning_rate <= 0 or self.fd_step <= 0:
            raise ValueError("learning_rate and fd_step must be positive")


def fd_gradient(cost: Callable[[np.ndarray], float], v: np.ndarray,
                fd_step: float) -> np.ndarray:
    """Central-difference gradient; falls back to a one-sided difference when a
    stencil point leaves the valid double-well region."""
    v = np.asarray(v, dtype=float)
    grad = np.zeros_like(v)
    c0 = None
    for i in range(len(v)):
        vp = v.copy()
        vp[i] += fd_step
        vm = v.copy()
        vm[i] -= fd_step
        try:
            cp = cost(vp)
        except INVALID_WELL_ERRORS:
            cp = None
        try:
            cm = cost(vm)
        except INVALID_WELL_ERRORS:
            cm = None
        if cp is not None and cm is not None:
            grad[i] = (cp - cm) / (2 * fd_step)
        elif cp is None and cm is None:
            raise NotADoubleWellError(f"both stencil points invalid on coordinate {i}")
        else:
            if c0 is None:
                c0 = cost(v)
            one = cp if cp is not None else cm
            sign = 1.0 if cp is not None else -1.0
            grad[i] = sign * (one - c0) / fd_step
            logger.warning("one-sided difference on electrode %d", i + 1)
    return grad


@dataclass
class AdamResult:
    voltages: np.ndarray
    cost: float
    history: list[dict] = field(default_factory=list)
    converged: bool = False
    failed: bool = False
    iterations: int = 0


def adam_minimize(cost: Callable[[np.ndarray], float], v0: np.ndarray,
                  cfg: OptimizerConfig = OptimizerConfig(),
                  callback: Callable[[dict], None] | None = None) -> AdamResult:
    """Standard ADAM descent with central-difference gradients.

    Stops when the cost drops below ``cfg.cost_tol`` or ``cfg.max_iters`` is
    reached.  The best-seen iterate is returned, so the result never has a
    higher cost than the starting point.  A step that lands outside the valid
    region is retried at a tenth of the length, then skipped.
    """
    v = np.asarray(v0, dtype=float).copy()
    c = cost(v)
    if not np.isfinite(c):
        raise ValueError("cost is not finite at the starting point")
    best_v, best_c = v.copy(), c
    result = AdamResult(voltages=best_v, cost=best_c)
    record = {"iter": 0, "cost": c, "voltages_mv": v.tolist()}
    result.history.append(record)
    if callback:
        callback(record)
    if c < cfg.cost_tol:
        result.converged = True
        return result

    m = np.zeros_like(v)
    s = np.zeros_like(v)
    rejected_streak = 0
    for t in range(1, cfg.max_iters + 1):
        try:
            g = fd_gradient(cost, v, cfg.fd_step)
        except INVALID_WELL_ERRORS:
            logger.warning("gradient unavailable at iteration %d, stopping", t)
            result.failed = True
            break
        if not np.isfinite(g).all():
            logger.warning("non-finite gradient at iteration %d, stopping", t)
            result.failed = True
            break
        m = cfg.adam_beta1 * m + (1 - cfg.adam_beta1) * g
        s = cfg.adam_beta2 * s + (1 - cfg.adam_beta2) * g * g
        m_hat = m / (1 - cfg.adam_beta1**t)
        s_hat = s / (1 - cfg.adam_beta2**t)
        step = cfg.learning_rate * m_hat / (np.sqrt(s_hat) + cfg.adam_eps)

        c_new = None
        for scale in (1.0, 0.1):
            try:
                c_new = cost(v - scale * step)
            except INVALID_WELL_ERRORS:
                continue
            if np.isfinite(c_new):
                v = v - scale * step
                if scale != 1.0:
                    logger.warning("iteration %d: reduced step by %gx", t, scale)
                break
            c_new = None
        if c_new is None:
            rejected_streak += 1
            logger.warning("iteration %d: step rejected, keeping iterate", t)
            if rejected_streak >= 10:
                logger.warning("10 consecutive rejected steps, stopping")
                result.failed = True
                break
            c_new = c
        else:
            rejected_streak = 0
        c = c_new
        if c < best_c:
            best_c, best_v = c, v.copy()
        result.iterations = t
        record = {"iter": t, "cost": c, "voltages_mv": v.tolist()}
        result.history.append(record)
        if callback:
            callback(record)
        if c < cfg.cost_tol:
            result.converged = True
            break

    result.voltages = best_v
    result.cost = best_c
    return result


def make_cost(pipeline: Pipeline, target: str,
              targets: ConfigTargets = ConfigTargets()) -> Callable[[np.ndarray], float]:
    if target == "I":
        return lambda v: cost_config_i(pipeline.evaluate(v).observables, targets)
    if target == "III":
        return lambda v: cost_config_iii(pipeline.evaluate(v).observables, targets)
    raise ValueError(f"unknown target {target!r}, expected 'I' or 'III'")


def optimize_voltages(pipeline: Pipeline, target: str,
                      cfg: OptimizerConfig = OptimizerConfig(),
                      seed: np.ndarray | None = None,
                      targets: ConfigTargets = ConfigTargets(),
                      restarts: int = 0, restart_scale_mv: float = 20.0,
                      rng_seed: int = 0,
                      callback: Callable[[dict], None] | None = None) -> AdamResult:
    """Run ADAM from the seed, optionally retrying from random perturbations.

    Restart k perturbs the seed by uniform(+-restart_scale_mv) with a seeded
    generator; the lowest-cost result wins.
    """
    seed = DEFAULT_SEED_VOLTAGES.copy() if seed is None else np.asarray(seed, float)
    cost = make_cost(pipeline, target, targets)
    best = adam_minimize(cost, seed, cfg, callback=callback)
    rng = np.random.default_rng(rng_seed)
    for k in range(restarts):
        trial_seed = seed + rng.uniform(-restart_scale_mv, restart_scale_mv, size=len(seed))
        try:
            trial = adam_minimize(cost, trial_seed, cfg, callback=callback)
        except INVALID_WELL_ERRORS as exc:
            logger.warning("restart %d failed: %s", k + 1, exc)
            continue
        if trial.cost < best.cost:
            best = trial
        if best.converged:
            break
    return best


def parametrize(v_i: np.ndarray, v_iii: np.ndarray, lam: float) -> np.ndarray:
    """Affine voltage interpolation; lam=0 gives v_i, lam=1 gives v_iii, and
    values outside [0, 1] extrapolate."""
    return (1.0 - lam) * np.asarray(v_i, float) + lam * np.asarray(v_iii, float)


@dataclass
class SweepRecord:
    lam: float
    voltages_mv: np.ndarray
    error: str | None = None
    transitions_ghz: np.ndarray | None = None  # E_n - E_0, n = 1..5
    entropies: np.ndarray | None = None  # S_1..S_5
    beta_l: float | None = None
    beta_r: float | None = None
    detuning: float | None = None
    zeta: float | None = None
    tracking: tuple[int, ...] | None = None  # energy-ordered index -> persistent label
    result: PipelineResult | None = None


def _assign_labels(prev: TwoBodySpectrum, curr: TwoBodySpectrum,
                   n_track: int) -> tuple[np.ndarray, float]:
    """Match current eigenstates to previous ones by coefficient overlap."""
    from scipy.optimize import linear_sum_assignment

    a = prev.coefficients[:n_track].reshape(n_track, -1)
    b = curr.coefficients[:n_track].reshape(n_track, -1)
    overlap = np.abs(a @ b.T)
    rows, cols = linear_sum_assignment(-overlap)
    perm = np.empty(n_track, dtype=int)
    perm[cols] = rows
    return perm, float(overlap[rows, cols].min())


def _track_through(pipeline: Pipeline, v_i, v_iii, lam_a: float,
                   spec_a: TwoBodySpectrum, lam_b: float, spec_b: TwoBodySpectrum,
                   n_track: int, min_overlap: float, depth: int) -> np.ndarray:
    perm, worst = _assign_labels(spec_a, spec_b, n_track)
    if worst >= min_overlap or depth <= 0:
        if worst < min_overlap:
            logger.warning("tracking overlap %.3f below %.2f between lambda %.4f and %.4f",
                           worst, min_overlap, lam_a, lam_b)
        return perm
    lam_m = 0.5 * (lam_a + lam_b)
    try:
        spec_m = pipeline.evaluate(parametrize(v_i, v_iii, lam_m)).spectrum
    except INVALID_WELL_ERRORS:
        return perm
    first = _track_through(pipeline, v_i, v_iii, lam_a, spec_a, lam_m, spec_m,
                           n_track, min_overlap, depth - 1)
    second = _track_through(pipeline, v_i, v_iii, lam_m, spec_m, lam_b, spec_b,
                            n_track, min_overlap, depth - 1)
    return first[second]


def sweep(pipeline: Pipeline, v_i: np.ndarray, v_iii: np.ndarray,
          lambdas: np.ndarray, n_track: int = 6, min_overlap: float = 0.5,
          max_refine: int = 3, jobs: int = 1) -> list[SweepRecord]:
    """Evaluate the pipeline along the voltage interpolation path.

    Per-point failures are recorded and the sweep continues.  Eigenstate
    labels are tracked between consecutive points by maximum coefficient
    overlap, bisecting the interval (up to ``max_refine`` levels) when the
    match is ambiguous.  With ``jobs > 1`` the points are evaluated in a
    thread pool with warm-starting disabled so results stay schedule-independent.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    records: list[SweepRecord] = []

    def evaluate_one(lam: float) -> SweepRecord:
        v = parametrize(v_i, v_iii, lam)
        rec = SweepRecord(lam=float(lam), voltages_mv=v)
        try:
            res = pipeline.evaluate(v, warm=False if jobs > 1 else None)
        except INVALID_WELL_ERRORS as exc:
            rec.error = f"{type(exc).__name__}: {exc}"
            return rec
        obs = res.observables
        e = res.spectrum.energies
        rec.result = res
        rec.transitions_ghz = (e[1:6] - e[0]) * pipeline.units.freq_unit
        rec.entropies = obs.entropies[1:6].copy()
        rec.beta_l, rec.beta_r = obs.beta_l, obs.beta_r
        rec.detuning, rec.zeta = obs.detuning, obs.zeta
        return rec

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(evaluate_one, lambdas))
    else:
        records = [evaluate_one(lam) for lam in lambdas]

    # chain eigenstate labels across successful points
    prev: SweepRecord | None = None
    for rec in records:
        if rec.result is None:
            continue
        if prev is None:
            rec.tracking = tuple(range(n_track))
        else:
            perm = _track_through(pipeline, v_i, v_iii, prev.lam, prev.result.spectrum,
                                  rec.lam, rec.result.spectrum, n_track,
                                  min_overlap, max_refine)
            rec.tracking = tuple(int(prev.tracking[p]) for p in perm)
        prev = rec
    return records

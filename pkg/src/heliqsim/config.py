"""Run configuration: JSON schema with explicit unit suffixes, defaults,
validation, and a stable hash for output provenance."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .electrostatics import DeviceGeometry
from .optimizer import OptimizerConfig, PipelineSettings
from .units import UnitSystem, derive_units


class ConfigError(ValueError):
    """Malformed run configuration; message names the offending field."""


@dataclass(frozen=True)
class SweepSettings:
    lambda_start: float = 0.0
    lambda_stop: float = 1.0
    points: int = 51


@dataclass(frozen=True)
class OptimizeSettings:
    learning_rate_mv: float = 0.1
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    max_iters: int = 3000
    cost_tol_i: float = 1e-3
    cost_tol_iii: float = 0.02
    fd_step_mv: float = 1e-3
    restarts: int = 0
    restart_scale_mv: float = 20.0
    rng_seed: int = 1

    def to_optimizer_config(self, target: str) -> OptimizerConfig:
        return OptimizerConfig(
            learning_rate=self.learning_rate_mv,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            adam_eps=self.adam_eps,
            max_iters=self.max_iters,
            cost_tol=self.cost_tol_i if target == "I" else self.cost_tol_iii,
            fd_step=self.fd_step_mv,
        )


@dataclass(frozen=True)
class RunConfig:
    geometry: DeviceGeometry = field(default_factory=DeviceGeometry)
    x0_nm: float = 123.0
    pipeline: PipelineSettings = field(default_factory=PipelineSettings)
    optimize: OptimizeSettings = field(default_factory=OptimizeSettings)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    output_dir: str = "out"
    cache_dir: str | None = None  # None -> <output_dir>/cache

    def units(self) -> UnitSystem:
        return derive_units(self.x0_nm)

    def resolved_cache_dir(self) -> Path:
        return Path(self.cache_dir) if self.cache_dir else Path(self.output_dir) / "cache"

    def config_hash(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True, default=repr)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _take(section: dict, key: str, default, kind, context: str):
    value = section.pop(key, default)
    if value is None and default is None:
        return None
    try:
        return kind(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{context}.{key}: expected {kind.__name__}, got {value!r}") from exc


def _reject_unknown(section: dict, context: str):
    if section:
        raise ConfigError(f"unknown field(s) in {context}: {', '.join(sorted(section))}")


def load_config(path: str | Path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> RunConfig:
    raw = dict(raw)

    geo = dict(raw.pop("geometry", {}))
    try:
        geometry = DeviceGeometry(
            channel_width=_take(geo, "channel_width_um", 3.0, float, "geometry") * 1e-6,
            channel_depth=_take(geo, "channel_depth_um", 0.5, float, "geometry") * 1e-6,
            electrode_width=_take(geo, "electrode_width_nm", 200.0, float, "geometry") * 1e-9,
            electrode_gap=_take(geo, "electrode_gap_nm", 200.0, float, "geometry") * 1e-9,
            n_electrodes=_take(geo, "n_electrodes", 7, int, "geometry"),
            grid_spacing=_take(geo, "grid_spacing_nm", 5.0, float, "geometry") * 1e-9,
            surface_height=_take(geo, "surface_height_um", 0.32, float, "geometry") * 1e-6,
        )
    except ValueError as exc:
        raise ConfigError(f"geometry: {exc}") from exc
    _reject_unknown(geo, "geometry")

    x0_nm = _take(raw, "x0_nm", 123.0, float, "root")
    if x0_nm <= 0:
        raise ConfigError("x0_nm: must be positive")

    dvr_sec = dict(raw.pop("dvr", {}))
    hart = dict(raw.pop("hartree", {}))
    inter = dict(raw.pop("interaction", {}))
    try:
        pipeline = PipelineSettings(
            points_per_well=_take(dvr_sec, "points_per_well", 400, int, "dvr"),
            margin_pad=_take(dvr_sec, "margin_pad_x0", 0.5, float, "dvr"),
            n_orbitals_per_well=_take(hart, "n_orbitals_per_well", 6, int, "hartree"),
            scf_tol=_take(hart, "tol", 1e-10, float, "hartree"),
            scf_max_iter=_take(hart, "max_iter", 500, int, "hartree"),
            epsilon=_take(inter, "epsilon", 1e-2, float, "interaction"),
            kappa=_take(inter, "kappa", None, float, "interaction"),
            kappa_scale=_take(inter, "kappa_scale", 1.0, float, "interaction"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    _reject_unknown(dvr_sec, "dvr")
    _reject_unknown(hart, "hartree")
    _reject_unknown(inter, "interaction")
    if pipeline.points_per_well < 20:
        raise ConfigError("dvr.points_per_well: need at least 20")
    if pipeline.n_orbitals_per_well < 3:
        raise ConfigError("hartree.n_orbitals_per_well: need at least 3")
    if pipeline.epsilon <= 0:
        raise ConfigError("interaction.epsilon: must be positive")
    if pipeline.kappa_scale < 0:
        raise ConfigError("interaction.kappa_scale: must be non-negative")

    opt = dict(raw.pop("optimizer", {}))
    try:
        optimize = OptimizeSettings(
            learning_rate_mv=_take(opt, "learning_rate_mv", 0.1, float, "optimizer"),
            adam_beta1=_take(opt, "adam_beta1", 0.9, float, "optimizer"),
            adam_beta2=_take(opt, "adam_beta2", 0.999, float, "optimizer"),
            adam_eps=_take(opt, "adam_eps", 1e-8, float, "optimizer"),
            max_iters=_take(opt, "max_iters", 3000, int, "optimizer"),
            cost_tol_i=_take(opt, "cost_tol_i", 1e-3, float, "optimizer"),
            cost_tol_iii=_take(opt, "cost_tol_iii", 0.02, float, "optimizer"),
            fd_step_mv=_take(opt, "fd_step_mv", 1e-3, float, "optimizer"),
            restarts=_take(opt, "restarts", 0, int, "optimizer"),
            restart_scale_mv=_take(opt, "restart_scale_mv", 20.0, float, "optimizer"),
            rng_seed=_take(opt, "rng_seed", 1, int, "optimizer"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    _reject_unknown(opt, "optimizer")
    if optimize.learning_rate_mv <= 0 or optimize.fd_step_mv <= 0:
        raise ConfigError("optimizer: learning_rate_mv and fd_step_mv must be positive")

    sweep_sec = dict(raw.pop("sweep", {}))
    sweep = SweepSettings(
        lambda_start=_take(sweep_sec, "lambda_start", 0.0, float, "sweep"),
        lambda_stop=_take(sweep_sec, "lambda_stop", 1.0, float, "sweep"),
        points=_take(sweep_sec, "points", 51, int, "sweep"),
    )
    _reject_unknown(sweep_sec, "sweep")
    if sweep.points < 1 or sweep.lambda_stop < sweep.lambda_start:
        raise ConfigError("sweep: need points >= 1 and lambda_stop >= lambda_start")

    output_dir = _take(raw, "output_dir", "out", str, "root")
    cache_dir = raw.pop("cache_dir", None)
    if cache_dir is not None and not isinstance(cache_dir, str):
        raise ConfigError("cache_dir: expected string path")
    _reject_unknown(raw, "config root")
    return RunConfig(geometry=geometry, x0_nm=x0_nm, pipeline=pipeline,
                     optimize=optimize, sweep=sweep, output_dir=output_dir,
                     cache_dir=cache_dir)

"""Command-line pipeline driver.

Subcommands::

    heliqsim solve-laplace --config run.json
    heliqsim spectrum      --config run.json --voltages volts.csv [--column I]
    heliqsim optimize      --config run.json --target I|III [--seed-voltages file]
    heliqsim sweep         --config run.json --vi file --viii file --lambda 0:2:101

Exit codes: 0 success, 1 config error, 2 electrostatics failure, 3 invalid
well, 4 optimization did not reach tolerance (artifacts still written).

Structured results are JSON; plot-ready series are CSV.  Every output embeds
(or carries a sidecar with) the config hash; timestamps live only in the
provenance blocks so repeated runs produce identical data files.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import analysis, electrostatics, optimizer
from .analysis import SweepBoundaryError, extract_gap_coupling
from .config import ConfigError, RunConfig, load_config
from .effective import effective_zeta
from .electrostatics import ElectrostaticsError, NotADoubleWellError
from .hartree import ScfError
from .optimizer import (DEFAULT_SEED_VOLTAGES, Pipeline, SweepRecord,
                        VoltageVector, optimize_voltages, parametrize, sweep)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ELECTROSTATICS = 2
EXIT_INVALID_WELL = 3
EXIT_OPT_SHORTFALL = 4


def _provenance(config: RunConfig, **extra) -> dict:
    return {
        "config_hash": config.config_hash(),
        "timestamp": datetime.now(timezone.utc).isoformat(),
        **extra,
    }


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_voltage_table(path: Path, columns: dict[str, np.ndarray]) -> None:
    """Voltage table CSV: rows V1..V7, one column per configuration."""
    names = list(columns)
    n = len(next(iter(columns.values())))
    lines = ["electrode," + ",".join(names)]
    for i in range(n):
        lines.append(f"V{i + 1}," + ",".join(f"{columns[c][i]:.6f}" for c in names))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def read_voltage_table(path: Path) -> dict[str, np.ndarray]:
    rows = [line.strip().split(",") for line in path.read_text().splitlines() if line.strip()]
    if len(rows) < 2:
        raise ConfigError(f"voltage file {path} is empty")
    names = rows[0][1:]
    if not names:
        raise ConfigError(f"voltage file {path} has no value columns")
    try:
        values = np.array([[float(x) for x in row[1:]] for row in rows[1:]])
    except ValueError as exc:
        raise ConfigError(f"voltage file {path}: {exc}") from exc
    return {name: values[:, j] for j, name in enumerate(names)}


def _pick_column(table: dict[str, np.ndarray], column: str | None, path: Path) -> np.ndarray:
    if column is None:
        return next(iter(table.values()))
    if column not in table:
        raise ConfigError(f"column {column!r} not in {path} (has {', '.join(table)})")
    return table[column]


def _coupling_table(config: RunConfig):
    return electrostatics.solve_coupling_constants(
        config.geometry, config.units(), cache_dir=config.resolved_cache_dir())


def _make_pipeline(config: RunConfig, kappa_scale: float | None) -> Pipeline:
    settings = config.pipeline
    if kappa_scale is not None:
        from dataclasses import replace
        settings = replace(settings, kappa_scale=kappa_scale)
    return Pipeline(_coupling_table(config), config.units(), settings)


def cmd_solve_laplace(config: RunConfig) -> int:
    out = Path(config.output_dir)
    cache = config.resolved_cache_dir()
    cached = (cache / f"coupling_{config.geometry.fingerprint()}.npz").exists()
    try:
        table = _coupling_table(config)
    except ElectrostaticsError as exc:
        logger.error("electrostatics solve failed: %s", exc)
        return EXIT_ELECTROSTATICS
    if cached:
        print("cache hit")
    defect = table.partition_defect()
    print(f"partition-of-unity residual: {defect:.3e}")
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "coupling_table.csv"
    electrostatics.write_coupling_csv(csv_path, table)
    _write_json(out / "coupling_table.provenance.json", _provenance(
        config,
        geometry_hash=table.geometry_hash,
        solver_residual=table.residual,
        partition_defect=defect,
        grid_spacing_nm=config.geometry.grid_spacing * 1e9,
    ))
    print(f"wrote {csv_path}")
    return EXIT_OK


def cmd_spectrum(config: RunConfig, voltages_mv: np.ndarray,
                 kappa_scale: float | None = None, label: str = "") -> int:
    out = Path(config.output_dir)
    try:
        pipe = _make_pipeline(config, kappa_scale)
    except ElectrostaticsError as exc:
        logger.error("electrostatics solve failed: %s", exc)
        return EXIT_ELECTROSTATICS
    vv = VoltageVector(v=voltages_mv, label=label)
    try:
        res = pipe.evaluate(vv)
    except (NotADoubleWellError, ScfError) as exc:
        logger.error("invalid well configuration: %s", exc)
        return EXIT_INVALID_WELL

    units = config.units()
    spec, obs = res.spectrum, res.observables
    n_report = min(6, spec.n_states)
    transitions = (spec.energies[:n_report] - spec.energies[0]) * units.freq_unit
    labels = analysis.label_eigenstates(spec)
    payload = {
        "provenance": _provenance(config, kappa_scale=pipe.settings.kappa_scale),
        "label": label,
        "voltages_mv": vv.v.tolist(),
        "energies_ghz": (spec.energies[:n_report] * units.freq_unit).tolist(),
        "transitions_ghz": transitions.tolist(),
        "entropies": obs.entropies[:n_report].tolist(),
        "coefficients": spec.coefficients[:n_report].tolist(),
        "hartree_levels_ghz": {
            "L": (res.basis.eps_l * units.freq_unit).tolist(),
            "R": (res.basis.eps_r * units.freq_unit).tolist(),
        },
        "observables_ghz": {
            "omega_L": obs.omega_l, "omega_R": obs.omega_r,
            "beta_L": obs.beta_l, "beta_R": obs.beta_r,
            "detuning": obs.detuning, "zeta": obs.zeta,
        },
        "barrier": {"x_b": res.barrier[0], "x_min_L": res.barrier[1],
                    "x_min_R": res.barrier[2]},
        "product_state_labels": {f"{i}{j}": n for (i, j), n in labels.items()},
    }
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "spectrum.json", payload)

    dx = res.grid_l.dx
    for well, grid, b in (("L", res.grid_l, res.basis.b_l), ("R", res.grid_r, res.basis.b_r)):
        dens = analysis.orbital_densities(b, dx)
        hdr = "x," + ",".join(f"|phi_{i}|^2" for i in range(dens.shape[1]))
        np.savetxt(out / f"orbital_density_{well}.csv",
                   np.column_stack([grid.x_points, dens]),
                   delimiter=",", header=hdr, comments="", fmt="%.15g")
    x_union = np.concatenate([res.grid_l.x_points, res.grid_r.x_points])
    rho = np.column_stack([analysis.particle_density(spec.coefficients[n], res.basis, dx)
                           for n in range(n_report)])
    np.savetxt(out / "densities.csv", np.column_stack([x_union, rho]), delimiter=",",
               header="x," + ",".join(f"rho_{n}" for n in range(n_report)),
               comments="", fmt="%.15g")
    print(f"transitions (GHz): {np.array2string(transitions[1:], precision=4)}")
    print(f"entropies:         {np.array2string(obs.entropies[1:n_report], precision=4)}")
    print(f"wrote {out / 'spectrum.json'}")
    return EXIT_OK


def cmd_optimize(config: RunConfig, target: str,
                 seed_voltages: np.ndarray | None = None,
                 kappa_scale: float | None = None) -> int:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        pipe = _make_pipeline(config, kappa_scale)
    except ElectrostaticsError as exc:
        logger.error("electrostatics solve failed: %s", exc)
        return EXIT_ELECTROSTATICS

    if seed_voltages is None:
        table_path = out / "voltages_I.csv"
        if target == "III" and table_path.exists():
            seed_voltages = read_voltage_table(table_path)["I"]
            logger.info("seeding target III from %s", table_path)
        else:
            seed_voltages = DEFAULT_SEED_VOLTAGES.copy()
            logger.info("using the shipped hand-tuned seed voltages")

    cfg = config.optimize.to_optimizer_config(target)
    log_path = out / f"optimize_{target}.log.jsonl"
    with log_path.open("w") as log_file:
        def log_iteration(record: dict) -> None:
            log_file.write(json.dumps(record) + "\n")

        try:
            result = optimize_voltages(
                pipe, target, cfg, seed=seed_voltages,
                restarts=config.optimize.restarts,
                restart_scale_mv=config.optimize.restart_scale_mv,
                rng_seed=config.optimize.rng_seed,
                callback=log_iteration)
        except (NotADoubleWellError, ScfError) as exc:
            logger.error("seed voltages do not form a usable double well: %s", exc)
            return EXIT_INVALID_WELL

    write_voltage_table(out / f"voltages_{target}.csv", {target: result.voltages})
    obs = pipe.evaluate(result.voltages).observables
    _write_json(out / f"optimize_{target}.json", {
        "provenance": _provenance(config, target=target),
        "voltages_mv": result.voltages.tolist(),
        "cost": result.cost,
        "cost_tol": cfg.cost_tol,
        "converged": result.converged,
        "iterations": result.iterations,
        "observables_ghz": {
            "omega_L": obs.omega_l, "omega_R": obs.omega_r,
            "beta_L": obs.beta_l, "beta_R": obs.beta_r,
            "detuning": obs.detuning, "zeta": obs.zeta,
            "entropies": obs.entropies[:6].tolist(),
        },
    })
    print(f"target {target}: cost {result.cost:.3e} after {result.iterations} iterations "
          f"({'converged' if result.converged else 'tolerance not reached'})")
    print(f"voltages (mV): {np.array2string(result.voltages, precision=3)}")
    if not result.converged:
        return EXIT_OPT_SHORTFALL
    return EXIT_OK


def _sweep_rows(records: list[SweepRecord], zeta_eff: list[float | None]) -> str:
    header = ("lambda," + ",".join(f"E{n}_ghz" for n in range(1, 6)) + ","
              + ",".join(f"S{n}" for n in range(1, 6))
              + ",beta_L,beta_R,detuning,zeta_ghz,zeta_eff_ghz,error")
    lines = [header]
    for rec, ze in zip(records, zeta_eff):
        if rec.error is not None:
            blanks = ",".join([""] * 15)
            lines.append(f"{rec.lam:.6g},{blanks},{rec.error.split(':')[0]}")
            continue
        fields = ([f"{rec.lam:.6g}"]
                  + [f"{x:.12g}" for x in rec.transitions_ghz]
                  + [f"{x:.12g}" for x in rec.entropies]
                  + [f"{rec.beta_l:.12g}", f"{rec.beta_r:.12g}", f"{rec.detuning:.12g}",
                     f"{rec.zeta:.12g}", "" if ze is None else f"{ze:.12g}", ""])
        lines.append(",".join(fields))
    return "\n".join(lines) + "\n"


def cmd_sweep(config: RunConfig, v_i: np.ndarray, v_iii: np.ndarray,
              lambdas: np.ndarray, jobs: int = 1,
              kappa_scale: float | None = None) -> int:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        pipe = _make_pipeline(config, kappa_scale)
    except ElectrostaticsError as exc:
        logger.error("electrostatics solve failed: %s", exc)
        return EXIT_ELECTROSTATICS

    records = sweep(pipe, v_i, v_iii, lambdas, jobs=jobs)
    good = [(rec.lam, rec.result.spectrum) for rec in records if rec.result is not None]

    lam_star = g_star = None
    try:
        lam_star, g_star = extract_gap_coupling(good, pipe.units)
    except (SweepBoundaryError, ValueError) as exc:
        logger.warning("gap extraction failed: %s", exc)

    zeta_eff: list[float | None] = []
    for rec in records:
        if rec.error is not None or g_star is None:
            zeta_eff.append(None)
        else:
            zeta_eff.append(effective_zeta(g_star, rec.detuning, rec.beta_l,
                                           rec.beta_r).zeta)

    csv_path = out / "sweep.csv"
    csv_path.write_text(_sweep_rows(records, zeta_eff))
    zeta_lines = ["lambda,zeta_ci_ghz,zeta_eff_ghz"]
    for rec, ze in zip(records, zeta_eff):
        if rec.error is None:
            zeta_lines.append(f"{rec.lam:.6g},{rec.zeta:.12g},"
                              + ("" if ze is None else f"{ze:.12g}"))
    (out / "zeta_comparison.csv").write_text("\n".join(zeta_lines) + "\n")
    _write_json(out / "sweep.provenance.json", _provenance(
        config, points=len(records),
        failures=sum(1 for r in records if r.error),
        lambda_star=lam_star, g_ghz=g_star,
    ))
    summary = {
        "provenance": _provenance(config),
        "lambda_star": lam_star,
        "g_ghz": g_star,
    }
    if lam_star is not None:
        v_ii = parametrize(v_i, v_iii, lam_star)
        write_voltage_table(out / "voltages_table.csv",
                            {"I": v_i, "II": v_ii, "III": v_iii})
        summary["voltages_II_mv"] = v_ii.tolist()
    _write_json(out / "sweep_summary.json", summary)
    n_fail = sum(1 for r in records if r.error)
    print(f"swept {len(records)} points ({n_fail} failures)")
    if lam_star is not None:
        print(f"avoided crossing: lambda* = {lam_star:.4f}, g = {g_star * 1e3:.1f} MHz")
    print(f"wrote {csv_path}")
    return EXIT_OK


def _parse_lambda_range(text: str) -> np.ndarray:
    try:
        start, stop, count = text.split(":")
        return np.linspace(float(start), float(stop), int(count))
    except ValueError as exc:
        raise ConfigError(f"--lambda expects start:stop:count, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heliqsim",
        description="Double-well trap simulator and voltage optimizer for "
                    "Coulomb-coupled electron motional qubits.")
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-laplace", help="compute electrode coupling constants")
    p.add_argument("--config", required=True)

    p = sub.add_parser("spectrum", help="two-body spectrum for a voltage set")
    p.add_argument("--config", required=True)
    p.add_argument("--voltages", required=True, help="voltage table CSV")
    p.add_argument("--column", default=None, help="column to use (default: first)")
    p.add_argument("--kappa-scale", type=float, default=None,
                   help="scale the interaction strength (0 = non-interacting)")
    p.add_argument("--label", default="")

    p = sub.add_parser("optimize", help="search voltages for a target configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--target", required=True, choices=["I", "III"])
    p.add_argument("--seed-voltages", default=None, help="seed voltage table CSV")
    p.add_argument("--column", default=None)
    p.add_argument("--kappa-scale", type=float, default=None)

    p = sub.add_parser("sweep", help="interpolate voltages between two configurations")
    p.add_argument("--config", required=True)
    p.add_argument("--vi", required=True, help="configuration-I voltage table")
    p.add_argument("--viii", required=True, help="configuration-III voltage table")
    p.add_argument("--lambda", dest="lambda_range", default=None,
                   help="start:stop:count (default from config)")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--kappa-scale", type=float, default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config)
        if args.command == "solve-laplace":
            return cmd_solve_laplace(config)
        if args.command == "spectrum":
            table = read_voltage_table(Path(args.voltages))
            v = _pick_column(table, args.column, Path(args.voltages))
            return cmd_spectrum(config, v, kappa_scale=args.kappa_scale,
                                label=args.label)
        if args.command == "optimize":
            seed = None
            if args.seed_voltages:
                table = read_voltage_table(Path(args.seed_voltages))
                seed = _pick_column(table, args.column, Path(args.seed_voltages))
            return cmd_optimize(config, args.target, seed_voltages=seed,
                                kappa_scale=args.kappa_scale)
        if args.command == "sweep":
            v_i = _pick_column(read_voltage_table(Path(args.vi)), None, Path(args.vi))
            v_iii = _pick_column(read_voltage_table(Path(args.viii)), None, Path(args.viii))
            lambdas = (_parse_lambda_range(args.lambda_range) if args.lambda_range
                       else np.linspace(config.sweep.lambda_start,
                                        config.sweep.lambda_stop, config.sweep.points))
            return cmd_sweep(config, v_i, v_iii, lambdas, jobs=args.jobs,
                             kappa_scale=args.kappa_scale)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

import json

import numpy as np
import pytest

from heliqsim import cli

DETUNED = np.array([0.0, 35.0, 0.0, -25.0, 0.0, 28.0, 0.0])


@pytest.fixture()
def workdir(tmp_path):
    cfg = {
        "geometry": {"channel_width_um": 2.0, "channel_depth_um": 0.3,
                     "electrode_width_nm": 100.0, "electrode_gap_nm": 100.0,
                     "n_electrodes": 7, "grid_spacing_nm": 10.0,
                     "surface_height_um": 0.2},
        "dvr": {"points_per_well": 120},
        "optimizer": {"max_iters": 5, "cost_tol_i": 1e-3},
        "sweep": {"points": 5},
        "output_dir": str(tmp_path / "out"),
    }
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps(cfg))
    volt_path = tmp_path / "volts.csv"
    cli.write_voltage_table(volt_path, {"I": DETUNED})
    return tmp_path, cfg_path, volt_path


def test_voltage_table_round_trip(tmp_path):
    path = tmp_path / "v.csv"
    cols = {"I": np.arange(7.0), "III": np.arange(7.0)[::-1]}
    cli.write_voltage_table(path, cols)
    back = cli.read_voltage_table(path)
    np.testing.assert_allclose(back["I"], cols["I"])
    np.testing.assert_allclose(back["III"], cols["III"])
    assert path.read_text().splitlines()[1].startswith("V1,")


def test_lambda_range_parsing():
    lams = cli._parse_lambda_range("0:2:5")
    np.testing.assert_allclose(lams, [0.0, 0.5, 1.0, 1.5, 2.0])
    with pytest.raises(Exception):
        cli._parse_lambda_range("0..2")


def test_bad_config_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"geometry": {"bogus": 1}}))
    assert cli.main(["solve-laplace", "--config", str(bad)]) == cli.EXIT_CONFIG


def test_solve_laplace_writes_table_and_provenance(workdir, capsys):
    tmp_path, cfg_path, _ = workdir
    assert cli.main(["solve-laplace", "--config", str(cfg_path)]) == 0
    out = tmp_path / "out"
    assert (out / "coupling_table.csv").exists()
    prov = json.loads((out / "coupling_table.provenance.json").read_text())
    assert "config_hash" in prov and "partition_defect" in prov
    assert prov["partition_defect"] < 1e-8
    captured = capsys.readouterr()
    assert "partition-of-unity" in captured.out


def test_solve_laplace_cache_hit(workdir, capsys):
    _, cfg_path, _ = workdir
    assert cli.main(["solve-laplace", "--config", str(cfg_path)]) == 0
    capsys.readouterr()
    assert cli.main(["solve-laplace", "--config", str(cfg_path)]) == 0
    assert "cache hit" in capsys.readouterr().out


def test_spectrum_outputs(workdir):
    tmp_path, cfg_path, volt_path = workdir
    code = cli.main(["spectrum", "--config", str(cfg_path),
                     "--voltages", str(volt_path)])
    assert code == 0
    out = tmp_path / "out"
    payload = json.loads((out / "spectrum.json").read_text())
    assert len(payload["transitions_ghz"]) == 6
    assert payload["transitions_ghz"][0] == 0.0
    assert len(payload["coefficients"]) == 6
    assert (out / "orbital_density_L.csv").exists()
    assert (out / "orbital_density_R.csv").exists()
    assert (out / "densities.csv").exists()
    header = (out / "orbital_density_L.csv").read_text().splitlines()[0]
    assert header.startswith("x,|phi_0|^2")


def test_spectrum_kappa_scale_zero_kills_entropy(workdir):
    tmp_path, cfg_path, volt_path = workdir
    assert cli.main(["spectrum", "--config", str(cfg_path),
                     "--voltages", str(volt_path), "--kappa-scale", "0"]) == 0
    payload = json.loads(((tmp_path / "out") / "spectrum.json").read_text())
    assert max(payload["entropies"]) < 1e-10


def test_spectrum_invalid_well_exits_3(workdir, tmp_path):
    _, cfg_path, _ = workdir
    flat = tmp_path / "flat.csv"
    cli.write_voltage_table(flat, {"I": np.zeros(7)})
    assert cli.main(["spectrum", "--config", str(cfg_path),
                     "--voltages", str(flat)]) == cli.EXIT_INVALID_WELL


def test_spectrum_missing_column_exits_1(workdir):
    _, cfg_path, volt_path = workdir
    assert cli.main(["spectrum", "--config", str(cfg_path), "--voltages",
                     str(volt_path), "--column", "XXL"]) == cli.EXIT_CONFIG


def test_optimize_shortfall_exits_4_but_writes(workdir):
    tmp_path, cfg_path, volt_path = workdir
    code = cli.main(["optimize", "--config", str(cfg_path), "--target", "I",
                     "--seed-voltages", str(volt_path)])
    assert code == cli.EXIT_OPT_SHORTFALL  # 5 iterations cannot reach targets
    out = tmp_path / "out"
    assert (out / "voltages_I.csv").exists()
    log_lines = (out / "optimize_I.log.jsonl").read_text().splitlines()
    assert len(log_lines) >= 2
    first = json.loads(log_lines[0])
    assert {"iter", "cost", "voltages_mv"} <= set(first)
    summary = json.loads((out / "optimize_I.json").read_text())
    assert summary["converged"] is False


def test_sweep_outputs(workdir, tmp_path):
    tmp_path_, cfg_path, volt_path = workdir
    viii = tmp_path_ / "viii.csv"
    cli.write_voltage_table(viii, {"III": np.array([0, 28, 0, -25, 0, 35, 0.0])})
    code = cli.main(["sweep", "--config", str(cfg_path), "--vi", str(volt_path),
                     "--viii", str(viii), "--lambda", "0:1:7"])
    assert code == 0
    out = tmp_path_ / "out"
    lines = (out / "sweep.csv").read_text().splitlines()
    assert len(lines) == 8
    header = lines[0].split(",")
    assert header[0] == "lambda"
    assert "zeta_eff_ghz" in header
    assert "error" in header
    zeta_csv = (out / "zeta_comparison.csv").read_text().splitlines()
    assert zeta_csv[0] == "lambda,zeta_ci_ghz,zeta_eff_ghz"
    summary = json.loads((out / "sweep_summary.json").read_text())
    assert "lambda_star" in summary
    if summary["lambda_star"] is not None:
        table = cli.read_voltage_table(out / "voltages_table.csv")
        assert set(table) == {"I", "II", "III"}


def test_sweep_error_rows_have_full_column_count(workdir, tmp_path):
    tmp_path_, cfg_path, volt_path = workdir
    viii = tmp_path_ / "viii.csv"
    cli.write_voltage_table(viii, {"III": np.zeros(7)})  # lambda=1 invalid
    assert cli.main(["sweep", "--config", str(cfg_path), "--vi", str(volt_path),
                     "--viii", str(viii), "--lambda", "0:1:3"]) == 0
    lines = ((tmp_path_ / "out") / "sweep.csv").read_text().splitlines()
    n_cols = len(lines[0].split(","))
    assert all(len(line.split(",")) == n_cols for line in lines[1:])
    assert "NotADoubleWell" in lines[-1]


def test_sweep_single_point_matches_spectrum(workdir):
    tmp_path, cfg_path, volt_path = workdir
    assert cli.main(["spectrum", "--config", str(cfg_path),
                     "--voltages", str(volt_path)]) == 0
    spectrum = json.loads(((tmp_path / "out") / "spectrum.json").read_text())
    viii = tmp_path / "viii.csv"
    cli.write_voltage_table(viii, {"III": DETUNED})
    assert cli.main(["sweep", "--config", str(cfg_path), "--vi", str(volt_path),
                     "--viii", str(viii), "--lambda", "0:0:1"]) == 0
    row = ((tmp_path / "out") / "sweep.csv").read_text().splitlines()[1].split(",")
    np.testing.assert_allclose(float(row[1]), spectrum["transitions_ghz"][1],
                               rtol=1e-11)


def test_rerun_reproduces_data_files_byte_identical(workdir):
    tmp_path, cfg_path, volt_path = workdir
    assert cli.main(["spectrum", "--config", str(cfg_path),
                     "--voltages", str(volt_path)]) == 0
    out = tmp_path / "out"
    first = {p.name: p.read_bytes() for p in out.glob("*.csv")}
    spectrum1 = json.loads((out / "spectrum.json").read_text())
    assert cli.main(["spectrum", "--config", str(cfg_path),
                     "--voltages", str(volt_path)]) == 0
    for name, blob in first.items():
        assert (out / name).read_bytes() == blob
    spectrum2 = json.loads((out / "spectrum.json").read_text())
    spectrum1.pop("provenance")
    spectrum2.pop("provenance")
    assert spectrum1 == spectrum2

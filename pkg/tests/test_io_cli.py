import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from uavuwb import cli
from uavuwb import io as fio
from uavuwb.core import Cir, EnvironmentClass, Geometry, ScanSet, ScenarioId
from uavuwb.estimation import monocycle_template, render_scanset
from uavuwb.metrics import Cfr
from uavuwb.pathloss import PathLossSample


def run(*argv):
    return cli.main([str(a) for a in argv])


def data_rows(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


# --- file formats ------------------------------------------------------------------

finite = st.floats(-1e6, 1e6, allow_nan=False)


@given(st.lists(finite, min_size=1, max_size=20))
def test_nine_digit_round_trip(values):
    for v in values:
        assert float(fio.fmt(v)) == pytest.approx(v, rel=5e-9, abs=1e-300)


def test_cir_round_trip(tmp_path, rng):
    tau = np.sort(rng.uniform(0, 99, 30))
    cir = Cir(tau, rng.uniform(0, 1e-3, 30), rng.integers(0, 3, 30))
    fio.write_cir(tmp_path / "c.csv", cir, seed=3)
    back, header = fio.read_cir(tmp_path / "c.csv")
    assert header["format_version"] == "1"
    assert header["seed"] == "3"
    assert np.allclose(back.tau, cir.tau, rtol=5e-9)
    assert np.allclose(back.a, cir.a, rtol=5e-9)
    assert np.array_equal(back.cluster, cir.cluster)


def test_scanset_round_trip(tmp_path):
    c = Cir([0.0, 6.0], [1.0, 0.5])
    ss = render_scanset([c] * 3, monocycle_template(), geometry=Geometry(d=10, h_uav=8),
                        env=EnvironmentClass.OPEN, scenario=ScenarioId.S2_GROUND_1M5)
    fio.write_scanset(tmp_path / "s.csv", ss)
    back = fio.read_scanset(tmp_path / "s.csv")
    assert back.n_tot == 3
    assert np.allclose(back.scans, ss.scans, rtol=5e-9, atol=1e-12)
    assert np.allclose(back.template, ss.template, rtol=5e-9)
    assert back.geometry.d == 10 and back.scenario is ScenarioId.S2_GROUND_1M5


def test_pathloss_samples_round_trip(tmp_path):
    s = [PathLossSample(5.6, 40.123456789, EnvironmentClass.SUBURBAN, ScenarioId.S1_FOLIAGE, 20)]
    fio.write_pathloss_samples(tmp_path / "p.csv", s)
    back = fio.read_pathloss_samples(tmp_path / "p.csv")
    assert back[0].pl_db == pytest.approx(40.123456789, rel=5e-9)
    assert back[0].env is EnvironmentClass.SUBURBAN and back[0].v_mph == 20


def test_delay_stats_round_trip(tmp_path):
    fio.write_delay_stats(tmp_path / "d.csv", [(4.0, "s1", 1.5, 0.0, float("inf"))])
    row = fio.read_delay_stats(tmp_path / "d.csv")[0]
    assert row["t_rms_ns"] == 0.0 and row["cb_hz"] == float("inf")


def test_parse_error_names_line_and_column(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("# format_version: 1\ntau_ns,amplitude,cluster\n0,1,0\n0.5,oops,0\n")
    with pytest.raises(fio.ParseError) as e:
        fio.read_cir(p)
    assert e.value.line == 4
    assert e.value.column == "amplitude"
    assert ":4" in str(e.value)


def test_wrong_field_count(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("tau_ns,amplitude,cluster\n0,1\n")
    with pytest.raises(fio.ParseError) as e:
        fio.read_cir(p)
    assert e.value.line == 2


def test_unknown_version(tmp_path):
    p = tmp_path / "v.csv"
    p.write_text("# format_version: 9\ntau_ns,amplitude,cluster\n0,1,0\n")
    with pytest.raises(fio.ParseError):
        fio.read_cir(p)


def test_cfr_file_covers_band(tmp_path):
    f = np.arange(8) * 1e9
    fio.write_cfr(tmp_path / "f.csv", Cfr(f, np.zeros(8), np.ones(8), 3.1e9))
    rows = data_rows(tmp_path / "f.csv")
    freqs = [float(r["freq_hz"]) for r in rows]
    assert freqs == [3.1e9, 4.1e9, 5.1e9]


# --- generate ------------------------------------------------------------------------

GEN = ("generate", "--env", "open", "--scenario", "2", "--v", "0", "--h", "8", "--d", "10",
       "--n", "25", "--seed", "7")


def test_generate_count_and_manifest(tmp_path):
    assert run(*GEN, "--out", tmp_path / "a") == 0
    files = sorted((tmp_path / "a").glob("cir_*.csv"))
    assert len(files) == 25
    header, entries = fio.read_manifest(tmp_path / "a")
    assert header["seed"] == "7" and header["preset"] == "open-s2-v0"
    assert [e["stream"] for e in entries] == list(range(25))
    assert all(e["d_m"] == 10.0 for e in entries)


def test_generate_is_bitwise_deterministic(tmp_path):
    run(*GEN, "--out", tmp_path / "a")
    run(*GEN, "--out", tmp_path / "b")
    for fa in sorted((tmp_path / "a").iterdir()):
        assert fa.read_bytes() == (tmp_path / "b" / fa.name).read_bytes()


def test_manifest_regenerates_ensemble(tmp_path):
    from uavuwb.core import RandomSource
    from uavuwb.presets import parse_preset_key
    from uavuwb.sv import generate_cir

    run(*GEN, "--out", tmp_path / "a")
    header, entries, cirs = fio.read_ensemble(tmp_path / "a")
    preset = parse_preset_key(header["preset"])
    for e, c in zip(entries, cirs):
        again = generate_cir(preset, fio.entry_geometry(e), RandomSource(e["seed"], e["stream"]))
        assert np.allclose(again.tau, c.tau, rtol=5e-9)
        assert np.allclose(again.a, c.a, rtol=5e-9)


def test_generate_rejects_zero_count(tmp_path, capsys):
    assert run("generate", "--env", "open", "--scenario", "2", "--n", "0", "--out", tmp_path) != 0
    assert "--n" in capsys.readouterr().err


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "envout"))
    assert run("generate", "--env", "open", "--scenario", "1", "--n", "2") == 0
    assert (tmp_path / "envout" / fio.MANIFEST_NAME).is_file()


def test_unsupported_format_version(tmp_path):
    assert run("presets", "--format-version", "2", "--out", tmp_path) != 0


# --- analyze ----------------------------------------------------------------------------

def test_analyze_single_tap(tmp_path):
    d = tmp_path / "ens"
    d.mkdir()
    fio.write_cir(d / "c.csv", Cir([12.0], [0.3]))
    fio.write_manifest(d, [dict(file="c.csv", seed=0, stream=0, group=0, h_uav_m=8.0, d_m=10.0,
                                h_gnd_m=1.5, h_opt_m=1.5)])
    assert run("analyze", "--input", d, "--out", tmp_path / "o") == 0
    row = fio.read_delay_stats(tmp_path / "o" / "delay_stats.csv")[0]
    assert row["t_rms_ns"] == 0.0
    assert row["cb_hz"] == float("inf")
    for name in ("pdp.csv", "cfr.csv", "toa_cdf.csv", "subband.csv"):
        assert (tmp_path / "o" / name).is_file()


def test_analyze_height_sweep(tmp_path):
    assert run("analyze", "--env", "open", "--scenario", "1", "--n", "10",
               "--out", tmp_path, "--seed", "2") == 0
    rows = fio.read_delay_stats(tmp_path / "delay_stats.csv")
    assert [r["height_m"] for r in rows] == [4.0, 8.0, 12.0, 16.0]
    assert (tmp_path / "pdp_h12m.csv").is_file()


def test_analyze_scanset_runs_clean_per_scan(tmp_path, monkeypatch):
    import uavuwb.estimation as est

    c = Cir([0.0, 6.0, 20.0], [1.0, 0.5, 0.2])
    ss = render_scanset([c] * 25, monocycle_template())
    fio.write_scanset(tmp_path / "scan.csv", ss)
    calls = []
    real = est.clean_deconvolve

    def counting(*a, **kw):
        calls.append(1)
        return real(*a, **kw)

    monkeypatch.setattr(est, "clean_deconvolve", counting)
    assert run("analyze", "--input", tmp_path / "scan.csv", "--out", tmp_path / "o") == 0
    assert len(calls) == 25
    pdp = data_rows(tmp_path / "o" / "pdp.csv")
    power = np.array([float(r["power"]) for r in pdp])
    assert power[0] == pytest.approx(1.0, rel=1e-9)
    assert power[100] == pytest.approx(0.25, rel=1e-9)


def test_analyze_malformed_input(tmp_path, capsys):
    p = tmp_path / "scan.csv"
    p.write_text("# format_version: 1\nt_ns,template,scan_0\n0,1,1\n0.06,x,0\n")
    assert run("analyze", "--input", p, "--out", tmp_path / "o") != 0
    err = capsys.readouterr().err
    assert ":4" in err and "template" in err


# --- fit ---------------------------------------------------------------------------------

def test_fit_empty_directory(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    out = tmp_path / "o"
    assert run("fit", "--input", empty, "--out", out) != 0
    assert not out.exists() or not any(out.iterdir())


def test_fit_partial_report_is_nonzero(tmp_path):
    d = tmp_path / "ens"
    run("generate", "--env", "open", "--scenario", "3", "--h", "16", "--n", "3", "--out", d)
    code = run("fit", "--input", d, "--out", tmp_path / "o")
    text = (tmp_path / "o" / "fit_report.txt").read_text()
    assert code != 0
    assert "Diagnostics" in text


def test_fit_round_trip_with_truth(tmp_path):
    d = tmp_path / "ens"
    assert run("generate", "--env", "open", "--scenario", "2", "--h", "4,8,12,16",
               "--n", "1000", "--seed", "20", "--out", d) == 0
    assert run("fit", "--input", d, "--truth", "open-s2-v0", "--out", tmp_path / "o") == 0
    rows = {r["parameter"]: r for r in data_rows(tmp_path / "o" / "fit_report.csv")}
    for name in ("Lambda_hat", "lambda_hat", "mu_hat", "beta_hat"):
        assert rows[name]["within_tolerance"] == "true", rows[name]
    header = (tmp_path / "o" / "fit_report.csv").read_text()
    assert "# label_source: truth" in header


def test_fit_gap_labels_noted(tmp_path):
    d = tmp_path / "ens"
    run("generate", "--env", "open", "--scenario", "2", "--h", "4,8", "--n", "40", "--out", d)
    run("fit", "--input", d, "--labels", "gap", "--truth", "open-s2-v0", "--out", tmp_path / "o")
    assert "gap rule" in (tmp_path / "o" / "fit_report.txt").read_text()


def test_fit_small_scale_mode(tmp_path):
    d = tmp_path / "ens"
    assert run("generate", "--env", "open", "--scenario", "2", "--h", "4,8,12,16", "--mode",
               "smallscale", "--locations", "8", "--n", "60", "--out", d) == 0
    run("fit", "--input", d, "--out", tmp_path / "o")
    rows = {r["parameter"]: r for r in data_rows(tmp_path / "o" / "fit_report.csv")}
    assert rows["eta_hat"]["estimate"] != ""


# --- pathloss and presets -----------------------------------------------------------------

def test_pathloss_draw_then_fit(tmp_path, capsys):
    assert run("pathloss", "--env", "suburban", "--scenario", "3", "--v", "20", "--n", "5000",
               "--out", tmp_path, "--seed", "1") == 0
    fit = data_rows(tmp_path / "pathloss_fit.csv")[0]
    assert float(fit["alpha"]) == pytest.approx(2.961, abs=0.15)
    assert run("pathloss", "--input", tmp_path / "pathloss_samples.csv", "--out", tmp_path / "b") == 0
    again = data_rows(tmp_path / "b" / "pathloss_fit.csv")[0]
    assert float(again["alpha"]) == pytest.approx(float(fit["alpha"]), rel=1e-6)


def test_presets_dump(tmp_path, capsys):
    assert run("presets", "--out", tmp_path) == 0
    printed = capsys.readouterr().out
    assert "pathloss,open,s1,0,2.6471,34.905,3.37" in printed
    rows = data_rows(tmp_path / "presets.csv")
    assert len(rows) == 24
    sub1 = [r for r in rows if r["table"] == "pdp" and r["env"] == "suburban" and r["scenario"] == "s1"][0]
    assert (sub1["Lambda_per_ns"], sub1["lambda_per_ns"], sub1["mu_ns"], sub1["beta_ns"]) == (
        "0.789", "0.827", "2.63", "0.9")


def test_global_flags_before_subcommand(tmp_path):
    assert run("--seed", "5", "--out", tmp_path, "generate", "--env", "open", "--scenario", "1", "--n", "2") == 0
    header, _ = fio.read_manifest(tmp_path)
    assert header["seed"] == "5"

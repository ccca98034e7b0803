import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from uavuwb.core import (
    Cir,
    EnvironmentClass,
    Geometry,
    NakagamiParams,
    PathLossParams,
    PresetNotFoundError,
    RandomSource,
    ScanSet,
    ScenarioId,
    SvParams,
    ValidationError,
    n_samples,
    spherical_distance,
)
from uavuwb.presets import (
    NAKAGAMI_TABLE,
    PATH_LOSS_TABLE,
    SV_TABLE,
    all_presets,
    calibrate_c_e,
    expected_cluster_count,
    parse_preset_key,
    preset_lookup,
    preset_rows,
)


def test_sample_count_on_window():
    assert n_samples(100.0, 0.06) == 1666
    assert n_samples(6.0, 0.06) == 100


def test_geometry_validation():
    with pytest.raises(ValidationError):
        Geometry(d=0, h_uav=4)
    with pytest.raises(ValidationError):
        Geometry(d=5, h_uav=-1)
    with pytest.raises(ValidationError):
        Geometry(d=5, h_uav=4, v=-1)
    g = Geometry.for_scenario(ScenarioId.S3_GROUND_7CM, 8.0, 10.0)
    assert g.h_gnd == 0.07


def test_scenario_and_env_parsing():
    assert ScenarioId.parse("s2") is ScenarioId.S2_GROUND_1M5
    assert ScenarioId.parse(3) is ScenarioId.S3_GROUND_7CM
    assert ScenarioId.S1_FOLIAGE.foliage
    assert EnvironmentClass.parse("suburban") is EnvironmentClass.SUBURBAN
    with pytest.raises(ValidationError):
        ScenarioId.parse("s9")


def test_param_validation():
    with pytest.raises(ValidationError):
        PathLossParams(alpha=0, pl0_db=20, sigma_db=1)
    with pytest.raises(ValidationError):
        SvParams(Lambda=0, lam=1, mu=1, beta=1, c_bar=2)
    sv = SvParams(Lambda=0.1, lam=2, mu=3, beta=1, c_bar=2)
    assert sv.c_e == 16.0  # defaults to c_bar at 8 m
    assert sv.sigma_c == pytest.approx(0.3)
    assert sv.sigma_N == pytest.approx(0.2)


def test_nakagami_defaults_follow_lognormal():
    nak = NakagamiParams(eta=1.67, xi=0.64)
    loc, scale = nak.ln_params()
    assert loc == pytest.approx(1.67 * math.log(10) / 10)
    assert scale == pytest.approx(0.64 * math.log(10) / 10)
    assert nak.m0 == pytest.approx(math.exp(loc + scale**2 / 2))


# --- presets ---------------------------------------------------------------

def test_lookup_open_s2_static():
    p = preset_lookup("open", 2, 0)
    assert (p.pl.alpha, p.pl.pl0_db, p.pl.sigma_db) == (2.5418, 24.9965, 3.06)
    assert (p.sv.Lambda, p.sv.lam, p.sv.mu, p.sv.beta, p.sv.c_bar) == (0.09, 2.21, 2.91, 0.9069, 2.33)


def test_lookup_suburban_s3_moving():
    p = preset_lookup(EnvironmentClass.SUBURBAN, ScenarioId.S3_GROUND_7CM, 20)
    assert (p.pl.alpha, p.pl.pl0_db, p.pl.sigma_db) == (2.961, 22.73, 4.71)


def test_unknown_preset():
    with pytest.raises(PresetNotFoundError):
        preset_lookup("open", 2, 30)
    with pytest.raises((PresetNotFoundError, ValidationError)):
        parse_preset_key("indoor-s2-v0")


def test_registry_totality():
    assert len(PATH_LOSS_TABLE) == 12
    assert len(SV_TABLE) == 6
    assert len(NAKAGAMI_TABLE) == 6
    assert len(all_presets()) == 12
    tables = [r["table"] for r in preset_rows()]
    assert tables.count("pathloss") == 12
    assert tables.count("pdp") == 6
    assert tables.count("smallscale") == 6


def test_key_round_trip():
    for p in all_presets():
        assert parse_preset_key(p.key).key == p.key


def test_c_e_calibration_hits_mean_count():
    for p in all_presets():
        sv = p.sv
        if sv.c_bar > 1:
            assert expected_cluster_count(sv.c_e / 8.0, sv.sigma_N) == pytest.approx(sv.c_bar, abs=1e-9)
    assert calibrate_c_e(1.0, 0.1) == 8.0


# --- CIR and scan containers --------------------------------------------------

def test_cir_validation():
    with pytest.raises(ValidationError):
        Cir([0.0, 1.0], [1.0])
    with pytest.raises(ValidationError):
        Cir([1.0, 0.5], [1.0, 1.0])
    with pytest.raises(ValidationError):
        Cir([0.0, 120.0], [1.0, 1.0])
    c = Cir([0.0, 1.0], [1.0, 0.5])
    with pytest.raises(ValueError):
        c.a[0] = 3.0


def test_cir_gridded_merges_bins():
    c = Cir([0.0, 0.01, 0.06], [1.0, 0.5, 0.25])
    g = c.gridded()
    assert g.size == 1666
    assert g[0] == pytest.approx(1.5)
    assert g[1] == pytest.approx(0.25)


def test_scanset_needs_template():
    with pytest.raises(ValidationError):
        ScanSet(np.ones((2, 10)), np.zeros(3))
    assert ScanSet(np.ones((25, 10)), [1.0]).n_tot == 25


# --- random streams -------------------------------------------------------------

def test_streams_are_reproducible_and_distinct():
    a = RandomSource(7, 3).generator.random(5)
    b = RandomSource(7, 3).generator.random(5)
    c = RandomSource(7, 4).generator.random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    with pytest.raises(ValidationError):
        RandomSource(-1)


# --- spherical distance -----------------------------------------------------------

def test_distance_identical_points():
    assert spherical_distance(25.0, -80.0, 25.0, -80.0) == 0.0


def test_distance_antipodal_on_equator():
    assert spherical_distance(0, 0, 0, 180, radius=2.0) == pytest.approx(2.0 * math.pi)


def test_distance_campus_pair():
    # same meridian: arc = R * dlat, cross-checked against the chord formula
    d = spherical_distance(25.757, -80.374, 25.758, -80.374, radius=6371000.0)
    assert d == pytest.approx(111.19492664456, rel=1e-9)


def test_distance_range_checks():
    with pytest.raises(ValidationError):
        spherical_distance(91, 0, 0, 0)
    with pytest.raises(ValidationError):
        spherical_distance(0, 0, 0, 181)


def _chord_distance(lat1, lon1, lat2, lon2, r):
    def xyz(la, lo):
        la, lo = math.radians(la), math.radians(lo)
        return np.array([math.cos(la) * math.cos(lo), math.cos(la) * math.sin(lo), math.sin(la)])

    c = np.linalg.norm(xyz(lat1, lon1) - xyz(lat2, lon2))
    return 2 * r * math.asin(min(c / 2, 1.0))


lat = st.floats(-89.0, 89.0)
lon = st.floats(-179.0, 179.0)


@given(lat, lon, lat, lon)
def test_distance_matches_chord_oracle(a, b, c, d):
    ours = spherical_distance(a, b, c, d, radius=1.0)
    assert ours == pytest.approx(_chord_distance(a, b, c, d, 1.0), abs=1e-7)
    assert ours == pytest.approx(spherical_distance(c, d, a, b, radius=1.0), abs=1e-12)

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from uavuwb.core import (
    DegenerateInputError,
    Geometry,
    PathLossParams,
    RankDeficientError,
    ScanSet,
    ValidationError,
)
from uavuwb.pathloss import (
    PathLossSample,
    doppler_term_db,
    fit_path_loss,
    height_term_db,
    measured_path_loss,
    path_loss_doppler,
    path_loss_static,
    sample_path_loss,
)
from uavuwb.presets import preset_lookup

OPEN_S2 = preset_lookup("open", 2, 0).pl


def flat(d, **kw):
    # receiver on the ground with h_opt = 1.5 m makes dh / h_opt = 1
    return Geometry(d=d, h_uav=8.0, h_gnd=0.0, h_opt=1.5, **kw)


def test_reference_distance_gives_pl0():
    assert path_loss_static(flat(1.0), OPEN_S2) == pytest.approx(24.9965, abs=1e-12)


def test_open_s2_at_ten_metres():
    assert path_loss_static(flat(10.0), OPEN_S2) == pytest.approx(50.4145, abs=1e-9)


def test_doubling_distance():
    delta = path_loss_static(flat(20.0), OPEN_S2) - path_loss_static(flat(10.0), OPEN_S2)
    assert delta == pytest.approx(7.6515, abs=1e-4)
    assert delta == pytest.approx(10 * 2.5418 * math.log10(2), rel=1e-12)


def test_height_term_clamped():
    g = Geometry(d=5, h_uav=8, h_gnd=1.5, h_opt=1.5)
    assert height_term_db(g) == pytest.approx(20.0)
    assert height_term_db(Geometry(d=5, h_uav=8, h_gnd=0.0, h_opt=1.5)) == 0.0


def test_foliage_and_shadowing_add():
    p = PathLossParams(alpha=2.0, pl0_db=30.0, sigma_db=1.0, cp_db=4.0)
    assert path_loss_static(flat(1.0), p, shadowing=-1.5) == pytest.approx(32.5)


def test_doppler_static_identity():
    g = flat(10.0)
    assert path_loss_doppler(g, OPEN_S2) == path_loss_static(g, OPEN_S2)
    p0 = PathLossParams(alpha=2.5418, pl0_db=24.9965, sigma_db=3.06, x=0.0)
    gv = flat(10.0, v=30.0)
    assert path_loss_doppler(gv, p0) == path_loss_static(gv, p0)


def test_doppler_term_negligible_at_20_mph():
    term = doppler_term_db(8.94, OPEN_S2)
    assert term == pytest.approx(2.59e-7, rel=5e-3)


@given(st.floats(0.0, 100.0), st.floats(0.0, 4.0))
def test_doppler_term_vanishes_only_at_rest(v, x):
    p = PathLossParams(alpha=2.0, pl0_db=20.0, sigma_db=1.0, x=x)
    t = doppler_term_db(v, p)
    assert t >= 0
    if v == 0 or x == 0:
        assert t == 0


def test_fit_noiseless_line():
    p = PathLossParams(alpha=2.9442, pl0_db=25.8091, sigma_db=0.0)
    d = np.linspace(5.6, 16.5, 40)
    pl = sample_path_loss(p, d, rng=1)
    fit = fit_path_loss(PathLossSample(a, b) for a, b in zip(d, pl))
    assert fit.alpha_hat == pytest.approx(2.9442, abs=1e-10)
    assert fit.pl0_hat_db == pytest.approx(25.8091, abs=1e-9)
    assert fit.sigma_hat_db == pytest.approx(0.0, abs=1e-9)


def test_fit_two_points():
    fit = fit_path_loss([PathLossSample(1.0, 30.0), PathLossSample(10.0, 50.0)])
    assert fit.alpha_hat == pytest.approx(2.0)
    assert fit.pl0_hat_db == pytest.approx(30.0)


def test_fit_degenerate_inputs():
    with pytest.raises(RankDeficientError):
        fit_path_loss([PathLossSample(5.0, 30.0), PathLossSample(5.0, 31.0)])
    with pytest.raises(DegenerateInputError):
        fit_path_loss([PathLossSample(5.0, 30.0)])
    with pytest.raises(ValidationError):
        PathLossSample(0.0, 30.0)


def test_sigma_recovery_monte_carlo():
    d = np.random.default_rng(5).uniform(5.6, 16.5, 10_000)
    pl = sample_path_loss(OPEN_S2, d, rng=6)
    fit = fit_path_loss(PathLossSample(a, b) for a, b in zip(d, pl))
    assert abs(fit.sigma_hat_db - 3.06) <= 0.15


@given(st.floats(5.6, 16.5), st.floats(1.01, 3.0))
def test_static_monotone_in_distance(d, factor):
    assert path_loss_static(flat(d * factor), OPEN_S2) > path_loss_static(flat(d), OPEN_S2)


# --- path loss from measured PDP energies ------------------------------------------

def _scanset(amps, n=200):
    scans = np.zeros((len(amps), n))
    scans[:, 20] = amps
    return ScanSet(scans, np.array([1.0]))


def test_measured_pl_same_set():
    ref = _scanset([1.0, 0.8, 1.2])
    assert measured_path_loss(ref, ref, pl_d0_db=40.0) == pytest.approx(40.0)


def test_measured_pl_halved_samples():
    ref = _scanset([1.0, 0.8, 1.2])
    at = ScanSet(ref.scans * 0.5, ref.template)
    assert measured_path_loss(ref, at) == pytest.approx(10 * math.log10(4), rel=1e-12)
    assert measured_path_loss(ref, at) == pytest.approx(6.0206, abs=1e-4)


def test_measured_pl_known_energies():
    ref = _scanset([1.0, 1.0])
    at = _scanset([math.sqrt(0.1), math.sqrt(0.1)])
    assert measured_path_loss(ref, at) == pytest.approx(10.0, rel=1e-12)


def test_measured_pl_zero_energy():
    ref = _scanset([1.0, 1.0])
    at = ScanSet(np.zeros((2, 200)), np.array([1.0]))
    with pytest.raises(DegenerateInputError):
        measured_path_loss(ref, at)

"""Delay- and frequency-domain statistics of CIRs and PDPs."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .core import (
    BAND_HIGH_HZ,
    BAND_LOW_HZ,
    Cir,
    DegenerateInputError,
    Pdp,
    ScanSet,
    ValidationError,
)

#: MPC detection threshold relative to the strongest tap (dB).
MPC_THRESHOLD_DB = -32.5
#: Zero-padding factor of the CFR DFT.
CFR_PAD = 4


@dataclass(frozen=True)
class DelayStats:
    t_mean: float  # ns
    t_rms: float  # ns
    t_sq: float  # ns^2
    cb_hz: float  # +inf when t_rms == 0


@dataclass(frozen=True, eq=False)
class Cfr:
    freqs: np.ndarray  # baseband grid, Hz
    mag_db: np.ndarray
    h: np.ndarray  # complex response
    f_offset: float = BAND_LOW_HZ

    @property
    def rf_freqs(self) -> np.ndarray:
        return self.freqs + self.f_offset


def average_pdp(scans_or_cirs: Union[ScanSet, Sequence[Cir]], clean_cfg=None) -> Pdp:
    """Scan-averaged PDP on the sampling grid.

    A :class:`ScanSet` is first deconvolved scan by scan with CLEAN. Sparse
    taps are gridded to the nearest sample (taps in one bin add in amplitude).
    """
    if isinstance(scans_or_cirs, ScanSet):
        from .estimation import CleanConfig, clean_deconvolve

        cfg = clean_cfg or CleanConfig()
        ss = scans_or_cirs
        cirs = [clean_deconvolve(s, ss.template, cfg, ss.t_s).cir for s in ss.scans]
    else:
        cirs = list(scans_or_cirs)
    if not cirs:
        raise DegenerateInputError("empty input")
    t_s, t_window = cirs[0].t_s, cirs[0].t_window
    if any(c.t_s != t_s or c.t_window != t_window for c in cirs):
        raise ValidationError("CIRs are not on a common grid")
    h = np.stack([c.gridded() for c in cirs])
    p = np.mean(h**2, axis=0)
    return Pdp(np.arange(p.size) * t_s, p, normalization=float(p.sum()), t_s=t_s)


def sparse_pdp(cir: Cir) -> Pdp:
    return Pdp(cir.tau, cir.a**2, normalization=cir.energy, cluster=cir.cluster)


def threshold_pdp(pdp: Pdp, rel_db: float = MPC_THRESHOLD_DB) -> Pdp:
    """Drop bins more than ``-rel_db`` dB below the strongest bin."""
    if pdp.p.size == 0 or pdp.p.max() <= 0:
        return pdp
    keep = pdp.p >= pdp.p.max() * 10.0 ** (rel_db / 10.0)
    cl = pdp.cluster[keep] if pdp.cluster is not None else None
    return Pdp(pdp.t[keep], pdp.p[keep], pdp.normalization, cl, pdp.t_s)


def delay_stats(pdp: Pdp) -> DelayStats:
    """Mean excess delay, RMS delay spread and the 1/(5 t_rms) coherence bandwidth.

    The spread is accumulated around the mean rather than as
    ``t_sq - t_mean**2`` to avoid cancellation on narrow profiles.
    """
    p, t = pdp.p, pdp.t
    total = float(np.sum(p))
    if not total > 0:
        raise DegenerateInputError("PDP has zero power")
    w = p / total
    t_mean = float(np.sum(w * t))
    t_sq = float(np.sum(w * t * t))
    t_rms = math.sqrt(float(np.sum(w * (t - t_mean) ** 2)))
    return DelayStats(t_mean, t_rms, t_sq, coherence_bandwidth(t_rms))


def coherence_bandwidth(t_rms_ns: float) -> float:
    if t_rms_ns <= 0:
        return math.inf
    return 1e9 / (5.0 * t_rms_ns)


def cfr(cir: Cir, dft_size: Optional[int] = None, f_offset: float = BAND_LOW_HZ) -> Cfr:
    """DFT of the gridded CIR. Baseband bin k maps to RF ``f_offset + k / (N T_s)``."""
    h = cir.gridded()
    n = dft_size or CFR_PAD * h.size
    if n < h.size:
        raise ValidationError("dft_size smaller than the CIR grid")
    H = np.fft.fft(h, n)
    freqs = np.arange(n) / (n * cir.t_s * 1e-9)
    with np.errstate(divide="ignore"):
        mag_db = 20.0 * np.log10(np.abs(H))
    return Cfr(freqs, mag_db, H, f_offset)


def subband_power_stats(
    ensemble: Sequence[Cir],
    band_start: float = BAND_LOW_HZ,
    band_width: float = 150e6,
    n_bands: Optional[int] = None,
    band_stop: float = BAND_HIGH_HZ,
    f_offset: float = BAND_LOW_HZ,
    dft_size: Optional[int] = None,
) -> list[tuple[float, float, float]]:
    """Per sub-band ``(center Hz, mean dB, variance dB^2)`` of in-band power across CIRs.

    In-band power is the mean of |H|^2 over the DFT bins inside the band, so
    bands holding different bin counts stay comparable.
    """
    ensemble = list(ensemble)
    if not ensemble:
        raise DegenerateInputError("empty ensemble")
    if not band_width > 0:
        raise ValidationError("band_width must be > 0")
    if n_bands is None:
        n_bands = int(math.floor((band_stop - band_start) / band_width + 1e-9))
    first = cfr(ensemble[0], dft_size, f_offset)
    nyquist = 0.5 / (ensemble[0].t_s * 1e-9)
    lo_bb = band_start - f_offset
    hi_bb = lo_bb + n_bands * band_width
    if n_bands < 1 or lo_bb < 0 or hi_bb > nyquist:
        raise ValidationError("sub-bands fall outside the representable frequency grid")
    edges = lo_bb + band_width * np.arange(n_bands + 1)
    masks = [(first.freqs >= edges[b]) & (first.freqs < edges[b + 1]) for b in range(n_bands)]
    if any(not m.any() for m in masks):
        raise ValidationError("sub-band narrower than the DFT bin spacing")
    powers = np.empty((len(ensemble), n_bands))
    for i, c in enumerate(ensemble):
        H2 = np.abs(cfr(c, dft_size, f_offset).h) ** 2
        for b, m in enumerate(masks):
            powers[i, b] = np.mean(H2[m])
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(powers)
    var = db.var(axis=0, ddof=1) if len(ensemble) > 1 else np.zeros(n_bands)
    centers = f_offset + 0.5 * (edges[:-1] + edges[1:])
    return [(float(c), float(m), float(v)) for c, m, v in zip(centers, db.mean(axis=0), var)]


def mpc_arrival_times(ensemble: Sequence[Cir], rel_db: float = MPC_THRESHOLD_DB) -> np.ndarray:
    """Delays of all taps within ``-rel_db`` dB of their CIR's strongest tap."""
    out = []
    for c in ensemble:
        if len(c) and c.a.max() > 0:
            out.append(c.tau[c.a**2 >= c.a.max() ** 2 * 10.0 ** (rel_db / 10.0)])
    return np.sort(np.concatenate(out)) if out else np.zeros(0)


def toa_cdf(ensemble: Sequence[Cir], rel_db: float = MPC_THRESHOLD_DB):
    """Empirical CDF ``(toa_ns, cdf)`` of thresholded MPC arrival times."""
    t = mpc_arrival_times(ensemble, rel_db)
    return t, np.arange(1, t.size + 1) / max(t.size, 1)

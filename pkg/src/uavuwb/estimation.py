"""Inverse pipeline: CLEAN deconvolution, cluster labeling and parameter fits."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from ._regress import within_group_slope
from .core import (
    T_S_NS,
    T_WINDOW_NS,
    Cir,
    DegenerateInputError,
    ValidationError,
)
from .sv import DYNAMIC_RANGE_DB, ray_horizon


@dataclass(frozen=True)
class CleanConfig:
    stop_fraction: float = 0.10
    max_iterations: Optional[int] = None  # default 10 * window / T_s

    def __post_init__(self):
        if not 0 < self.stop_fraction < 1:
            raise ValidationError("stop_fraction must lie in (0, 1)")


@dataclass
class CleanResult:
    cir: Cir
    residual: np.ndarray = field(repr=False)
    iterations: int = 0
    truncated: bool = False
    residual_energy: list = field(default_factory=list, repr=False)


def clean_deconvolve(
    scan, template, cfg: CleanConfig = CleanConfig(), t_s: float = T_S_NS
) -> CleanResult:
    """Serial template cancellation (CLEAN).

    Each pass picks the lag whose shifted template removes the most residual
    energy, records ``(lag * t_s, amplitude)`` and subtracts it. The loop ends
    once the residual peak drops below ``stop_fraction`` times the scan peak;
    taps weaker than that threshold are dropped from the result.
    """
    r = np.array(scan, dtype=float).reshape(-1)
    t = np.asarray(template, dtype=float).reshape(-1)
    n, L = r.size, t.size
    if not np.any(t):
        raise ValidationError("template must be nonzero")
    t_window = n * t_s
    max_iter = cfg.max_iterations or int(10 * n)
    t_peak = float(np.max(np.abs(t)))
    threshold = cfg.stop_fraction * float(np.max(np.abs(r))) if n else 0.0
    # energy of the template truncated at the scan end, per lag
    tail = np.cumsum((t**2)[::-1])[::-1]
    e_lag = np.full(n, tail[0])
    if L > 1:
        k = np.arange(max(n - L + 1, 0), n)
        e_lag[k] = np.cumsum(t**2)[n - k - 1]

    taps: dict[int, float] = {}
    energies = [float(r @ r)]
    it = 0
    truncated = False
    while threshold > 0 and np.max(np.abs(r)) >= threshold:
        if it >= max_iter:
            truncated = True
            break
        corr = np.correlate(np.concatenate((r, np.zeros(L - 1))), t, mode="valid")
        with np.errstate(divide="ignore", invalid="ignore"):
            score = np.where((corr > 0) & (e_lag > 0), corr / np.sqrt(e_lag), -np.inf)
        lag = int(np.argmax(score))
        if not np.isfinite(score[lag]):
            break
        amp = corr[lag] / e_lag[lag]
        seg = min(L, n - lag)
        r[lag:lag + seg] -= amp * t[:seg]
        taps[lag] = taps.get(lag, 0.0) + amp
        energies.append(float(r @ r))
        it += 1

    lags = np.array(sorted(taps), dtype=int)
    amps = np.array([taps[k] for k in lags])
    keep = amps * t_peak >= threshold if lags.size else np.zeros(0, dtype=bool)
    cir = Cir(lags[keep] * t_s, amps[keep], t_s=t_s, t_window=t_window)
    return CleanResult(cir, r, it, truncated, energies)


def partition_clusters(cir: Cir, gap_ns: float) -> Cir:
    """Relabel taps: a new cluster starts wherever consecutive taps are > ``gap_ns`` apart."""
    if len(cir) == 0:
        return cir
    labels = np.concatenate(([0], np.cumsum(np.diff(cir.tau) > gap_ns)))
    return Cir(cir.tau, cir.a, labels, t_s=cir.t_s, t_window=cir.t_window)


def default_gap(lam_prior: float) -> float:
    return 5.0 / lam_prior


@dataclass
class FitReport:
    Lambda_hat: Optional[float] = None
    lambda_hat: Optional[float] = None
    mu_hat: Optional[float] = None
    beta_hat: Optional[float] = None
    c_bar_hat: Optional[float] = None
    eta_hat: Optional[float] = None
    xi_hat: Optional[float] = None
    m0_hat: Optional[float] = None
    v0_hat: Optional[float] = None
    alpha_hat: Optional[float] = None
    pl0_hat: Optional[float] = None
    sigma_hat: Optional[float] = None
    label_source: str = "truth"
    diagnostics: dict = field(default_factory=dict)

    PARAMS = (
        "Lambda_hat", "lambda_hat", "mu_hat", "beta_hat", "c_bar_hat",
        "eta_hat", "xi_hat", "m0_hat", "v0_hat", "alpha_hat", "pl0_hat", "sigma_hat",
    )

    def values(self) -> dict:
        return {k: getattr(self, k) for k in self.PARAMS}

    def missing(self) -> list[str]:
        return [k for k, v in self.values().items() if v is None]

    def merge(self, other: "FitReport") -> "FitReport":
        out = FitReport(**{k: v for k, v in asdict(self).items() if k != "diagnostics"})
        for k, v in other.values().items():
            if v is not None:
                setattr(out, k, v)
        out.diagnostics = {**self.diagnostics, **other.diagnostics}
        return out


def _cluster_table(ensemble: Sequence[Cir]):
    """Per-tap arrays (cir id, cluster key, Gamma, tau rel., next gap, a) in cluster order."""
    rows = []
    for i, cir in enumerate(ensemble):
        if len(cir) == 0:
            continue
        labels = np.unique(cir.cluster)
        starts = np.array([cir.tau[cir.cluster == c].min() for c in labels])
        order = np.argsort(starts)
        labels, starts = labels[order], starts[order]
        nxt = np.append(np.diff(starts), np.inf)
        for j, c in enumerate(labels):
            sel = cir.cluster == c
            rows.append((i, starts[j], nxt[j], cir.tau[sel] - starts[j], cir.a[sel], cir.t_window))
    return rows


def truncated_exponential_rate(x, limit) -> float:
    """Rate MLE for exponential gaps ``x`` each observed only when below ``limit``.

    Gaps that would have crossed the observation window are never recorded,
    so every observed gap is conditioned on ``x < limit``. Falls back to the
    plain MLE when the truncation carries no information.
    """
    x = np.asarray(x, dtype=float)
    limit = np.asarray(limit, dtype=float)
    plain = x.size / x.sum()

    def score(rate):
        z = rate * limit
        # limit * exp(-z) / (1 - exp(-z)), written stably
        w = np.where(z > 1e-8, limit / np.expm1(np.minimum(z, 700.0)), 1.0 / rate)
        return x.size / rate - x.sum() - np.sum(w)

    lo, hi = plain * 1e-3, plain
    if score(lo) <= 0:
        return float(plain)
    while score(hi) > 0:
        hi *= 2.0
    return float(brentq(score, lo, hi, xtol=1e-14, rtol=1e-12))


def fit_sv_params(
    ensemble: Sequence[Cir],
    *,
    dynamic_range_db: Optional[float] = DYNAMIC_RANGE_DB,
    label_source: str = "truth",
) -> FitReport:
    """Cluster/ray rates and decay constants from labeled CIRs.

    Lambda: reciprocal mean gap between consecutive cluster delays.
    beta: pooled within-cluster slope of ln a^2 on intra-cluster delay, using
    only rays that arrive before the next cluster starts.
    mu: within-CIR slope of the fitted cluster intercepts on cluster delay.
    lambda: exponential MLE of the ray process; with ``dynamic_range_db``
    each cluster counts as observed out to the delay where its mean power has
    decayed by that much (or the window edge), otherwise the plain mean
    inter-arrival is used.
    """
    ensemble = list(ensemble)
    report = FitReport(label_source=label_source)
    diag = report.diagnostics
    if len(ensemble) < 10:
        diag["warning"] = f"only {len(ensemble)} CIRs (>= 10 expected)"
    rows = _cluster_table(ensemble)
    if not rows:
        diag["error"] = "no taps in ensemble"
        return report

    counts = np.bincount([r[0] for r in rows], minlength=len(ensemble))
    counts = counts[[len(c) > 0 for c in ensemble]]
    report.c_bar_hat = float(counts.mean())
    hist = np.bincount(counts)
    diag["cluster_count_hist"] = {int(k): int(v) for k, v in enumerate(hist) if v}

    gaps = np.array([r[2] for r in rows if np.isfinite(r[2])])
    room = np.array([r[5] - r[1] for r in rows if np.isfinite(r[2])])
    diag["n_cluster_gaps"] = int(gaps.size)
    if gaps.size >= 1 and gaps.sum() > 0:
        report.Lambda_hat = truncated_exponential_rate(gaps, room)
    else:
        diag["Lambda"] = "fewer than 2 cluster arrivals"

    # intra-cluster decay from the non-overlapped part of each cluster
    xs, ys, grp = [], [], []
    for k, (_, _, nxt, tau, a, _) in enumerate(rows):
        sel = (tau < nxt) & (a > 0)
        xs.append(tau[sel])
        ys.append(np.log(a[sel] ** 2))
        grp.append(np.full(int(sel.sum()), k))
    x, y, g = np.concatenate(xs), np.concatenate(ys), np.concatenate(grp)
    slope, sxx = within_group_slope(x, y, g)
    if sxx > 0 and slope < 0:
        report.beta_hat = float(-1.0 / slope)
        resid = y - slope * x
        resid -= (np.bincount(g, weights=resid) / np.maximum(np.bincount(g), 1))[g]
        diag["beta_residual_rms"] = float(np.sqrt(np.mean(resid**2)))
    else:
        diag["beta"] = "no usable intra-cluster decay"

    # cluster intercepts and inter-cluster decay
    if report.beta_hat is not None:
        inv_b = 1.0 / report.beta_hat
        icpt = np.array([
            np.mean(y[g == k] + inv_b * x[g == k]) if np.any(g == k) else np.nan
            for k in range(len(rows))
        ])
        gam = np.array([r[1] for r in rows])
        cid = np.array([r[0] for r in rows])
        ok = np.isfinite(icpt)
        mslope, msxx = within_group_slope(gam[ok], icpt[ok], cid[ok])
        if msxx > 0 and mslope < 0:
            report.mu_hat = float(-1.0 / mslope)
        else:
            diag["mu"] = "fewer than 2 clusters in any CIR"

    # ray arrival rate
    events = sum(r[3].size - 1 for r in rows)
    if dynamic_range_db is not None and report.beta_hat is not None:
        h = ray_horizon(report.beta_hat, dynamic_range_db)
        exposure = sum(min(h, r[5] - r[1]) for r in rows)
        diag["lambda_method"] = f"censored MLE, {dynamic_range_db:g} dB horizon"
    else:
        exposure = sum(float(r[3][-1]) for r in rows)
        diag["lambda_method"] = "mean inter-arrival"
    diag["n_ray_gaps"] = int(events)
    if events >= 1 and exposure > 0:
        report.lambda_hat = float(events / exposure)
    else:
        diag["lambda"] = "fewer than 2 ray arrivals"
    return report


@dataclass
class NakagamiFit:
    eta_hat: Optional[float]
    xi_hat: Optional[float]
    m_hat: np.ndarray = field(repr=False)
    omega_hat: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)
    m0_hat: Optional[float] = None
    v0_hat: Optional[float] = None
    n_sentinel: int = 0


def nakagami_moments(y) -> tuple[float, float]:
    """Moment estimates ``(m, Omega)``; m is +inf when Y^2 has no spread."""
    y2 = np.asarray(y, dtype=float) ** 2
    omega = float(y2.mean())
    var = float(np.var(y2, ddof=1)) if y2.size > 1 else 0.0
    if var <= (1e-12 * omega) ** 2:
        return math.inf, omega
    return omega**2 / var, omega


def fit_nakagami(
    ensemble: Sequence[Cir],
    groups: Optional[Sequence] = None,
    *,
    min_realizations: int = 30,
    bin_ns: Optional[float] = None,
    log_domain: str = "db",
) -> NakagamiFit:
    """Per-delay-bin Nakagami moment fits across realizations, then a lognormal over m.

    Taps are binned on ``bin_ns`` (default: the CIR sampling period). With
    ``groups``, bins are kept apart per group (e.g. per measurement point).
    ``eta_hat``/``xi_hat`` are the mean and standard deviation of
    ``10 log10 m`` (or ``ln m`` for ``log_domain="ln"``) over bins with a
    finite estimate.
    """
    ensemble = list(ensemble)
    if groups is None:
        groups = np.zeros(len(ensemble), dtype=int)
    groups = np.asarray(groups)
    tg, tb, ta = [], [], []
    for cir, grp in zip(ensemble, groups):
        w = bin_ns or cir.t_s
        tb.append(np.rint(cir.tau / w).astype(np.int64))
        ta.append(cir.a)
        tg.append(np.full(len(cir), grp))
    if not ta or sum(len(v) for v in ta) == 0:
        raise DegenerateInputError("no taps to fit")
    bins, amp, grp = np.concatenate(tb), np.concatenate(ta), np.concatenate(tg)
    keys = np.stack((grp.astype(np.int64), bins), axis=1)
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    n = np.bincount(inv)
    y2 = amp**2
    omega = np.bincount(inv, weights=y2) / n
    dev = y2 - omega[inv]
    var = np.bincount(inv, weights=dev**2) / np.maximum(n - 1, 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        m = np.where(var > (1e-12 * omega) ** 2, omega**2 / var, np.inf)

    enough = n >= min_realizations
    finite = enough & np.isfinite(m) & (m > 0)
    scale = 10.0 / math.log(10.0) if log_domain == "db" else 1.0
    logs = scale * np.log(m[finite])
    eta = float(logs.mean()) if logs.size else None
    xi = float(logs.std(ddof=1)) if logs.size > 1 else (0.0 if logs.size else None)

    # first-arriving usable bin of each group
    first = []
    for gval in np.unique(uniq[enough, 0]):
        cand = np.nonzero(enough & (uniq[:, 0] == gval))[0]
        j = cand[np.argmin(uniq[cand, 1])]
        if np.isfinite(m[j]):
            first.append(m[j])
    m0 = float(np.mean(first)) if first else None
    v0 = float(np.var(first)) if first else None
    return NakagamiFit(
        eta, xi, m[enough], omega[enough], n[enough], m0, v0,
        int(np.sum(enough & ~np.isfinite(m))),
    )


def delay_dependent_m_stats(m0: float, v0: float, mean_m: float, var_m: float, gamma: float):
    """``(m0 - E[m] gamma, v0 - Var[m] gamma)``: the delay-dependent m-factor
    mean and spread as tabulated for the measurement campaign.

    Reported for diagnostics only; synthesis uses the scenario-constant
    ``(eta, xi)`` pair.
    """
    return m0 - mean_m * gamma, v0 - var_m * gamma


def fit_path_loss_from_energy(cirs: Sequence[Cir], distances: Sequence[float], d0: float = 1.0):
    """Path loss fit on ``-10 log10(CIR energy)`` against distance."""
    from .pathloss import PathLossSample, fit_path_loss

    samples = [
        PathLossSample(float(d), -10.0 * math.log10(c.energy))
        for c, d in zip(cirs, distances)
        if c.energy > 0
    ]
    return fit_path_loss(samples, d0)


def fit_report(
    cirs: Sequence[Cir],
    *,
    groups: Optional[Sequence] = None,
    distances: Optional[Sequence[float]] = None,
    labels: str = "truth",
    gap_ns: Optional[float] = None,
    dynamic_range_db: Optional[float] = DYNAMIC_RANGE_DB,
) -> FitReport:
    """Combined S-V, Nakagami and (if distances vary) path loss fit of an ensemble.

    ``labels="gap"`` relabels clusters with :func:`partition_clusters` first.
    """
    cirs = list(cirs)
    if labels == "gap":
        if gap_ns is None:
            raise ValidationError("gap labeling needs gap_ns")
        cirs = [partition_clusters(c, gap_ns) for c in cirs]
        source = f"gap rule ({gap_ns:.9g} ns)"
    else:
        source = "truth"
    report = fit_sv_params(cirs, dynamic_range_db=dynamic_range_db, label_source=source)
    if groups is None:
        # each CIR has its own mean profile; bins would mix large-scale and fading spread
        report.diagnostics["nakagami"] = "needs repeated realizations per location (groups)"
    else:
        _fill_nakagami(report, cirs, groups)
    if distances is not None and len(set(distances)) >= 2:
        pf = fit_path_loss_from_energy(cirs, distances)
        report.alpha_hat, report.pl0_hat, report.sigma_hat = pf.alpha_hat, pf.pl0_hat_db, pf.sigma_hat_db
    else:
        report.diagnostics["pathloss"] = "single link distance; path loss not fitted"
    return report


def _fill_nakagami(report: FitReport, cirs, groups) -> None:
    try:
        nf = fit_nakagami(cirs, groups)
        report.eta_hat, report.xi_hat = nf.eta_hat, nf.xi_hat
        report.m0_hat, report.v0_hat = nf.m0_hat, nf.v0_hat
        report.diagnostics["nakagami_bins"] = int(len(nf.m_hat))
        if nf.eta_hat is None:
            report.diagnostics["nakagami"] = "no delay bin with >= 30 realizations"
    except DegenerateInputError as exc:
        report.diagnostics["nakagami"] = str(exc)


def monocycle_template(t_s: float = T_S_NS, width_ns: float = 0.5) -> np.ndarray:
    """Gaussian monocycle sampled on ``t_s``, truncated to +/- 2.5 widths, peak 1.

    Only for synthetic scan sets; measured data brings its own template.
    """
    half = int(math.ceil(2.5 * width_ns / t_s))
    t = np.arange(-half, half + 1) * t_s / width_ns
    pulse = -t * np.exp(-t * t / 0.5)
    pulse -= pulse[0]
    return pulse / np.max(np.abs(pulse))


def render_scanset(
    cirs: Sequence[Cir], template, noise_std: float = 0.0, rng=None, **scanset_kw
):
    """Forward model: gridded CIR convolved with the template, plus white noise."""
    from .core import ScanSet, as_generator

    template = np.asarray(template, dtype=float)
    gen = as_generator(rng)
    scans = []
    for c in cirs:
        h = c.gridded()
        s = np.convolve(h, template)[: h.size]
        if noise_std > 0:
            s = s + gen.normal(0.0, noise_std, size=s.size)
        scans.append(s)
    return ScanSet(np.array(scans), template, t_s=cirs[0].t_s, **scanset_kw)

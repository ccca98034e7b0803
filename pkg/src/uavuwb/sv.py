"""Saleh-Valenzuela CIR synthesis with height-dependent cluster statistics.

Generation chain for one CIR::

    cluster count -> cluster delays -> rays per cluster -> inter-cluster decay
    -> (overlap-aware) mean power profile -> path loss scaling -> Nakagami draw

Cluster and ray arrivals are anchored at delay 0. Rays of a cluster are drawn
until the window edge or until their mean power falls ``dynamic_range_db``
below the cluster's first ray.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from ._regress import within_group_slope
from .core import (
    T_S_NS,
    T_WINDOW_NS,
    Cir,
    DegenerateInputError,
    Geometry,
    NakagamiParams,
    Pdp,
    RandomSource,
    RngLike,
    ScenarioPreset,
    SvParams,
    ValidationError,
    as_generator,
    n_samples,
)
from .pathloss import path_loss_static
from .presets import SWEEP_HEIGHTS

DYNAMIC_RANGE_DB = 40.0


@dataclass(frozen=True, eq=False)
class ClusterRealization:
    """One cluster: delay ``Gamma`` (ns), decay constants and its rays.

    ``ray_tau`` is relative to ``Gamma`` and starts at 0; ``ray_power`` holds
    the undecayed mean ray power E(a^2). ``mu_n`` stays None until the
    inter-cluster decay has been realized.
    """

    Gamma: float
    beta_n: float
    ray_tau: np.ndarray
    ray_power: np.ndarray
    mu_n: Optional[float] = None

    def __post_init__(self):
        tau = np.asarray(self.ray_tau, dtype=float).reshape(-1)
        power = np.asarray(self.ray_power, dtype=float).reshape(-1)
        object.__setattr__(self, "ray_tau", tau)
        object.__setattr__(self, "ray_power", power)
        if self.Gamma < 0 or self.beta_n <= 0:
            raise ValidationError("Gamma must be >= 0 and beta_n > 0")
        if tau.size == 0 or tau[0] != 0 or np.any(np.diff(tau) <= 0):
            raise ValidationError("ray delays must start at 0 and increase strictly")
        if tau.shape != power.shape or np.any(power <= 0):
            raise ValidationError("ray powers must be positive, one per ray")


@dataclass(frozen=True)
class ClusterOverlap:
    chi: float
    X: float


def draw_cluster_count(h_uav: float, sv: SvParams, rng: RngLike) -> int:
    """``max(1, round(c_e / h + gamma))`` with gamma ~ N(0, sigma_N^2)."""
    if not h_uav > 0:
        raise ValidationError("h_uav must be > 0")
    gamma = as_generator(rng).normal(0.0, sv.sigma_N) if sv.sigma_N > 0 else 0.0
    return max(1, int(math.floor(sv.c_e / h_uav + gamma + 0.5)))


def draw_arrival_times(count: int, rate: float, rng: RngLike) -> np.ndarray:
    """``count`` Poisson arrival times (ns) starting with a fixed arrival at 0."""
    if not rate > 0:
        raise ValidationError("rate must be > 0")
    if count < 1:
        return np.zeros(0)
    gaps = as_generator(rng).exponential(1.0 / rate, size=count - 1)
    return np.concatenate(([0.0], np.cumsum(gaps)))


def arrivals_until(horizon: float, rate: float, rng: RngLike) -> np.ndarray:
    """Poisson arrivals on ``[0, horizon)`` with the first one fixed at 0."""
    if not rate > 0:
        raise ValidationError("rate must be > 0")
    gen = as_generator(rng)
    times = [np.zeros(1)]
    last = 0.0
    while True:
        n = int(rate * max(horizon - last, 0.0) + 4 * math.sqrt(rate * horizon + 1) + 8)
        t = last + np.cumsum(gen.exponential(1.0 / rate, size=n))
        inside = t[t < horizon]
        times.append(inside)
        if inside.size < t.size:
            break
        last = t[-1]
    return np.concatenate(times)


def ray_horizon(beta: float, dynamic_range_db: float = DYNAMIC_RANGE_DB) -> float:
    """Intra-cluster delay at which exp(-tau/beta) drops by ``dynamic_range_db``."""
    return beta * dynamic_range_db / 10.0 * math.log(10.0)


def draw_clusters(
    h_uav: float,
    sv: SvParams,
    rng: RngLike,
    *,
    t_window: float = T_WINDOW_NS,
    dynamic_range_db: float = DYNAMIC_RANGE_DB,
) -> list[ClusterRealization]:
    gen = as_generator(rng)
    count = draw_cluster_count(h_uav, sv, gen)
    gammas = draw_arrival_times(count, sv.Lambda, gen)
    gammas = gammas[gammas < t_window]
    clusters = []
    for g in gammas:
        horizon = min(ray_horizon(sv.beta, dynamic_range_db), t_window - g)
        tau = arrivals_until(horizon, sv.lam, gen)
        clusters.append(ClusterRealization(float(g), sv.beta, tau, np.ones_like(tau)))
    return clusters


def _cluster_count_matrix(sv: SvParams, h: float, n: int, gen: np.random.Generator):
    gamma = gen.normal(0.0, sv.sigma_N, size=n) if sv.sigma_N > 0 else np.zeros(n)
    counts = np.maximum(1, np.floor(sv.c_e / h + gamma + 0.5)).astype(int)
    cmax = int(counts.max())
    gaps = gen.exponential(1.0 / sv.Lambda, size=(n, max(cmax - 1, 0)))
    gammas = np.concatenate((np.zeros((n, 1)), np.cumsum(gaps, axis=1)), axis=1)
    valid = np.arange(cmax)[None, :] < counts[:, None]
    return gammas, valid


@lru_cache(maxsize=None)
def calibrate_mu_scale(
    sv: SvParams,
    heights: tuple = SWEEP_HEIGHTS,
    t_window: float = T_WINDOW_NS,
    n_per_height: int = 25000,
    seed: int = 20170704,
) -> float:
    """Scale k of ``mu_n = k (c_d Gamma + h / c_h) + psi``.

    k is chosen so that the pooled within-CIR regression slope of
    ln(cluster power) on cluster delay equals ``-1 / sv.mu`` over the
    height sweep, i.e. a log-linear fit of cluster powers returns the
    tabulated inter-cluster decay constant.
    """
    gen = np.random.default_rng(seed)
    xs, hs, psis, groups = [], [], [], []
    offset = 0
    for h in heights:
        gammas, valid = _cluster_count_matrix(sv, h, n_per_height, gen)
        valid &= gammas < t_window
        psi = gen.normal(0.0, sv.sigma_c, size=gammas.shape)
        rows = np.nonzero(valid.sum(axis=1) >= 2)[0]
        sub = valid[rows]
        xs.append(gammas[rows][sub])
        psis.append(psi[rows][sub])
        hs.append(np.full(int(sub.sum()), h))
        groups.append((rows[:, None] + offset + np.zeros_like(sub, dtype=int))[sub])
        offset += n_per_height
    x = np.concatenate(xs)
    if x.size == 0:
        return sv.mu / (float(np.mean(heights)) / sv.c_h)
    psi = np.concatenate(psis)
    base = sv.c_d * x + np.concatenate(hs) / sv.c_h
    grp = np.concatenate(groups)

    def slope_gap(k):
        mu_n = np.maximum(k * base + psi, sv.mu_min)
        return within_group_slope(x, -x / mu_n, grp)[0] + 1.0 / sv.mu

    lo, hi = 1e-6, 1e3
    if slope_gap(lo) > 0 or slope_gap(hi) < 0:
        return sv.mu / float(np.mean(base))
    return float(brentq(slope_gap, lo, hi, xtol=1e-12, rtol=1e-10))


def mu_scale(sv: SvParams) -> float:
    return sv.mu_scale if sv.mu_scale is not None else calibrate_mu_scale(sv)


def realize_inter_cluster_decay(
    clusters: Sequence[ClusterRealization], sv: SvParams, h_uav: float, rng: RngLike
) -> list[ClusterRealization]:
    """Draw ``mu_n`` for every cluster that does not carry one yet."""
    gen = as_generator(rng)
    k = mu_scale(sv)
    out = []
    for c in clusters:
        if c.mu_n is None:
            psi = gen.normal(0.0, sv.sigma_c) if sv.sigma_c > 0 else 0.0
            mu_n = max(k * (sv.c_d * c.Gamma + h_uav / sv.c_h) + psi, sv.mu_min)
            c = replace(c, mu_n=float(mu_n))
        out.append(c)
    return out


def _profile(clusters, overlap: bool) -> Pdp:
    if not clusters:
        raise DegenerateInputError("no clusters")
    gammas = np.array([c.Gamma for c in clusters])
    if np.any(np.diff(gammas) < 0):
        raise ValidationError("clusters must be sorted by Gamma")
    delays, powers, labels = [], [], []
    for n, c in enumerate(clusters):
        mu_n = c.mu_n
        p = c.ray_power * np.exp(-c.ray_tau / c.beta_n) * math.exp(-c.Gamma / mu_n)
        delays.append(c.Gamma + c.ray_tau)
        powers.append(p)
        labels.append(np.full(c.ray_tau.size, n))
    if overlap:
        for n in range(1, len(clusters)):
            prev, cur = clusters[n - 1], clusters[n]
            ov = ClusterOverlap(chi=cur.Gamma - prev.Gamma, X=0.5 * (cur.beta_n + prev.beta_n))
            hit = prev.ray_tau > ov.chi
            if np.any(hit):
                powers[n - 1] = np.where(hit, powers[n - 1] * math.exp(-ov.chi / ov.X), powers[n - 1])
    t = np.concatenate(delays)
    p = np.concatenate(powers)
    lab = np.concatenate(labels)
    order = np.argsort(t, kind="stable")
    total = float(p.sum())
    if not total > 0:
        raise DegenerateInputError("profile has zero energy")
    return Pdp(t[order], p[order] / total, normalization=total, cluster=lab[order])


def mean_power_profile(
    clusters: Sequence[ClusterRealization], sv: SvParams, h_uav: float, rng: RngLike
) -> Pdp:
    """Non-overlapping cluster profile, normalized to unit energy."""
    if not clusters:
        raise DegenerateInputError("no clusters")
    return _profile(realize_inter_cluster_decay(clusters, sv, h_uav, rng), overlap=False)


def overlap_power_profile(clusters: Sequence[ClusterRealization], sv: SvParams) -> Pdp:
    """Profile with the extra decay exp(-chi/X) on rays reaching into the next cluster.

    Clusters without a realized ``mu_n`` use the tabulated ``sv.mu``.
    """
    if not clusters:
        raise DegenerateInputError("no clusters")
    clusters = [c if c.mu_n is not None else replace(c, mu_n=sv.mu) for c in clusters]
    return _profile(clusters, overlap=True)


def draw_m_factors(n: int, nak: NakagamiParams, rng: RngLike) -> np.ndarray:
    """Lognormal m-factors clamped at ``nak.m_min``."""
    loc, scale = nak.ln_params()
    z = as_generator(rng).normal(loc, scale, size=n) if scale > 0 else np.full(n, loc)
    return np.maximum(np.exp(z), nak.m_min)


def nakagami_amplitudes(m, omega, rng: RngLike, size=None) -> np.ndarray:
    """Nakagami(m, omega) draws via the square root of a Gamma(m, omega/m) variate."""
    m = np.asarray(m, dtype=float)
    omega = np.asarray(omega, dtype=float)
    return np.sqrt(as_generator(rng).gamma(m, omega / m, size=size))


def draw_nakagami_amplitudes(
    pdp: Pdp,
    nak: NakagamiParams,
    rng: RngLike,
    *,
    m: Optional[np.ndarray] = None,
    t_s: float = T_S_NS,
    t_window: float = T_WINDOW_NS,
) -> Cir:
    """One faded CIR on the delays of ``pdp``; tap mean powers become the Omegas.

    ``m`` fixes the per-tap m-factors (otherwise drawn from ``nak``).
    """
    gen = as_generator(rng)
    if m is None:
        m = draw_m_factors(len(pdp.t), nak, gen)
    a = nakagami_amplitudes(m, pdp.p, gen) if len(pdp.t) else np.zeros(0)
    return Cir(pdp.t, a, pdp.cluster, t_s=t_s, t_window=t_window)


@dataclass
class GeneratedCir:
    cir: Cir
    clusters: list
    pdp: Pdp
    pl_db: float
    shadowing_db: float


def mean_profile(
    preset: ScenarioPreset,
    geom: Geometry,
    rng: RngLike,
    *,
    t_window: float = T_WINDOW_NS,
    dynamic_range_db: float = DYNAMIC_RANGE_DB,
    shadowing: bool = True,
):
    """Clusters, the path-loss scaled mean power profile, PL and shadowing draw."""
    gen = as_generator(rng)
    clusters = draw_clusters(
        geom.h_uav, preset.sv, gen, t_window=t_window, dynamic_range_db=dynamic_range_db
    )
    clusters = realize_inter_cluster_decay(clusters, preset.sv, geom.h_uav, gen)
    unit = overlap_power_profile(clusters, preset.sv)
    s = float(gen.normal(0.0, preset.pl.sigma_db)) if shadowing and preset.pl.sigma_db > 0 else 0.0
    pl_db = path_loss_static(geom, preset.pl, s)
    scaled = Pdp(unit.t, unit.p * 10.0 ** (-pl_db / 10.0), unit.normalization, unit.cluster)
    return clusters, scaled, pl_db, s


def generate_cir_details(
    preset: ScenarioPreset,
    geom: Geometry,
    rng: RngLike,
    *,
    t_s: float = T_S_NS,
    t_window: float = T_WINDOW_NS,
    dynamic_range_db: float = DYNAMIC_RANGE_DB,
    shadowing: bool = True,
) -> GeneratedCir:
    gen = as_generator(rng)
    clusters, pdp, pl_db, s = mean_profile(
        preset, geom, gen, t_window=t_window, dynamic_range_db=dynamic_range_db, shadowing=shadowing
    )
    cir = draw_nakagami_amplitudes(pdp, preset.nak, gen, t_s=t_s, t_window=t_window)
    return GeneratedCir(cir, clusters, pdp, pl_db, s)


def generate_cir(preset: ScenarioPreset, geom: Geometry, rng: RngLike, **kw) -> Cir:
    """Draw one CIR for ``preset`` at ``geom``; cluster labels are ground truth."""
    return generate_cir_details(preset, geom, rng, **kw).cir


def sweep_geometry(scenario, h_uav: float, horizontal_m: float = 4.0, **kw) -> Geometry:
    """Geometry with the receiver ``horizontal_m`` away from the UAV's ground point.

    With the default 4 m offset the 4-16 m height sweep spans 5.7-16.5 m of
    link distance, the validity range of the path loss tables.
    """
    return Geometry.for_scenario(scenario, h_uav, math.hypot(h_uav, horizontal_m), **kw)


def generate_ensemble(
    preset: ScenarioPreset,
    geoms: Geometry | Sequence[Geometry],
    n: int,
    seed: int,
    **kw,
) -> list[Cir]:
    """``n`` CIRs; CIR ``i`` uses stream ``i`` of ``seed`` and geometry ``geoms[i % len]``."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    if isinstance(geoms, Geometry):
        geoms = [geoms]
    return [
        generate_cir(preset, geoms[i % len(geoms)], RandomSource(seed, i), **kw) for i in range(n)
    ]


def snap_to_grid(pdp: Pdp, t_s: float, t_window: float) -> Pdp:
    """Merge taps sharing a ``t_s`` bin (powers add, first tap's cluster label wins)."""
    idx = np.rint(pdp.t / t_s).astype(int)
    idx = np.clip(idx, 0, n_samples(t_window, t_s) - 1)
    uniq, first, inv = np.unique(idx, return_index=True, return_inverse=True)
    p = np.bincount(inv, weights=pdp.p)
    cluster = pdp.cluster[first] if pdp.cluster is not None else None
    return Pdp(uniq * t_s, p, pdp.normalization, cluster, t_s=t_s)


def small_scale_ensemble(
    preset: ScenarioPreset,
    geom: Geometry,
    n_realizations: int,
    rng: RngLike,
    *,
    t_s: float = T_S_NS,
    t_window: float = T_WINDOW_NS,
    dynamic_range_db: float = DYNAMIC_RANGE_DB,
) -> list[Cir]:
    """Repeated fading draws over one fixed mean profile (one measurement point).

    Delays, mean powers, shadowing and per-tap m-factors are drawn once;
    only the Nakagami amplitudes change between realizations. Taps are
    snapped to the sampling grid first, so each bin holds a single tap.
    """
    gen = as_generator(rng)
    _, pdp, _, _ = mean_profile(
        preset, geom, gen, t_window=t_window, dynamic_range_db=dynamic_range_db
    )
    pdp = snap_to_grid(pdp, t_s, t_window)
    m = draw_m_factors(len(pdp.t), preset.nak, gen)
    amps = nakagami_amplitudes(m, pdp.p, gen, size=(n_realizations, len(pdp.t)))
    return [Cir(pdp.t, row, pdp.cluster, t_s=t_s, t_window=t_window) for row in amps]


def multi_cluster_probability(h_uav: float, sv: SvParams) -> float:
    """P(C >= 2) at height ``h_uav``: the cluster-count noise must lift c_e/h past 1.5."""
    x = 1.5 - sv.c_e / h_uav
    if sv.sigma_N <= 0:
        return 0.0 if x > 0 else 1.0
    return float(norm.sf(x / sv.sigma_N))


def informative_heights(sv: SvParams, heights=SWEEP_HEIGHTS, min_prob: float = 0.01) -> tuple:
    """Heights at which multi-cluster CIRs occur with probability >= ``min_prob``.

    Single-cluster CIRs carry no cluster-gap or inter-cluster decay
    information, so estimation ensembles are best drawn at these heights.
    Falls back to the lowest height when none qualifies.
    """
    keep = tuple(h for h in heights if multi_cluster_probability(h, sv) >= min_prob)
    return keep or (min(heights),)

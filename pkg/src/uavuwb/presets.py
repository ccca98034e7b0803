"""Fitted parameter tables for the open and sub-urban campaigns.

Path loss rows are keyed by (environment, scenario, speed in mph); the
multipath (PDP) and small-scale tables are keyed by (environment, scenario)
only. Values are stored verbatim.
"""
from __future__ import annotations

import math
from functools import lru_cache
from types import MappingProxyType

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from .core import (
    EnvironmentClass,
    NakagamiParams,
    PathLossParams,
    PresetNotFoundError,
    ScenarioId,
    ScenarioPreset,
    SvParams,
)

OPEN, SUBURBAN = EnvironmentClass.OPEN, EnvironmentClass.SUBURBAN
S1, S2, S3 = ScenarioId.S1_FOLIAGE, ScenarioId.S2_GROUND_1M5, ScenarioId.S3_GROUND_7CM

#: Reference UAV height (m) at which the cluster-count constant reproduces c_bar.
C_E_REFERENCE_HEIGHT = 8.0
#: UAV heights of the measurement sweep (m).
SWEEP_HEIGHTS = (4.0, 8.0, 12.0, 16.0)
#: Valid distance range of the path loss fits (m).
PL_DISTANCE_RANGE = (5.6, 16.5)

# (alpha, PL0 dB, sigma dB), "Path Loss parameters for (d = 5.6 m to 16.5 m)"
PATH_LOSS_TABLE = MappingProxyType({
    (OPEN, S1, 0): (2.6471, 34.905, 3.37),
    (OPEN, S2, 0): (2.5418, 24.9965, 3.06),
    (OPEN, S3, 0): (2.9442, 25.8091, 2.799),
    (OPEN, S1, 20): (2.6533, 34.906, 4.02),
    (OPEN, S2, 20): (2.6621, 24.996, 3.91),
    (OPEN, S3, 20): (2.9423, 25.809, 3.44),
    (SUBURBAN, S1, 0): (2.7601, 30.4459, 4.8739),
    (SUBURBAN, S2, 0): (2.606, 24.747, 4.31),
    (SUBURBAN, S3, 0): (3.0374, 21.96, 4.897),
    (SUBURBAN, S1, 20): (2.8350, 30.446, 5.3),
    (SUBURBAN, S2, 20): (2.667, 24.833, 4.96),
    (SUBURBAN, S3, 20): (2.961, 22.73, 4.71),
})

# (C_bar, Lambda 1/ns, lambda 1/ns, mu ns, beta ns), "channel model parameters for PDP"
SV_TABLE = MappingProxyType({
    (OPEN, S1): (2.33, 0.15, 4.34, 2.5, 0.5),
    (OPEN, S2): (2.33, 0.09, 2.210, 2.91, 0.9069),
    (OPEN, S3): (1.0, 0.0498, 0.532, 4.42, 1.21),
    (SUBURBAN, S1): (2.66, 0.789, 0.827, 2.63, 0.9),
    (SUBURBAN, S2): (2.66, 0.0498, 0.717, 2.77, 1.4),
    (SUBURBAN, S3): (2.66, 0.06, 0.615, 3.03, 1.6),
})

# (eta dB, xi), "channel model parameters for Small scale fading"
NAKAGAMI_TABLE = MappingProxyType({
    (OPEN, S1): (1.36, 2.19),
    (OPEN, S2): (1.67, 0.64),
    (OPEN, S3): (1.45, 0.79),
    (SUBURBAN, S1): (1.12, 2.705),
    (SUBURBAN, S2): (1.58, 1.55),
    (SUBURBAN, S3): (1.34, 1.471),
})


def expected_cluster_count(x: float, sigma: float) -> float:
    """E[max(1, round(x + N(0, sigma^2)))]."""
    if sigma == 0:
        return float(max(1, round(x)))
    ks = np.arange(math.floor(x - 10 * sigma) - 1, math.ceil(x + 10 * sigma) + 2)
    probs = norm.cdf((ks + 0.5 - x) / sigma) - norm.cdf((ks - 0.5 - x) / sigma)
    return float(np.sum(np.maximum(ks, 1) * probs))


def calibrate_c_e(c_bar: float, sigma_N: float, h_ref: float = C_E_REFERENCE_HEIGHT) -> float:
    """Environment constant c_e giving a mean cluster count of ``c_bar`` at ``h_ref``.

    Falls back to ``c_bar * h_ref`` when the target is not reachable (e.g.
    ``c_bar == 1``, where the clamp at one cluster makes the mean >= 1).
    """
    f = lambda x: expected_cluster_count(x, sigma_N) - c_bar
    lo, hi = 0.0, c_bar + 10.0 * sigma_N + 2.0
    if f(lo) < 0 < f(hi):
        x = brentq(f, lo, hi, xtol=1e-12)
    else:
        x = c_bar
    return max(x * h_ref, 1.0 + 1e-9)


@lru_cache(maxsize=None)
def _sv_params(env: EnvironmentClass, scenario: ScenarioId) -> SvParams:
    c_bar, Lambda, lam, mu, beta = SV_TABLE[(env, scenario)]
    sigma_N = 0.1 * c_bar
    return SvParams(
        Lambda=Lambda, lam=lam, mu=mu, beta=beta, c_bar=c_bar,
        c_e=calibrate_c_e(c_bar, sigma_N), sigma_N=sigma_N, sigma_c=0.1 * mu,
    )


def preset_lookup(env, scenario, v_mph: int = 0) -> ScenarioPreset:
    """Return the full preset for ``(env, scenario, v_mph)``; ``v_mph`` is 0 or 20."""
    try:
        env = EnvironmentClass.parse(env)
        scenario = ScenarioId.parse(scenario)
    except ValueError as exc:
        raise PresetNotFoundError(str(exc)) from None
    key = (env, scenario, int(v_mph))
    if key not in PATH_LOSS_TABLE:
        raise PresetNotFoundError(f"no preset for {env.value}/{scenario.key}/v{v_mph}")
    alpha, pl0, sigma = PATH_LOSS_TABLE[key]
    eta, xi = NAKAGAMI_TABLE[(env, scenario)]
    return ScenarioPreset(
        env=env,
        scenario=scenario,
        v_mph=int(v_mph),
        pl=PathLossParams(alpha=alpha, pl0_db=pl0, sigma_db=sigma),
        sv=_sv_params(env, scenario),
        nak=NakagamiParams(eta=eta, xi=xi),
    )


def parse_preset_key(key: str) -> ScenarioPreset:
    """Parse keys such as ``open-s2-v0`` or ``suburban-s3-v20``."""
    parts = key.strip().lower().split("-")
    if len(parts) == 2:
        parts.append("v0")
    if len(parts) != 3 or not parts[2].startswith("v"):
        raise PresetNotFoundError(f"malformed preset key {key!r}")
    return preset_lookup(parts[0], parts[1], int(parts[2][1:]))


def all_presets() -> list[ScenarioPreset]:
    return [preset_lookup(env, sc, v) for (env, sc, v) in PATH_LOSS_TABLE]


PRESET_COLUMNS = (
    "table", "env", "scenario", "v_mph",
    "alpha", "pl0_db", "sigma_db",
    "c_bar", "Lambda_per_ns", "lambda_per_ns", "mu_ns", "beta_ns",
    "eta_db", "xi",
)


def preset_rows() -> list[dict]:
    """Registry flattened to rows: 12 path loss, 6 multipath, 6 small-scale."""
    rows = []
    for (env, sc, v), (alpha, pl0, sigma) in PATH_LOSS_TABLE.items():
        rows.append(dict(table="pathloss", env=env.value, scenario=sc.key, v_mph=v,
                         alpha=alpha, pl0_db=pl0, sigma_db=sigma))
    for (env, sc), (c_bar, Lambda, lam, mu, beta) in SV_TABLE.items():
        rows.append(dict(table="pdp", env=env.value, scenario=sc.key, c_bar=c_bar,
                         Lambda_per_ns=Lambda, lambda_per_ns=lam, mu_ns=mu, beta_ns=beta))
    for (env, sc), (eta, xi) in NAKAGAMI_TABLE.items():
        rows.append(dict(table="smallscale", env=env.value, scenario=sc.key, eta_db=eta, xi=xi))
    return rows

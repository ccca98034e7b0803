"""Log-distance path loss with height and foliage terms, and its inverse problems."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import (
    SPEED_OF_LIGHT,
    DegenerateInputError,
    EnvironmentClass,
    Geometry,
    PathLossParams,
    RankDeficientError,
    RngLike,
    ScanSet,
    ScenarioId,
    ValidationError,
    as_generator,
)

#: Lower clamp on |h_gnd - h_opt| / h_opt; caps the height term at +20 dB.
RATIO_MIN = 1e-2


@dataclass(frozen=True)
class PathLossSample:
    d: float
    pl_db: float
    env: Optional[EnvironmentClass] = None
    scenario: Optional[ScenarioId] = None
    v_mph: int = 0

    def __post_init__(self):
        if not self.d > 0:
            raise ValidationError("d must be > 0")
        if not math.isfinite(self.pl_db):
            raise ValidationError("pl_db must be finite")


@dataclass
class PathLossFit:
    alpha_hat: float
    pl0_hat_db: float
    sigma_hat_db: float
    residuals: np.ndarray = field(repr=False)


def height_term_db(geom: Geometry, ratio_min: float = RATIO_MIN) -> float:
    """``-10 log10(dh / h_opt)`` with the ratio clamped below at ``ratio_min``.

    The term grows as the receiver approaches ``h_opt``. That is the model as
    written, even though ``h_opt`` is described as the height of lowest loss.
    """
    ratio = abs(geom.h_gnd - geom.h_opt) / geom.h_opt
    return -10.0 * math.log10(max(ratio, ratio_min))


def path_loss_static(
    geom: Geometry,
    p: PathLossParams,
    shadowing: Optional[float] = None,
    ratio_min: float = RATIO_MIN,
) -> float:
    """Path loss in dB for a hovering UAV. ``shadowing`` is the dB draw S (default 0)."""
    s = 0.0 if shadowing is None else float(shadowing)
    return (
        p.pl0_db
        + 10.0 * p.alpha * math.log10(geom.d / geom.d0)
        + height_term_db(geom, ratio_min)
        + p.cp_db
        + s
    )


def doppler_term_db(v: float, p: PathLossParams) -> float:
    delta_f = (v / SPEED_OF_LIGHT) * p.f_e
    return 10.0 * p.x * math.log10((p.f_e + delta_f) / p.f_e)


def path_loss_doppler(
    geom: Geometry,
    p: PathLossParams,
    shadowing: Optional[float] = None,
    ratio_min: float = RATIO_MIN,
) -> float:
    """Static path loss plus the frequency-dependence term of the Doppler-shifted carrier."""
    base = path_loss_static(geom, p, shadowing, ratio_min)
    if geom.v == 0 or p.x == 0:
        return base
    return base + doppler_term_db(geom.v, p)


def draw_shadowing(p: PathLossParams, rng: RngLike, size=None):
    return as_generator(rng).normal(0.0, p.sigma_db, size=size)


def sample_path_loss(
    p: PathLossParams,
    distances: Sequence[float],
    rng: RngLike,
    *,
    d0: float = 1.0,
    h_gnd: float = 0.0,
    h_opt: float = 1.5,
    ratio_min: float = RATIO_MIN,
) -> np.ndarray:
    """Vectorized path loss draws (dB) with fresh shadowing per distance."""
    d = np.asarray(distances, dtype=float)
    if np.any(d <= 0):
        raise ValidationError("distances must be > 0")
    geom = Geometry(d=1.0, h_uav=1.0, h_gnd=h_gnd, h_opt=h_opt, d0=d0)
    offset = p.pl0_db + height_term_db(geom, ratio_min) + p.cp_db
    return offset + 10.0 * p.alpha * np.log10(d / d0) + draw_shadowing(p, rng, size=d.shape)


def fit_path_loss(samples: Iterable[PathLossSample], d0: float = 1.0) -> PathLossFit:
    """Least-squares line of ``pl_db`` against ``10 log10(d/d0)``.

    Height and foliage terms are not separated; they end up in the intercept.
    """
    samples = list(samples)
    d = np.array([s.d for s in samples], dtype=float)
    y = np.array([s.pl_db for s in samples], dtype=float)
    if len(samples) < 2:
        raise DegenerateInputError("need at least two samples")
    if np.unique(d).size < 2:
        raise RankDeficientError("all samples share one distance")
    x = 10.0 * np.log10(d / d0)
    xm, ym = x.mean(), y.mean()
    slope = np.sum((x - xm) * (y - ym)) / np.sum((x - xm) ** 2)
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    sigma = float(np.std(resid, ddof=1)) if len(resid) > 1 else 0.0
    return PathLossFit(float(slope), float(intercept), sigma, resid)


def scanset_pdp_energy(scanset: ScanSet, clean_cfg=None) -> float:
    """Total energy of the scan-averaged PDP, with CLEAN run on every scan."""
    from .metrics import average_pdp

    return average_pdp(scanset, clean_cfg=clean_cfg).total


def measured_path_loss(ref: ScanSet, at: ScanSet, pl_d0_db: float = 0.0, clean_cfg=None) -> float:
    """Path loss at the measurement point of ``at`` from its PDP energy relative to ``ref``."""
    if ref.t_s != at.t_s or ref.scans.shape[1] != at.scans.shape[1]:
        raise ValidationError("scan sets must share T_s and window")
    e0 = scanset_pdp_energy(ref, clean_cfg)
    ed = scanset_pdp_energy(at, clean_cfg)
    if e0 <= 0 or ed <= 0:
        raise DegenerateInputError("zero total energy in a scan set")
    return pl_d0_db + 10.0 * math.log10(e0 / ed)

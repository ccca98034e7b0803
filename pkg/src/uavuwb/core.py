"""Domain types shared by every part of the package.

Units are fixed throughout: delays in ns, frequencies in Hz, distances and
heights in m, powers linear. Decibels only appear at API boundaries and in
field names ending in ``_db``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s
EARTH_RADIUS_M = 6_371_000.0

# sounding constants of the measurement campaign
T_S_NS = 0.06
T_WINDOW_NS = 100.0
N_TOT = 25
BAND_LOW_HZ = 3.1e9
BAND_HIGH_HZ = 5.3e9
F_CENTER_HZ = 4.3e9
PULSE_REPETITION_HZ = 10.1e6
MAX_TX_POWER_DBM = -14.5


class UavUwbError(Exception):
    """Base class for package errors."""


class ValidationError(UavUwbError, ValueError):
    pass


class DegenerateInputError(UavUwbError, ValueError):
    pass


class RankDeficientError(DegenerateInputError):
    pass


class PresetNotFoundError(UavUwbError, KeyError):
    pass


class EnvironmentClass(enum.Enum):
    OPEN = "open"
    SUBURBAN = "suburban"

    @classmethod
    def parse(cls, value: Union[str, "EnvironmentClass"]) -> "EnvironmentClass":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        for member in cls:
            if member.value == key:
                return member
        raise ValidationError(f"unknown environment {value!r}")


class ScenarioId(enum.Enum):
    """Receiver placement scenarios.

    S1: receiver 1.5 m above ground under foliage.
    S2: receiver 1.5 m above ground, clear line of sight.
    S3: receiver 7 cm above ground.
    """

    S1_FOLIAGE = 1
    S2_GROUND_1M5 = 2
    S3_GROUND_7CM = 3

    @property
    def foliage(self) -> bool:
        return self is ScenarioId.S1_FOLIAGE

    @property
    def rx_height_m(self) -> float:
        return 0.07 if self is ScenarioId.S3_GROUND_7CM else 1.5

    @property
    def key(self) -> str:
        return f"s{self.value}"

    @classmethod
    def parse(cls, value: Union[int, str, "ScenarioId"]) -> "ScenarioId":
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower().lstrip("s")
        try:
            return cls(int(text))
        except ValueError:
            raise ValidationError(f"unknown scenario {value!r}") from None


@dataclass(frozen=True)
class Geometry:
    """Link geometry. ``d`` and ``d0`` in m, heights in m, ``v`` in m/s."""

    d: float
    h_uav: float
    h_gnd: float = 1.5
    h_opt: float = 1.5
    d0: float = 1.0
    v: float = 0.0

    def __post_init__(self):
        checks = [
            (self.d > 0, "d must be > 0"),
            (self.d0 > 0, "d0 must be > 0"),
            (self.h_uav > 0, "h_uav must be > 0"),
            (self.h_gnd >= 0, "h_gnd must be >= 0"),
            (self.h_opt > 0, "h_opt must be > 0"),
            (self.v >= 0, "v must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValidationError(msg)

    @classmethod
    def for_scenario(cls, scenario: ScenarioId, h_uav: float, d: float, **kw) -> "Geometry":
        return cls(d=d, h_uav=h_uav, h_gnd=scenario.rx_height_m, **kw)


@dataclass(frozen=True)
class PathLossParams:
    alpha: float
    pl0_db: float
    sigma_db: float
    cp_db: float = 0.0
    x: float = 2.0
    f_e: float = F_CENTER_HZ

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValidationError("alpha must be > 0")
        if self.sigma_db < 0 or self.cp_db < 0:
            raise ValidationError("sigma_db and cp_db must be >= 0")
        if not self.f_e > 0:
            raise ValidationError("f_e must be > 0")


@dataclass(frozen=True)
class SvParams:
    """Saleh-Valenzuela cluster/ray parameters.

    Rates are per ns, decay constants in ns. ``c_d``, ``c_h`` and ``c_e``
    drive the height and delay dependence of the inter-cluster decay and of
    the cluster count; ``mu_scale`` is the proportionality constant of the
    inter-cluster decay (``None`` means calibrate against ``mu``).
    """

    Lambda: float
    lam: float
    mu: float
    beta: float
    c_bar: float
    c_d: float = 2.0
    c_h: float = 2.0
    c_e: float = 0.0
    sigma_c: Optional[float] = None
    sigma_N: Optional[float] = None
    mu_scale: Optional[float] = None
    mu_min: float = 0.1

    def __post_init__(self):
        for name in ("Lambda", "lam", "mu", "beta", "c_bar"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be > 0")
        for name in ("c_d", "c_h"):
            if not getattr(self, name) > 1:
                raise ValidationError(f"{name} must be > 1")
        if self.c_e <= 1:
            # an unset c_e falls back to c_bar at the 8 m reference height
            object.__setattr__(self, "c_e", max(8.0 * self.c_bar, 1.0 + 1e-9))
        if self.sigma_c is None:
            object.__setattr__(self, "sigma_c", 0.1 * self.mu)
        if self.sigma_N is None:
            object.__setattr__(self, "sigma_N", 0.1 * self.c_bar)
        if self.sigma_c < 0 or self.sigma_N < 0:
            raise ValidationError("sigma_c and sigma_N must be >= 0")


@dataclass(frozen=True)
class NakagamiParams:
    """Lognormal m-factor statistics, ``eta`` and ``xi`` in dB (10 log10 m).

    With ``log_domain="ln"`` the same numbers are read as the mean and
    standard deviation of ``ln m`` instead.
    """

    eta: float
    xi: float
    m0: Optional[float] = None
    v0: Optional[float] = None
    m_min: float = 0.5
    log_domain: str = "db"

    def __post_init__(self):
        if self.xi < 0:
            raise ValidationError("xi must be >= 0")
        if self.log_domain not in ("db", "ln"):
            raise ValidationError("log_domain must be 'db' or 'ln'")
        loc, scale = self.ln_params()
        if self.m0 is None:
            object.__setattr__(self, "m0", math.exp(loc + scale**2 / 2))
        if self.v0 is None:
            object.__setattr__(
                self, "v0", (math.exp(scale**2) - 1) * math.exp(2 * loc + scale**2)
            )

    def ln_params(self) -> tuple[float, float]:
        """Location and scale of ``ln m``."""
        k = math.log(10) / 10 if self.log_domain == "db" else 1.0
        return self.eta * k, self.xi * k


@dataclass(frozen=True)
class ScenarioPreset:
    env: EnvironmentClass
    scenario: ScenarioId
    v_mph: int
    pl: PathLossParams
    sv: SvParams
    nak: NakagamiParams

    @property
    def key(self) -> str:
        return f"{self.env.value}-{self.scenario.key}-v{self.v_mph}"

    def with_sv(self, **changes) -> "ScenarioPreset":
        return replace(self, sv=replace(self.sv, **changes))


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True).reshape(-1)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Cir:
    """Sparse channel impulse response: taps at ``tau`` (ns), amplitudes ``a``."""

    tau: np.ndarray
    a: np.ndarray
    cluster: np.ndarray = None
    t_s: float = T_S_NS
    t_window: float = T_WINDOW_NS

    def __post_init__(self):
        object.__setattr__(self, "tau", _frozen(self.tau))
        object.__setattr__(self, "a", _frozen(self.a))
        if self.cluster is None:
            object.__setattr__(self, "cluster", np.zeros(len(self.tau), dtype=int))
        object.__setattr__(self, "cluster", _frozen(self.cluster, dtype=int))
        validate_cir(self)

    def __len__(self) -> int:
        return len(self.tau)

    @property
    def energy(self) -> float:
        return float(np.sum(self.a**2))

    @property
    def n_grid(self) -> int:
        return n_samples(self.t_window, self.t_s)

    def gridded(self) -> np.ndarray:
        """Amplitudes on the ``t_s`` grid; taps sharing a bin add coherently."""
        h = np.zeros(self.n_grid)
        idx = np.clip(np.rint(self.tau / self.t_s).astype(int), 0, self.n_grid - 1)
        np.add.at(h, idx, self.a)
        return h

    def equals(self, other: "Cir") -> bool:
        return (
            np.array_equal(self.tau, other.tau)
            and np.array_equal(self.a, other.a)
            and np.array_equal(self.cluster, other.cluster)
            and self.t_s == other.t_s
            and self.t_window == other.t_window
        )


def validate_cir(cir: Cir) -> None:
    """Raise :class:`ValidationError` unless ``cir`` satisfies the tap invariants."""
    tau, a = cir.tau, cir.a
    if not (len(tau) == len(a) == len(cir.cluster)):
        raise ValidationError("tau, a and cluster must have equal length")
    if not (cir.t_s > 0 and cir.t_window > 0):
        raise ValidationError("t_s and t_window must be > 0")
    if len(tau) == 0:
        return
    if not (np.all(np.isfinite(tau)) and np.all(np.isfinite(a))):
        raise ValidationError("non-finite tap")
    if np.any(np.diff(tau) <= 0):
        raise ValidationError("tap delays must be strictly ascending")
    if tau[0] < 0 or tau[-1] >= cir.t_window:
        raise ValidationError("tap delays must lie in [0, t_window)")
    if np.any(a < 0):
        raise ValidationError("amplitudes must be >= 0")


def n_samples(t_window: float, t_s: float) -> int:
    # 100 / 0.06 is not integral; the small epsilon guards exact multiples
    return int(math.floor(t_window / t_s + 1e-9))


@dataclass(frozen=True, eq=False)
class ScanSet:
    """Raw sampled waveforms (rows) of one measurement point plus the template pulse."""

    scans: np.ndarray
    template: np.ndarray
    geometry: Optional[Geometry] = None
    env: Optional[EnvironmentClass] = None
    scenario: Optional[ScenarioId] = None
    t_s: float = T_S_NS

    def __post_init__(self):
        scans = np.atleast_2d(np.array(self.scans, dtype=float))
        template = np.array(self.template, dtype=float).reshape(-1)
        if scans.shape[0] < 1 or scans.shape[1] < 1:
            raise ValidationError("a scan set needs at least one non-empty scan")
        if not np.any(template):
            raise ValidationError("template must be nonzero")
        scans.flags.writeable = False
        template.flags.writeable = False
        object.__setattr__(self, "scans", scans)
        object.__setattr__(self, "template", template)

    @property
    def n_tot(self) -> int:
        return self.scans.shape[0]

    @property
    def t_window(self) -> float:
        return self.scans.shape[1] * self.t_s


@dataclass(frozen=True, eq=False)
class Pdp:
    """Power versus delay. ``t_s`` is set for gridded profiles, None for sparse ones."""

    t: np.ndarray
    p: np.ndarray
    normalization: float = 1.0
    cluster: Optional[np.ndarray] = None
    t_s: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "t", _frozen(self.t))
        object.__setattr__(self, "p", _frozen(self.p))
        if self.cluster is not None:
            object.__setattr__(self, "cluster", _frozen(self.cluster, dtype=int))
        if len(self.t) != len(self.p):
            raise ValidationError("t and p must have equal length")
        if np.any(self.p < 0):
            raise ValidationError("powers must be >= 0")
        if np.any(np.diff(self.t) < 0):
            raise ValidationError("bins must be sorted by delay")

    @property
    def total(self) -> float:
        return float(np.sum(self.p))


@dataclass
class RandomSource:
    """Seeded PCG64 stream; ``(seed, stream)`` fully determines the draws."""

    seed: int
    stream: int = 0
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.seed < 0 or self.stream < 0:
            raise ValidationError("seed and stream must be non-negative")
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def spawn(self, stream: int) -> "RandomSource":
        return RandomSource(self.seed, stream)


RngLike = Union[RandomSource, np.random.Generator, int, None]


def as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, RandomSource):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    return RandomSource(0 if rng is None else int(rng)).generator


def spherical_distance(lat1, lon1, lat2, lon2, radius: float = EARTH_RADIUS_M) -> float:
    """Great-circle distance in m between two points given in degrees (haversine)."""
    for lat in (lat1, lat2):
        if not -90.0 <= lat <= 90.0:
            raise ValidationError(f"latitude {lat} out of range")
    for lon in (lon1, lon2):
        if not -180.0 <= lon <= 180.0:
            raise ValidationError(f"longitude {lon} out of range")
    if not radius > 0:
        raise ValidationError("radius must be > 0")
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = phi2 - phi1
    dlmb = math.radians(lon2 - lon1)
    hav = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    return 2 * radius * math.asin(min(1.0, math.sqrt(hav)))

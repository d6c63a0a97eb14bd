"""
Analytic TES signal, noise, rise-time and timing-jitter model.

All quantities are SI except the volume, which is carried in cubic
micrometres together with the volumetric material constants
(``sigma_ep`` in W um^-3 K^-5, ``gamma`` in J um^-3 K^-2) so that the
products that actually enter the formulas are SI.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional, Sequence

import numpy as np

K_B = 1.380649e-23  # J/K, exact
EV = 1.602176634e-19  # J, exact
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))

#: external amplifier 10-90 % rise time per unit inverse bandwidth
RISE_BANDWIDTH_PRODUCT = 0.35


@dataclass(frozen=True)
class DeviceParams:
    """
    Physical and material parameters of a TES-SQUID readout chain.

    Attributes
    ----------
    t0 : float
        Operating (transition) temperature, K.
    r0 : float
        Resistance at the operating point, ohm.
    volume : float
        Absorber volume, um^3.
    sigma_ep : float
        Electron-phonon coupling constant, W um^-3 K^-5.
    gamma : float
        Volumetric electronic heat-capacity coefficient, J um^-3 K^-2.
    alpha, beta : float
        Logarithmic temperature and current sensitivities of the transition.
    m_j : float
        Excess Johnson noise parameter.
    inductance : float
        Total input inductance of the SQUID loop, H.
    eta : float
        Fraction of the photon energy collected by the electrons.
    photon_energy : float
        Absorbed energy, J.
    amp_bandwidth : float
        Bandwidth of the room-temperature amplifier, Hz.
    i0 : float, optional
        Operating-point current, A. Only documents the meaning of `beta`.
    p0_override : float, optional
        Joule power at the operating point, W. Derived when absent.
    """

    t0: float
    r0: float
    volume: float
    sigma_ep: float
    gamma: float
    alpha: float
    beta: float
    m_j: float
    inductance: float
    eta: float
    photon_energy: float
    amp_bandwidth: float
    i0: Optional[float] = None
    p0_override: Optional[float] = None
    tag: str = field(default="", compare=False)

    def __post_init__(self):
        for name in ("t0", "r0", "volume", "sigma_ep", "gamma", "inductance",
                     "photon_energy", "amp_bandwidth"):
            _require(self, name, lambda v: v > 0, "must be > 0")
        _require(self, "alpha", lambda v: v >= 1, "must be >= 1")
        _require(self, "beta", lambda v: v >= 0, "must be >= 0")
        _require(self, "m_j", lambda v: v >= 0, "must be >= 0")
        _require(self, "eta", lambda v: 0 < v <= 1, "must be in (0, 1]")
        if self.i0 is not None:
            _require(self, "i0", lambda v: v > 0, "must be > 0")
        if self.p0_override is not None:
            _require(self, "p0_override", lambda v: v > 0, "must be > 0")

    @classmethod
    def nominal(cls) -> "DeviceParams":
        """
        Tungsten TES of the 1550 nm timing measurement.

        Fixed entries are the tabulated values; the ranged entries
        (alpha, beta, M_J, eta) sit at their favourable ends, where the
        prediction lands next to the measured low-threshold jitter.
        """
        return cls(
            t0=150e-3, r0=1.0, volume=12.5, sigma_ep=0.4e-9, gamma=340.2e-18,
            alpha=800.0, beta=0.8, m_j=1.5, inductance=24e-9, eta=0.9,
            photon_energy=0.8 * EV, amp_bandwidth=20e6, tag="nominal",
        )

    def replace(self, **changes) -> "DeviceParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("tag")
        return d


def _require(obj, name, ok, msg):
    value = getattr(obj, name)
    if not (isinstance(value, (int, float)) and math.isfinite(value) and ok(value)):
        raise ValueError(f"{type(obj).__name__}.{name}={value!r} {msg}")


RANGED_FIELDS = ("t0", "r0", "volume", "sigma_ep", "gamma", "alpha", "beta",
                 "m_j", "inductance", "eta", "photon_energy", "amp_bandwidth")


@dataclass(frozen=True)
class ParamRange:
    """
    Closed intervals for each ranged DeviceParams field.

    ``intervals`` maps field name to ``(lower, upper)``; fields that are
    not listed are pinned to the value in ``base``.
    """

    base: DeviceParams
    intervals: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for name, (lo, hi) in self.intervals.items():
            if name not in RANGED_FIELDS:
                raise ValueError(f"ParamRange: unknown field {name!r}")
            lo, hi = float(lo), float(hi)
            if not lo <= hi:
                raise ValueError(f"ParamRange.{name}: lower {lo} > upper {hi}")
            # validates both endpoints against the DeviceParams invariants
            self.base.replace(**{name: lo})
            self.base.replace(**{name: hi})
            clean[name] = (lo, hi)
        object.__setattr__(self, "intervals", clean)

    def __hash__(self):
        return hash((self.base, tuple(sorted(self.intervals.items()))))

    @classmethod
    def nominal(cls, base: Optional[DeviceParams] = None) -> "ParamRange":
        """Uncertainty ranges of the tungsten device (inductance 24 +- 5 nH)."""
        base = base or DeviceParams.nominal()
        return cls(base, {
            "alpha": (150.0, 800.0),
            "beta": (0.8, 2.2),
            "m_j": (1.5, 3.5),
            "eta": (0.4, 0.9),
            "inductance": (19e-9, 29e-9),
        })

    def interval(self, name: str) -> tuple:
        if name in self.intervals:
            return self.intervals[name]
        v = getattr(self.base, name)
        return (v, v)

    def contains(self, p: DeviceParams) -> bool:
        return all(lo <= getattr(p, n) <= hi
                   for n in RANGED_FIELDS for lo, hi in [self.interval(n)])

    def corners(self, exclude: Sequence[str] = ()) -> Iterator[DeviceParams]:
        """All parameter sets at interval endpoints (degenerate ones once)."""
        names = [n for n in self.intervals if n not in exclude]
        axes = [sorted(set(self.intervals[n])) for n in names]
        for combo in itertools.product(*axes):
            yield self.base.replace(**dict(zip(names, combo)))

    def sample(self, rng: np.random.Generator) -> DeviceParams:
        """Uniform draw inside the box."""
        return self.base.replace(**{n: float(rng.uniform(lo, hi))
                                    for n, (lo, hi) in self.intervals.items()})


def equilibrium_power(p: DeviceParams) -> float:
    """Joule power at the operating point in the low-bath-temperature limit,
    P0 = Sigma V T0^5."""
    return p.sigma_ep * p.volume * p.t0 ** 5


def heat_capacity(p: DeviceParams) -> float:
    """Electronic heat capacity C = gamma V T0, J/K."""
    return p.gamma * p.volume * p.t0


def delta_current(p: DeviceParams) -> float:
    """Current pulse height for one absorbed photon (ideal voltage bias), A."""
    p0 = p.p0_override if p.p0_override is not None else equilibrium_power(p)
    return (math.sqrt(p0 / p.r0) * p.alpha * p.eta * p.photon_energy
            / (heat_capacity(p) * p.t0 * (1.0 + p.beta)))


def rms_noise(p: DeviceParams) -> float:
    """RMS current noise from Johnson and thermal-fluctuation terms, A."""
    b = p.beta
    return math.sqrt(math.sqrt(2.0) * K_B * p.t0 * (1 + 2 * b) * (1 + p.m_j ** 2)
                     / (p.inductance * (1 + b)))


def electrical_rise_time(p: DeviceParams) -> float:
    return p.inductance / (p.r0 * (1.0 + p.beta))


def external_rise_time(p: DeviceParams) -> float:
    return RISE_BANDWIDTH_PRODUCT / p.amp_bandwidth


def combined_rise_time(p: DeviceParams) -> float:
    return math.hypot(electrical_rise_time(p), external_rise_time(p))


def predicted_jitter_fwhm(p: DeviceParams) -> float:
    """
    Closed-form FWHM timing jitter, s.

    Written out term by term rather than composed from the helpers above, so
    that ``composed_jitter_fwhm`` is an independent check of the algebra.
    """
    return float(_jitter_closed_form(
        p.alpha, p.beta, p.m_j, p.eta, p.photon_energy, p.gamma, p.r0,
        p.volume, p.sigma_ep, p.inductance, external_rise_time(p)))


def _jitter_closed_form(alpha, beta, m_j, eta, hnu, gamma, r0, volume,
                        sigma_ep, inductance, tau_ext):
    b1 = 1.0 + beta
    shape = np.sqrt(8.0 * math.log(2.0) * math.sqrt(2.0) * b1 * (1 + 2 * beta)
                    * (1 + m_j ** 2))
    material = gamma / (alpha * eta * hnu) * np.sqrt(r0 * volume * K_B
                                                     / (inductance * sigma_ep))
    rise = np.sqrt(tau_ext ** 2 + inductance ** 2 / (r0 ** 2 * b1 ** 2))
    return shape * material * rise


def composed_jitter_fwhm(p: DeviceParams) -> float:
    """FWHM jitter assembled from pulse height, noise and rise time."""
    return FWHM_PER_SIGMA * rms_noise(p) * combined_rise_time(p) / delta_current(p)


class ThresholdJitter(NamedTuple):
    std: float
    fwhm: float


def threshold_jitter_estimate(sigma: float, slope: float) -> ThresholdJitter:
    """
    Timing spread of a level crossing with additive noise.

    Parameters
    ----------
    sigma : float
        Noise standard deviation at the crossing, signal units.
    slope : float
        Signal slope at the crossing, signal units per second.
    """
    if not slope > 0:
        raise ValueError(f"slope must be > 0, got {slope!r}")
    std = sigma / slope
    return ThresholdJitter(std, FWHM_PER_SIGMA * std)


@dataclass(frozen=True)
class JitterEnvelope:
    inductance: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    argmin_lower: float
    argmin_upper: float


def _corner_table(ranges: ParamRange, exclude=("inductance",)):
    """Columns of the corner set as arrays, one entry per corner."""
    corners = list(ranges.corners(exclude=exclude))
    cols = {n: np.array([getattr(c, n) for c in corners]) for n in RANGED_FIELDS}
    cols["tau_ext"] = RISE_BANDWIDTH_PRODUCT / cols["amp_bandwidth"]
    return corners, cols


def _jitter_columns(cols, inductance):
    return _jitter_closed_form(
        cols["alpha"], cols["beta"], cols["m_j"], cols["eta"],
        cols["photon_energy"], cols["gamma"], cols["r0"], cols["volume"],
        cols["sigma_ep"], inductance, cols["tau_ext"])


def jitter_envelope(ranges: ParamRange, l_grid) -> JitterEnvelope:
    """
    Lowest and highest predicted jitter over the parameter box, per inductance.

    The prediction is monotone in every ranged parameter other than the
    inductance (including beta, since both (1+b)(1+2b) and
    (1+2b)/(1+b) increase with b), so extremes sit on box corners.
    """
    l_grid = np.asarray(l_grid, dtype=float)
    if l_grid.ndim != 1 or l_grid.size == 0:
        raise ValueError("inductance grid must be a non-empty 1-D sequence")
    if np.any(l_grid <= 0) or np.any(np.diff(l_grid) <= 0):
        raise ValueError("inductance grid must be positive and strictly increasing")
    _, cols = _corner_table(ranges)
    values = _jitter_columns(cols, l_grid[:, None])
    lower = values.min(axis=1)
    upper = values.max(axis=1)
    return JitterEnvelope(l_grid, lower, upper,
                          float(l_grid[np.argmin(lower)]),
                          float(l_grid[np.argmin(upper)]))


class CornerExtreme(NamedTuple):
    value: float
    params: DeviceParams


def corner_extremes(ranges: ParamRange) -> tuple:
    """(minimum, maximum) predicted jitter over all box corners, inductance included."""
    corners, cols = _corner_table(ranges, exclude=())
    values = _jitter_columns(cols, cols["inductance"])
    i, j = int(np.argmin(values)), int(np.argmax(values))
    return (CornerExtreme(float(values[i]), corners[i]),
            CornerExtreme(float(values[j]), corners[j]))


class OptimalInductance(NamedTuple):
    inductance: float
    at_bound: bool


def analytic_optimal_inductance(p: DeviceParams) -> float:
    """Stationary point of the jitter in L: tau_ext R0 (1 + beta)."""
    return external_rise_time(p) * p.r0 * (1.0 + p.beta)


def optimal_inductance(p: DeviceParams, bracket, rtol: float = 1e-6) -> OptimalInductance:
    """
    Inductance minimising the predicted jitter inside `bracket`.

    Golden-section search; ``at_bound`` is set when the minimum is pinned to
    a bracket endpoint (no interior minimum in the bracket).
    """
    lo, hi = (float(x) for x in bracket)
    if not 0 < lo < hi:
        raise ValueError(f"bracket must satisfy 0 < lower < upper, got {bracket!r}")

    def f(L):
        return predicted_jitter_fwhm(p.replace(inductance=L))

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > rtol * 0.5 * (a + b):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    edge_tol = 10 * rtol * x
    at_bound = (x - lo) <= edge_tol or (hi - x) <= edge_tol
    if at_bound:
        x = lo if f(lo) <= f(hi) else hi
    return OptimalInductance(x, at_bound)

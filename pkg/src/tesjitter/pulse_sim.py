"""
Monte Carlo synthesis of digitised TES photon-detection traces.

A pulse for photon number n is a rise/fall double exponential passed through
a first-order low-pass standing in for the room-temperature amplifier. The
electrical rise and the fall time constants of each photon number are solved
for so that the filtered pulse has the requested 10-90 % rise time and 1/e
decay time. Open-loop SQUID compression is a saturating map applied to the
pulse height.
"""

from __future__ import annotations

import dataclasses
import functools
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional

import numpy as np
from scipy.optimize import brentq
from scipy.signal import lfilter

from .device_model import EV, DeviceParams, delta_current, rms_noise

MEASURED_RISE_TIMES = (24.8e-9, 25.6e-9, 27.2e-9)
MEASURED_DECAY_TIMES = (759e-9, 1278e-9, 1692e-9)


@dataclass(frozen=True)
class Ringing:
    """Damped sinusoid added to the filtered pulse, relative to its height."""

    amplitude_fraction: float
    frequency: float
    damping_time: float

    def __post_init__(self):
        if not self.frequency > 0 or not self.damping_time > 0:
            raise ValueError("Ringing.frequency and Ringing.damping_time must be > 0")


@dataclass(frozen=True)
class PulseShapeParams:
    """
    Phenomenological pulse-shape description.

    Attributes
    ----------
    rise_times, decay_times : tuple of float
        10-90 % rise and 1/e decay (measured from the peak) targets for
        photon numbers 1..n_max, seconds.
    lowpass_tau : float
        Time constant of the amplifier low-pass, seconds. A first-order
        stage of bandwidth df has ``1 / (2 pi df)``; its own 10-90 % rise is
        ``lowpass_tau * ln 9``.
    unit_amplitude : float
        Uncompressed one-photon pulse height, signal units.
    compression : float
        Saturation strength of the open-loop SQUID response, relative to
        the one-photon height; 0 means linear.
    energy_fwhm : float
        Gaussian smearing of the deposited energy (FWHM), joules.
    noise_scale : float
        Multiplier on the device noise-to-signal ratio at trace level.
    noise_filtered : bool
        Band-limit the noise by the electrical and amplifier poles (True) or
        add it white per sample (False).
    ringing : Ringing, optional
    """

    rise_times: tuple
    decay_times: tuple
    lowpass_tau: float
    unit_amplitude: float = 1.0
    compression: float = 0.0
    energy_fwhm: float = 0.0
    noise_scale: float = 1.0
    noise_filtered: bool = True
    ringing: Optional[Ringing] = None

    def __post_init__(self):
        rise = tuple(float(x) for x in self.rise_times)
        decay = tuple(float(x) for x in self.decay_times)
        object.__setattr__(self, "rise_times", rise)
        object.__setattr__(self, "decay_times", decay)
        if len(rise) == 0 or len(rise) != len(decay):
            raise ValueError("PulseShapeParams: rise_times and decay_times must be "
                             "non-empty and of equal length")
        if self.lowpass_tau < 0:
            raise ValueError("PulseShapeParams.lowpass_tau must be >= 0")
        floor = self.lowpass_tau * math.log(9.0)
        for n, (r, d) in enumerate(zip(rise, decay), start=1):
            if not r > floor:
                raise ValueError(f"PulseShapeParams.rise_times[{n}]={r} must exceed the "
                                 f"low-pass rise {floor}")
            if not d > r:
                raise ValueError(f"PulseShapeParams.decay_times[{n}] must exceed rise time")
        for name in ("unit_amplitude", "noise_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"PulseShapeParams.{name} must be > 0")
        for name in ("compression", "energy_fwhm"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"PulseShapeParams.{name} must be >= 0")

    @classmethod
    def nominal(cls, n_max: int = 10, amp_bandwidth: float = 20e6) -> "PulseShapeParams":
        """
        Shapes of the measured 1-3 photon averages. Higher photon numbers
        continue the rise times linearly and the decay times with
        geometrically shrinking increments.
        """
        rise = list(MEASURED_RISE_TIMES)
        decay = list(MEASURED_DECAY_TIMES)
        ratio = (decay[2] - decay[1]) / (decay[1] - decay[0])
        while len(rise) < n_max:
            rise.append(2 * rise[-1] - rise[-2])
            decay.append(decay[-1] + ratio * (decay[-1] - decay[-2]))
        return cls(rise_times=tuple(rise[:n_max]), decay_times=tuple(decay[:n_max]),
                   lowpass_tau=1.0 / (2 * math.pi * amp_bandwidth),
                   compression=0.6, energy_fwhm=0.1 * EV, noise_scale=0.9)

    @property
    def n_max(self) -> int:
        return len(self.rise_times)

    @property
    def amplitudes(self) -> np.ndarray:
        """Compressed pulse heights for n = 1..n_max."""
        n = np.arange(1, self.n_max + 1)
        return compress_amplitude(n * self.unit_amplitude, self.compression,
                                  self.unit_amplitude)

    def profile(self, n: int) -> "PulseProfile":
        if not 1 <= n <= self.n_max:
            raise ValueError(f"photon number {n} outside 1..{self.n_max}")
        return _calibrate(self.rise_times[n - 1], self.decay_times[n - 1],
                          self.lowpass_tau)

    def replace(self, **changes) -> "PulseShapeParams":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class DigitizerParams:
    """Oscilloscope settings; the code range is bipolar, +-full_scale."""

    sample_rate: float
    bits: int
    full_scale: float
    trace_length: int
    pre_trigger: int

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise ValueError("DigitizerParams.sample_rate must be > 0")
        if not (isinstance(self.bits, (int, np.integer)) and 1 <= self.bits <= 16):
            raise ValueError("DigitizerParams.bits must be an integer in 1..16")
        if not self.full_scale > 0:
            raise ValueError("DigitizerParams.full_scale must be > 0")
        if not 0 <= self.pre_trigger < self.trace_length:
            raise ValueError("DigitizerParams: need trace_length > pre_trigger >= 0")

    @classmethod
    def nominal(cls) -> "DigitizerParams":
        return cls(sample_rate=1.25e9, bits=8, full_scale=2.0,
                   trace_length=3456, pre_trigger=1024)

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def lsb(self) -> float:
        return self.full_scale / 2 ** (self.bits - 1)

    @property
    def code_range(self) -> tuple:
        return -(2 ** (self.bits - 1)), 2 ** (self.bits - 1) - 1

    def replace(self, **changes) -> "DigitizerParams":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class SourceParams:
    """Pulsed attenuated laser; photon number is Poisson distributed."""

    mean_photon_number: float
    repetition_rate: float
    optical_pulse_duration: float
    arrival_time_offset: float
    rng_seed: int
    timing_spread: float = 0.0

    def __post_init__(self):
        if not self.mean_photon_number >= 0:
            raise ValueError("SourceParams.mean_photon_number must be >= 0")
        if not self.repetition_rate > 0:
            raise ValueError("SourceParams.repetition_rate must be > 0")
        if self.optical_pulse_duration < 0 or self.timing_spread < 0:
            raise ValueError("SourceParams: pulse duration and timing spread must be >= 0")
        if not 0 <= int(self.rng_seed) < 2 ** 64:
            raise ValueError("SourceParams.rng_seed must be an unsigned 64-bit integer")

    @classmethod
    def nominal(cls, seed: int = 20120601) -> "SourceParams":
        return cls(mean_photon_number=1.3, repetition_rate=100e3,
                   optical_pulse_duration=1e-9, arrival_time_offset=840e-9,
                   rng_seed=seed)

    def replace(self, **changes) -> "SourceParams":
        return dataclasses.replace(self, **changes)


@dataclass
class Trace:
    """One record in signal units. Ground truth is only set by the simulator."""

    samples: np.ndarray
    dt: float
    t0_true: Optional[float] = None
    n_true: Optional[int] = None
    pre_trigger: int = 0

    @property
    def time(self) -> np.ndarray:
        return np.arange(len(self.samples)) * self.dt


@dataclass
class TraceBatch:
    """
    Equal-length records sharing one digitizer setting.

    Samples are kept as the integer ADC codes, ``codes[i, k]``; ``values``
    converts to signal units.
    """

    codes: np.ndarray
    digitizer: DigitizerParams
    t0_true: Optional[np.ndarray] = None
    n_true: Optional[np.ndarray] = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.codes = np.asarray(self.codes)
        if self.codes.ndim != 2:
            raise ValueError("TraceBatch.codes must be 2-D (n_traces, n_samples)")
        if self.codes.shape[1] != self.digitizer.trace_length:
            raise ValueError("TraceBatch: record length does not match digitizer")
        if (self.t0_true is None) != (self.n_true is None):
            raise ValueError("TraceBatch: ground truth must be all or nothing")

    @property
    def has_truth(self) -> bool:
        return self.t0_true is not None

    @property
    def dt(self) -> float:
        return self.digitizer.dt

    def __len__(self):
        return self.codes.shape[0]

    def values(self, index=slice(None)) -> np.ndarray:
        return self.codes[index].astype(np.float64) * self.digitizer.lsb

    def __getitem__(self, i) -> Trace:
        return Trace(self.values(i), self.dt,
                     None if self.t0_true is None else float(self.t0_true[i]),
                     None if self.n_true is None else int(self.n_true[i]),
                     self.digitizer.pre_trigger)

    def __iter__(self) -> Iterator[Trace]:
        return (self[i] for i in range(len(self)))

    def chunks(self, size: int = 4096):
        """Yield ``(slice, values)`` blocks in signal units."""
        for start in range(0, len(self), size):
            sl = slice(start, min(start + size, len(self)))
            yield sl, self.values(sl)


# -- pulse shape ---------------------------------------------------------------

def _lp_exp(t, a, c):
    """exp(-t/a) (t >= 0) passed through a unit-gain first-order low-pass of time constant c."""
    if c == 0:
        return np.exp(-t / a)
    if a == c:
        return (t / c) * np.exp(-t / c)
    return a / (a - c) * (np.exp(-t / a) - np.exp(-t / c))


def _lp_exp_slope(t, a, c):
    if c == 0:
        return -np.exp(-t / a) / a
    if a == c:
        return np.exp(-t / c) * (1.0 - t / c) / c
    return (-np.exp(-t / a) + (a / c) * np.exp(-t / c)) / (a - c)


class PulseProfile(NamedTuple):
    """Calibrated time constants and landmarks of a unit-height pulse."""

    tau_rise: float
    tau_fall: float
    lowpass_tau: float
    t_peak: float
    peak: float

    def raw(self, t):
        t = np.asarray(t, dtype=float)
        tp = np.maximum(t, 0.0)
        y = _lp_exp(tp, self.tau_fall, self.lowpass_tau) - _lp_exp(tp, self.tau_rise, self.lowpass_tau)
        return np.where(t > 0, y, 0.0)

    def __call__(self, t):
        """Unit-peak pulse at times `t` after arrival."""
        return self.raw(t) / self.peak

    def slope(self, t):
        t = np.asarray(t, dtype=float)
        tp = np.maximum(t, 0.0)
        s = (_lp_exp_slope(tp, self.tau_fall, self.lowpass_tau)
             - _lp_exp_slope(tp, self.tau_rise, self.lowpass_tau))
        return np.where(t > 0, s, 0.0) / self.peak

    def level_time(self, fraction: float, rising: bool = True) -> float:
        """Time at which the pulse passes `fraction` of its peak."""
        if rising:
            return brentq(lambda x: self(x) - fraction, 0.0, self.t_peak, xtol=1e-18, rtol=1e-14)
        hi = self.t_peak + 60 * self.tau_fall
        return brentq(lambda x: self(x) - fraction, self.t_peak, hi, xtol=1e-18, rtol=1e-14)

    @property
    def rise_10_90(self) -> float:
        return self.level_time(0.9) - self.level_time(0.1)

    @property
    def decay_1e(self) -> float:
        return self.level_time(math.exp(-1.0), rising=False) - self.t_peak


def _profile(tr, tf, c) -> PulseProfile:
    def slope(x):
        return float(_lp_exp_slope(x, tf, c) - _lp_exp_slope(x, tr, c))

    grid = np.geomspace(1e-3 * min(tr, c or tr), 20 * tf, 4000)
    s = _lp_exp_slope(grid, tf, c) - _lp_exp_slope(grid, tr, c)
    k = int(np.argmax(s < 0))
    t_peak = brentq(slope, grid[k - 1], grid[k], xtol=1e-18, rtol=1e-14)
    peak = float(_lp_exp(t_peak, tf, c) - _lp_exp(t_peak, tr, c))
    return PulseProfile(tr, tf, c, t_peak, peak)


@functools.lru_cache(maxsize=256)
def _calibrate(rise: float, decay: float, c: float) -> PulseProfile:
    """Solve for the rise/fall time constants that reproduce the targets."""
    tf = decay
    tr = rise / math.log(9.0)
    for _ in range(100):
        tr_new = brentq(lambda x: _profile(x, tf, c).rise_10_90 - rise,
                        1e-4 * rise, 2 * rise, xtol=1e-22, rtol=1e-13)
        tf_new = brentq(lambda x: _profile(tr_new, x, c).decay_1e - decay,
                        0.2 * decay, 5 * decay, xtol=1e-22, rtol=1e-13)
        done = abs(tr_new - tr) <= 1e-12 * tr and abs(tf_new - tf) <= 1e-12 * tf
        tr, tf = tr_new, tf_new
        if done:
            break
    return _profile(tr, tf, c)


def compress_amplitude(linear_amplitude, compression: float = 0.0, unit: float = 1.0):
    """
    Saturating open-loop response, ``(unit/k) tanh(k x / unit)``.

    Monotone and concave for x >= 0; the identity for ``compression == 0``.
    """
    x = np.asarray(linear_amplitude, dtype=float)
    if np.any(x < 0):
        raise ValueError("linear amplitude must be >= 0")
    if compression < 0:
        raise ValueError("compression must be >= 0")
    if compression == 0:
        out = x.copy()
    else:
        out = unit / compression * np.tanh(compression * x / unit)
    return out if out.ndim else float(out)


def ideal_pulse(n: int, shape: PulseShapeParams, t):
    """Noiseless pulse of an n-photon event at times `t` after arrival, signal units."""
    if n < 1:
        raise ValueError(f"photon number must be >= 1, got {n}")
    prof = shape.profile(n)
    amp = shape.amplitudes[n - 1]
    y = amp * prof(t)
    if shape.ringing is not None:
        y = y + amp * _ringing(shape.ringing, t)
    return y


def _ringing(r: Ringing, t):
    t = np.asarray(t, dtype=float)
    tp = np.maximum(t, 0.0)
    return np.where(t > 0, r.amplitude_fraction * np.exp(-tp / r.damping_time)
                    * np.sin(2 * np.pi * r.frequency * tp), 0.0)


# -- noise -----------------------------------------------------------------------

def noise_rms_signal(shape: PulseShapeParams, dev: DeviceParams) -> float:
    """Trace-level noise RMS: the device noise-to-signal ratio in one-photon units."""
    return shape.noise_scale * rms_noise(dev) / delta_current(dev) * shape.unit_amplitude


def _noise_poles(shape: PulseShapeParams, dt: float):
    if not shape.noise_filtered:
        return ()
    taus = (shape.profile(1).tau_rise, shape.lowpass_tau)
    return tuple(math.exp(-dt / tau) for tau in taus if tau > 0)


@functools.lru_cache(maxsize=64)
def _noise_filter_gain(poles: tuple) -> tuple:
    """Output RMS for unit white input, and the warm-up length in samples."""
    if not poles:
        return 1.0, 0
    warm = int(math.ceil(max(-30.0 / math.log(a) for a in poles)))
    h = np.zeros(4 * warm)
    h[0] = 1.0
    for a in poles:
        h = lfilter([1 - a], [1, -a], h)
    return float(np.sqrt(np.sum(h * h))), warm


def _trace_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


def params_hash(*objs) -> str:
    """Short digest of parameter dataclasses, for provenance."""
    def enc(o):
        if dataclasses.is_dataclass(o):
            return {f.name: enc(getattr(o, f.name)) for f in dataclasses.fields(o)
                    if f.name != "tag"}
        if isinstance(o, (list, tuple)):
            return [enc(x) for x in o]
        return o
    blob = json.dumps([enc(o) for o in objs], sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def simulate_batch(src: SourceParams, shape: PulseShapeParams, dev: DeviceParams,
                   digi: DigitizerParams, n_traces: int, chunk: int = 2048) -> TraceBatch:
    """
    Draw `n_traces` frame-locked detector records.

    Every trace consumes its own random stream, seeded from
    ``(src.rng_seed, trace index)``, in a fixed order: photon number,
    arrival jitter (uniform within the optical pulse, then Gaussian spread),
    energy smearing, noise. Output is independent of `chunk`.
    """
    n_traces = int(n_traces)
    if n_traces < 0:
        raise ValueError("n_traces must be >= 0")
    period = 1.0 / src.repetition_rate
    if period < 3 * max(shape.decay_times):
        raise ValueError("repetition period must be well above the longest decay time "
                         f"({period:.3g} s vs {max(shape.decay_times):.3g} s)")

    dt = digi.dt
    n_samp = digi.trace_length
    t = np.arange(n_samp) * dt
    sigma = noise_rms_signal(shape, dev)
    poles = _noise_poles(shape, dt)
    gain, warm = _noise_filter_gain(poles)
    e_sigma = shape.energy_fwhm / 2.3548200450309493 / dev.photon_energy
    lo, hi = digi.code_range

    codes = np.empty((n_traces, n_samp), dtype=np.int16)
    t0_true = np.empty(n_traces)
    n_true = np.empty(n_traces, dtype=np.uint8)
    clipped_samples = 0
    clipped_traces = 0

    for start in range(0, n_traces, chunk):
        stop = min(start + chunk, n_traces)
        m = stop - start
        white = np.empty((m, n_samp + warm))
        n_ph = np.empty(m, dtype=np.int64)
        arrival = np.empty(m)
        smear = np.empty(m)
        for j in range(m):
            rng = _trace_rng(src.rng_seed, start + j)
            n_ph[j] = rng.poisson(src.mean_photon_number)
            u = rng.uniform()
            g = rng.standard_normal()
            arrival[j] = (src.arrival_time_offset + u * src.optical_pulse_duration
                          + g * src.timing_spread)
            smear[j] = rng.standard_normal()
            white[j] = rng.standard_normal(n_samp + warm)

        if n_ph.max(initial=0) > shape.n_max:
            raise ValueError(f"drew photon number {n_ph.max()} > n_max={shape.n_max}; "
                             "extend the pulse-shape table")
        noise = white
        for a in poles:
            noise = lfilter([1 - a], [1, -a], noise, axis=1)
        v = noise[:, warm:] * (sigma / gain)

        for n in np.unique(n_ph[n_ph > 0]):
            rows = np.nonzero(n_ph == n)[0]
            lin = shape.unit_amplitude * np.maximum(n + e_sigma * smear[rows], 0.0)
            amp = compress_amplitude(lin, shape.compression, shape.unit_amplitude)
            tt = t[None, :] - arrival[rows, None]
            pulse = shape.profile(int(n))(tt)
            if shape.ringing is not None:
                pulse = pulse + _ringing(shape.ringing, tt)
            v[rows] += amp[:, None] * pulse

        q = np.rint(v / digi.lsb)
        over = (q < lo) | (q > hi)
        clipped_samples += int(over.sum())
        clipped_traces += int(over.any(axis=1).sum())
        codes[start:stop] = np.clip(q, lo, hi).astype(np.int16)
        t0_true[start:stop] = arrival
        n_true[start:stop] = n_ph

    provenance = {
        "seed": int(src.rng_seed),
        "params_hash": params_hash(src, shape, dev, digi),
        "noise_rms": sigma,
        "clipped_samples": clipped_samples,
        "clipped_traces": clipped_traces,
    }
    return TraceBatch(codes, digi, t0_true, n_true, provenance)

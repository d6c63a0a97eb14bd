"""
Measurement pipeline for a batch of detector records.

Stages: baseline and matched-filter scores, the pulse-area histogram and its
peaks, photon-number classes, a linearised energy scale, class mean pulses,
and fractional-threshold arrival times with EMG jitter fits.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.ndimage import uniform_filter1d
from scipy.signal import find_peaks

from .device_model import FWHM_PER_SIGMA, threshold_jitter_estimate
from .pulse_sim import Trace, TraceBatch
from .timing_fit import EmgFit, fit_emg

LOW_STATS = 100


class ClassificationWarning(UserWarning):
    pass


# -- baseline and matched filter -----------------------------------------------------

def baselines(values, pre_trigger: int) -> np.ndarray:
    """Per-record mean of the pre-trigger samples (zero when there are none)."""
    values = np.atleast_2d(values)
    if pre_trigger <= 0:
        return np.zeros(values.shape[0])
    return values[:, :pre_trigger].mean(axis=1)


def batch_baselines(batch: TraceBatch, chunk: int = 8192) -> np.ndarray:
    pre = batch.digitizer.pre_trigger
    if pre <= 0:
        return np.zeros(len(batch))
    lsb = batch.digitizer.lsb
    return np.concatenate([batch.codes[s:s + chunk, :pre].mean(axis=1) * lsb
                           for s in range(0, len(batch), chunk)]) if len(batch) else np.zeros(0)


def noise_rms(batch: TraceBatch, baseline: Optional[np.ndarray] = None) -> float:
    """Pooled pre-trigger standard deviation, signal units."""
    pre = batch.digitizer.pre_trigger
    if pre < 2 or len(batch) == 0:
        raise ValueError("noise estimate needs at least 2 pre-trigger samples")
    if baseline is None:
        baseline = batch_baselines(batch)
    acc = 0.0
    for s in range(0, len(batch), 8192):
        v = batch.codes[s:s + 8192, :pre] * batch.digitizer.lsb - baseline[s:s + 8192, None]
        acc += float(np.sum(v * v))
    return math.sqrt(acc / (len(batch) * (pre - 1)))


def matched_filter(trace: Trace, template: Trace) -> float:
    """
    Fixed-lag matched-filter score, normalised so the template scores 1.

    The trace is baseline-corrected with its pre-trigger mean before
    projection onto the template.
    """
    if trace.dt != template.dt:
        raise ValueError("trace and template sample intervals differ")
    x = np.asarray(trace.samples, dtype=float)
    s = np.asarray(template.samples, dtype=float)
    if x.shape != s.shape:
        raise ValueError(f"length mismatch: trace {x.size}, template {s.size}")
    norm = float(s @ s)
    if norm == 0:
        raise ValueError("template is identically zero")
    b = x[:trace.pre_trigger].mean() if trace.pre_trigger > 0 else 0.0
    return float((x - b) @ s) / norm


def batch_scores(batch: TraceBatch, template: np.ndarray,
                 baseline: Optional[np.ndarray] = None, chunk: int = 8192) -> np.ndarray:
    """Matched-filter scores of every record against `template` (signal units)."""
    s = np.asarray(template, dtype=float)
    if s.size != batch.digitizer.trace_length:
        raise ValueError("template length does not match records")
    norm = float(s @ s)
    if norm == 0:
        raise ValueError("template is identically zero")
    if baseline is None:
        baseline = batch_baselines(batch)
    out = np.empty(len(batch))
    ssum = s.sum()
    for sl, v in batch.chunks(chunk):
        out[sl] = (v @ s - baseline[sl] * ssum) / norm
    return out


def area_scores(batch: TraceBatch, baseline: Optional[np.ndarray] = None,
                window: Optional[slice] = None, chunk: int = 8192) -> np.ndarray:
    """Plain baseline-corrected sums over `window` (all post-trigger samples by default)."""
    if baseline is None:
        baseline = batch_baselines(batch)
    if window is None:
        window = slice(batch.digitizer.pre_trigger, None)
    out = np.empty(len(batch))
    for sl, v in batch.chunks(chunk):
        w = v[:, window]
        out[sl] = w.sum(axis=1) - baseline[sl] * w.shape[1]
    return out


def above_noise_template(batch: TraceBatch, baseline: np.ndarray, sigma: float,
                         nsigma: float = 5.0, chunk: int = 8192) -> np.ndarray:
    """Mean of all records whose post-trigger maximum exceeds `nsigma` noise RMS."""
    pre = batch.digitizer.pre_trigger
    acc = np.zeros(batch.digitizer.trace_length)
    count = 0
    for sl, v in batch.chunks(chunk):
        v = v - baseline[sl, None]
        keep = v[:, pre:].max(axis=1) > nsigma * sigma
        acc += v[keep].sum(axis=0)
        count += int(keep.sum())
    if count == 0:
        raise ValueError("no record rises above the noise")
    return acc / count


# -- area histogram and classes --------------------------------------------------------

@dataclass
class AreaHistogram:
    """Score histogram with detected peaks (ascending) and the valleys between them."""

    edges: np.ndarray
    counts: np.ndarray
    smoothed: np.ndarray
    peaks: np.ndarray
    valleys: np.ndarray
    peak_heights: np.ndarray
    valley_heights: np.ndarray

    @property
    def classification_available(self) -> bool:
        return self.peaks.size >= 2

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])


def build_area_histogram(scores, bins: int = 1000, smooth_fraction: float = 0.01,
                         min_significance: float = 5.0) -> AreaHistogram:
    """
    Histogram `scores` and locate photon-number peaks.

    The counts are smoothed with a moving average `smooth_fraction` of the
    occupied range wide. A local maximum of height h is kept when its
    prominence is at least ``min_significance * sqrt(h)``. Valleys are the
    smoothed minima between consecutive peaks. Peak positions are refined to
    the median of the raw scores between the neighbouring valleys.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise ValueError("no scores to histogram")
    lo, hi = float(scores.min()), float(scores.max())
    if hi == lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(scores, edges)
    width = max(int(round(smooth_fraction * bins)), 1)
    sm = uniform_filter1d(counts.astype(float), width, mode="constant")
    idx, props = find_peaks(np.concatenate(([0.0], sm, [0.0])), prominence=0)
    idx = idx - 1
    keep = props["prominences"] >= min_significance * np.sqrt(np.maximum(sm[idx], 1.0))
    idx = _merge_shallow(sm, idx[keep], min_significance)
    centers = 0.5 * (edges[1:] + edges[:-1])
    valleys_i = np.array([_valley(sm, a, b) for a, b in zip(idx[:-1], idx[1:])], dtype=int)
    valleys = centers[valleys_i]
    bounds = np.concatenate(([-np.inf], valleys, [np.inf]))
    peaks = centers[idx].copy()
    for k in range(idx.size):
        inside = scores[(scores > bounds[k]) & (scores <= bounds[k + 1])]
        if inside.size:
            peaks[k] = float(np.median(inside))
    return AreaHistogram(edges, counts, sm, peaks, valleys, sm[idx], sm[valleys_i])


def _merge_shallow(sm, idx, min_significance):
    """
    Drop the lower of two neighbouring peaks whose separating dip is not
    significant. Equal-height maxima each get full prominence from
    `find_peaks`, so the dip is checked directly.
    """
    idx = list(idx)
    k = 0
    while k < len(idx) - 1:
        a, b = idx[k], idx[k + 1]
        low = min(sm[a], sm[b])
        if low - sm[a:b + 1].min() < min_significance * math.sqrt(max(low, 1.0)):
            del idx[k + 1 if sm[b] <= sm[a] else k]
            k = max(k - 1, 0)
        else:
            k += 1
    return np.asarray(idx, dtype=int)


def _valley(sm, a, b):
    """Middle of the lowest run of bins between peaks at indices a and b."""
    seg = sm[a:b + 1]
    low = np.nonzero(seg <= seg.min())[0]
    return a + int(low[(low.size - 1) // 2])


@dataclass
class PhotonClassAssignment:
    labels: np.ndarray
    boundaries: np.ndarray
    overlap_warnings: list = field(default_factory=list)

    @property
    def n_classes(self) -> int:
        return self.boundaries.size + 1

    def members(self, n: int) -> np.ndarray:
        return np.nonzero(self.labels == n)[0]

    def counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)


def classify(scores, hist: AreaHistogram, max_valley_ratio: float = 0.2) -> PhotonClassAssignment:
    """
    Label each score by the histogram interval it falls into.

    The first peak is the zero-photon class. Classification proceeds when a
    valley is higher than `max_valley_ratio` of a neighbouring peak, with a
    `ClassificationWarning`.
    """
    if not hist.classification_available:
        raise ValueError(f"classification needs >= 2 histogram peaks, found {hist.peaks.size}")
    notes = []
    for k, v in enumerate(hist.valley_heights):
        ref = min(hist.peak_heights[k], hist.peak_heights[k + 1])
        if v > max_valley_ratio * ref:
            notes.append(f"classes {k} and {k + 1} overlap (valley/peak = {v / ref:.2f})")
    for msg in notes:
        warnings.warn(msg, ClassificationWarning, stacklevel=2)
    labels = np.searchsorted(hist.valleys, np.asarray(scores, dtype=float), side="left")
    return PhotonClassAssignment(labels.astype(np.int64), hist.valleys.copy(), notes)


@dataclass
class EnergyCalibration:
    """Monotone map from filter score to energy (J) through the photon-number peaks."""

    knots: np.ndarray
    energies: np.ndarray
    one_photon_fwhm: float
    residuals: np.ndarray

    def __post_init__(self):
        self._map = PchipInterpolator(self.knots, self.energies, extrapolate=True)

    def __call__(self, scores):
        return self._map(np.asarray(scores, dtype=float))


def energy_calibration(hist: AreaHistogram, photon_energy: float, scores=None,
                       labels=None) -> EnergyCalibration:
    """
    Piecewise-cubic monotone energy scale with the n-th peak at n photon energies.

    When the per-record `scores` and class `labels` are given, the one-photon
    FWHM is ``2 sqrt(2 ln 2)`` times the standard deviation of the calibrated
    class-1 energies; otherwise it is read from the half-maximum points of the
    smoothed histogram around the first photon peak.
    """
    peaks = np.asarray(hist.peaks, dtype=float)
    if peaks.size < 3:
        raise ValueError(f"energy calibration needs >= 3 peaks, found {peaks.size}")
    if np.any(np.diff(peaks) <= 0):
        raise ValueError("peak centres are not strictly increasing")
    energies = np.arange(peaks.size) * photon_energy
    cal = EnergyCalibration(peaks, energies, math.nan, np.zeros(peaks.size))
    if scores is not None and labels is not None:
        e1 = cal(np.asarray(scores)[np.asarray(labels) == 1])
        fwhm = FWHM_PER_SIGMA * float(np.std(e1, ddof=1)) if e1.size > 1 else math.nan
    else:
        fwhm = _half_max_width(hist, 1, cal)
    cal.one_photon_fwhm = fwhm
    cal.residuals = cal(peaks) - energies
    return cal


def _half_max_width(hist: AreaHistogram, k: int, cal: EnergyCalibration) -> float:
    c = hist.centers
    sm = hist.smoothed
    i = int(np.argmin(np.abs(c - hist.peaks[k])))
    half = sm[i] / 2
    l = i
    while l > 0 and sm[l] > half:
        l -= 1
    r = i
    while r < sm.size - 1 and sm[r] > half:
        r += 1
    return float(cal(c[r]) - cal(c[l]))


# -- mean pulses and shape metrics ---------------------------------------------------

def class_mean_pulse(batch: TraceBatch, assignment: PhotonClassAssignment, n: int,
                     baseline: Optional[np.ndarray] = None, chunk: int = 4096) -> Trace:
    """Baseline-corrected pointwise mean of the records in class `n`."""
    rows = assignment.members(n)
    if rows.size == 0:
        raise ValueError(f"photon class {n} is empty")
    if baseline is None:
        baseline = batch_baselines(batch)
    acc = np.zeros(batch.digitizer.trace_length)
    lsb = batch.digitizer.lsb
    for s in range(0, rows.size, chunk):
        r = rows[s:s + chunk]
        acc += (batch.codes[r] * lsb - baseline[r, None]).sum(axis=0)
    return Trace(acc / rows.size, batch.dt, pre_trigger=batch.digitizer.pre_trigger)


@dataclass(frozen=True)
class RiseFall:
    rise_10_90: float
    decay_1e: float
    peak: float
    t_peak: float
    t_10: float
    t_90: float


def _interp_cross(y, k, level, dt):
    """Time where the segment y[k] -> y[k+1] meets `level`."""
    dy = y[k + 1] - y[k]
    frac = 0.0 if dy == 0 else (level - y[k]) / dy
    return (k + frac) * dt


def rise_fall_metrics(trace: Trace) -> RiseFall:
    """
    10-90 % rise and 1/e decay of a single-peaked record.

    Rising crossings are the last ones before the maximum, the decay point the
    first sample after it that reaches ``peak / e``. Both use linear
    interpolation between samples.
    """
    y = np.asarray(trace.samples, dtype=float)
    k = int(np.argmax(y))
    peak = float(y[k])
    floor = 0.0
    if trace.pre_trigger >= 2:
        floor = 5.0 * float(np.std(y[:trace.pre_trigger]))
    if not peak > floor or peak <= 0 or np.all(y == y[0]):
        raise ValueError("record has no maximum above the noise floor")

    def rising(level):
        below = np.nonzero(y[:k + 1] < level)[0]
        if below.size == 0:
            raise ValueError(f"no rising crossing of {level:g}")
        j = int(below[-1])
        return _interp_cross(y, j, level, trace.dt)

    t10 = rising(0.1 * peak)
    t90 = rising(0.9 * peak)
    tail = np.nonzero(y[k:] <= peak / math.e)[0]
    if tail.size == 0:
        raise ValueError("record ends before the 1/e point")
    j = k + int(tail[0]) - 1
    t_e = _interp_cross(y, j, peak / math.e, trace.dt)
    return RiseFall(t90 - t10, t_e - k * trace.dt, peak, k * trace.dt, t10, t90)


# -- threshold crossings ---------------------------------------------------------------

@dataclass
class CrossingRecord:
    """Arrival estimates of one class at one threshold; NaN marks a miss."""

    trace_ids: np.ndarray
    fraction: float
    times: np.ndarray
    level: float
    gate: tuple

    @property
    def hit(self) -> np.ndarray:
        return np.isfinite(self.times)

    @property
    def n_miss(self) -> int:
        return int((~self.hit).sum())


def first_crossings(y: np.ndarray, level: float) -> np.ndarray:
    """
    Sub-sample index of the first upward crossing of `level` in each row.

    A crossing lies between samples k and k+1 with ``y[k] < level <= y[k+1]``.
    Rows that start at or above `level`, or never reach it, give NaN.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    ge = y >= level
    j = np.argmax(ge, axis=1)
    ok = ge[np.arange(y.shape[0]), j] & (j > 0)
    out = np.full(y.shape[0], np.nan)
    r = np.nonzero(ok)[0]
    jj = j[r]
    y0 = y[r, jj - 1]
    y1 = y[r, jj]
    out[r] = jj - 1 + (level - y0) / (y1 - y0)
    return out


def crossing_gate(mean_pulse: Trace, fraction: float, sigma: float,
                  width: float = 6.0) -> tuple:
    """
    Sample window searched for a crossing of ``fraction * max(mean_pulse)``.

    It opens `width` expected timing standard deviations (noise RMS over the
    mean-pulse slope) before the mean pulse crosses, and closes at the later
    of the same distance after it and the mean-pulse maximum.
    """
    y = np.asarray(mean_pulse.samples, dtype=float)
    k = int(np.argmax(y))
    level = fraction * y[k]
    below = np.nonzero(y[:k + 1] < level)[0]
    if below.size == 0:
        raise ValueError("mean pulse has no rising crossing")
    j = int(below[-1])
    slope = max((y[j + 1] - y[j]) / mean_pulse.dt, 1e-300)
    t_cross = _interp_cross(y, j, level, mean_pulse.dt)
    spread = width * threshold_jitter_estimate(max(sigma, 0.0) or 1e-300, slope).std
    dt = mean_pulse.dt
    start = max(int(math.floor((t_cross - spread) / dt)) - 1, 0)
    stop = min(max(int(math.ceil((t_cross + spread) / dt)) + 1, k + 1), y.size - 1)
    return start, stop


def threshold_crossings(batch: TraceBatch, assignment: PhotonClassAssignment, fraction: float,
                        n: int = 1, mean_pulse: Optional[Trace] = None,
                        baseline: Optional[np.ndarray] = None,
                        sigma: Optional[float] = None, gate_width: float = 6.0) -> CrossingRecord:
    """
    First upward crossing of ``fraction`` of the class mean-pulse maximum.

    Each record of class `n` is baseline corrected and searched inside the
    window returned by `crossing_gate`. Records already above the level at the
    start of the window, or that never reach it, are kept as misses (NaN).
    Times are seconds from the start of the record.
    """
    if not 0 < fraction < 1:
        raise ValueError(f"threshold fraction must be in (0, 1), got {fraction}")
    if baseline is None:
        baseline = batch_baselines(batch)
    if mean_pulse is None:
        mean_pulse = class_mean_pulse(batch, assignment, n, baseline)
    if sigma is None:
        sigma = noise_rms(batch, baseline)
    rows = assignment.members(n)
    level = fraction * float(np.max(mean_pulse.samples))
    start, stop = crossing_gate(mean_pulse, fraction, sigma, gate_width)
    y = batch.codes[rows, start:stop + 1] * batch.digitizer.lsb - baseline[rows, None]
    idx = first_crossings(y, level)
    return CrossingRecord(rows, fraction, (idx + start) * batch.dt, level, (start, stop))


def crossing_histogram(times, dt: float, quantiles=(0.001, 0.999), margin: float = 0.25):
    """
    Histogram of crossing times with bin width ``max(dt / 4, span / 200)``.

    `span` is the distance between the given quantiles; the range extends by
    `margin` spans on either side.
    """
    t = np.asarray(times, dtype=float)
    t = t[np.isfinite(t)]
    if t.size == 0:
        raise ValueError("no crossing times")
    q0, q1 = np.quantile(t, quantiles)
    span = q1 - q0
    width = max(dt / 4, span / 200)
    lo = q0 - margin * span - width / 2
    nbin = int(math.ceil((span * (1 + 2 * margin) + width) / width))
    edges = lo + width * np.arange(nbin + 1)
    counts, _ = np.histogram(t, edges)
    return edges, counts


# -- jitter vs threshold ---------------------------------------------------------------

@dataclass
class JitterPoint:
    fraction: float
    fwhm: float
    fwhm_err: float
    sigma: float
    tau: float
    reduced_chi2: float
    status: str
    n_events: int
    n_miss: int
    low_stats: bool
    std: float
    fit: Optional[EmgFit] = None


@dataclass
class JitterCurve:
    photon_number: int
    points: list

    @property
    def fractions(self) -> np.ndarray:
        return np.array([p.fraction for p in self.points])

    @property
    def fwhm(self) -> np.ndarray:
        return np.array([p.fwhm for p in self.points])


def jitter_point(rec: CrossingRecord, dt: float) -> JitterPoint:
    """EMG fit to the crossing-time histogram of one class and threshold."""
    t = rec.times[rec.hit]
    n_ev = int(t.size)
    std = float(np.std(t)) if n_ev > 1 else math.nan
    low = n_ev < LOW_STATS
    if n_ev < 2:
        return JitterPoint(rec.fraction, math.nan, math.nan, math.nan, math.nan, math.nan,
                           "degenerate", n_ev, rec.n_miss, True, std)
    edges, counts = crossing_histogram(t, dt)
    if np.count_nonzero(counts) < 8:
        # all arrivals within a few bins: the empirical width is the answer
        return JitterPoint(rec.fraction, FWHM_PER_SIGMA * std, math.nan, std, math.inf,
                           math.nan, "degenerate", n_ev, rec.n_miss, low, std)
    fit = fit_emg(edges, counts)
    return JitterPoint(rec.fraction, fit.fwhm, fit.fwhm_err, fit.params.sigma, fit.params.tau,
                       fit.reduced_chi2, fit.status, n_ev, rec.n_miss, low, std, fit)


def jitter_vs_threshold(batch: TraceBatch, assignment: PhotonClassAssignment,
                        fractions: Sequence[float], classes: Sequence[int] = (1, 2, 3),
                        baseline: Optional[np.ndarray] = None, sigma: Optional[float] = None,
                        mean_pulses: Optional[Dict[int, Trace]] = None,
                        gate_width: float = 6.0) -> Dict[int, JitterCurve]:
    """
    Jitter FWHM against threshold fraction for each photon class.

    Class 0 carries no pulse and is never analysed. Classes absent from the
    assignment are skipped.
    """
    if baseline is None:
        baseline = batch_baselines(batch)
    if sigma is None:
        sigma = noise_rms(batch, baseline)
    mean_pulses = dict(mean_pulses or {})
    out = {}
    counts = assignment.counts()
    for n in classes:
        if n < 1 or n >= counts.size or counts[n] == 0:
            continue
        if n not in mean_pulses:
            mean_pulses[n] = class_mean_pulse(batch, assignment, n, baseline)
        pts = []
        for f in fractions:
            rec = threshold_crossings(batch, assignment, f, n, mean_pulses[n], baseline, sigma,
                                      gate_width)
            pts.append(jitter_point(rec, batch.dt))
        out[n] = JitterCurve(n, pts)
    return out

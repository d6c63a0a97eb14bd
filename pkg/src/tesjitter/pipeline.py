"""
End-to-end analysis of a trace batch.

``analyze_batch`` chains the analysis stages in order: baselines, a first
matched filter on the mean of all above-noise records, classification,
a second matched filter on the one-photon mean pulse, classification again,
energy scale, class mean pulses, rise/decay metrics, and jitter against
threshold.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from . import analysis as an
from .config import AnalysisSettings
from .pulse_sim import Trace, TraceBatch


@dataclass
class AnalysisResult:
    settings: AnalysisSettings
    n_traces: int
    baseline: np.ndarray
    noise_rms: float
    scores: np.ndarray
    template: np.ndarray
    histogram: an.AreaHistogram
    assignment: Optional[an.PhotonClassAssignment] = None
    calibration: Optional[an.EnergyCalibration] = None
    mean_pulses: Dict[int, Trace] = field(default_factory=dict)
    shape_metrics: Dict[int, an.RiseFall] = field(default_factory=dict)
    jitter: Dict[int, an.JitterCurve] = field(default_factory=dict)
    crossings: Dict[tuple, an.CrossingRecord] = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return self.assignment is None


def _classify(scores, s: AnalysisSettings, notes):
    hist = an.build_area_histogram(scores, s.hist_bins, s.smooth_fraction, s.peak_significance)
    if not hist.classification_available:
        return hist, None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", an.ClassificationWarning)
        labels = an.classify(scores, hist, s.max_valley_ratio)
    notes.extend(str(w.message) for w in caught)
    return hist, labels


def analyze_batch(batch: TraceBatch, settings: Optional[AnalysisSettings] = None,
                  photon_energy: Optional[float] = None) -> AnalysisResult:
    """
    Run the full measurement chain on `batch`.

    Ground truth in the batch is never consulted. When fewer than two
    histogram peaks are found the result is partial: scores and histogram are
    filled, everything downstream is empty.
    """
    s = settings or AnalysisSettings()
    if len(batch) == 0:
        raise ValueError("empty trace batch")
    notes = []
    base = an.batch_baselines(batch)
    sigma = an.noise_rms(batch, base)
    template = an.above_noise_template(batch, base, sigma, s.template_nsigma)
    scores = an.batch_scores(batch, template, base)
    hist, labels = _classify(scores, s, notes)
    res = AnalysisResult(s, len(batch), base, sigma, scores, template, hist, notes=notes)
    if labels is None:
        notes.append(f"classification unavailable: {hist.peaks.size} histogram peak(s)")
        return res

    # second pass: the one-photon mean pulse as template keeps scores in photon units
    if labels.counts()[1] > 0:
        template = an.class_mean_pulse(batch, labels, 1, base).samples
        scores = an.batch_scores(batch, template, base)
        notes.clear()
        hist2, labels2 = _classify(scores, s, notes)
        if labels2 is not None:
            hist, labels = hist2, labels2
            res.template, res.scores, res.histogram = template, scores, hist
    res.assignment = labels

    if photon_energy is not None and hist.peaks.size >= 3:
        res.calibration = an.energy_calibration(hist, photon_energy, scores, labels.labels)

    counts = labels.counts()
    for n in s.classes:
        if n < counts.size and counts[n] > 0:
            res.mean_pulses[n] = an.class_mean_pulse(batch, labels, n, base)
            try:
                res.shape_metrics[n] = an.rise_fall_metrics(res.mean_pulses[n])
            except ValueError as exc:
                notes.append(f"class {n} mean pulse: {exc}")
        else:
            notes.append(f"class {n} is empty")

    for n, mp in res.mean_pulses.items():
        pts = []
        for f in s.thresholds:
            rec = an.threshold_crossings(batch, labels, f, n, mp, base, sigma, s.gate_width)
            res.crossings[(n, f)] = rec
            pts.append(an.jitter_point(rec, batch.dt))
        res.jitter[n] = an.JitterCurve(n, pts)
        for p in pts:
            if p.low_stats:
                notes.append(f"class {n} at {p.fraction:g}: only {p.n_events} events")
    return res


def closure(batch: TraceBatch, res: AnalysisResult) -> dict:
    """Compare the analysis with the simulator's ground truth."""
    if not batch.has_truth or res.assignment is None:
        return {}
    truth = np.asarray(batch.n_true, dtype=np.int64)
    labels = res.assignment.labels
    kmax = int(max(truth.max(), labels.max())) + 1
    confusion = np.zeros((kmax, kmax), dtype=np.int64)
    np.add.at(confusion, (truth, labels), 1)
    low = truth <= 3
    out = {
        "classification_accuracy_n_le_3": float(np.mean(labels[low] == truth[low])),
        "confusion_true_by_measured": confusion.tolist(),
        "timing": [],
    }
    t0 = np.asarray(batch.t0_true, dtype=float)
    for (n, f), rec in sorted(res.crossings.items()):
        hit = rec.hit
        d = rec.times[hit] - t0[rec.trace_ids[hit]]
        out["timing"].append({
            "photon_number": n, "fraction": f, "n_events": int(hit.sum()),
            "delay_mean": float(d.mean()) if d.size else None,
            "delay_std": float(d.std()) if d.size > 1 else None,
            "crossing_std": float(rec.times[hit].std()) if d.size > 1 else None,
            "true_arrival_std": float(t0[rec.trace_ids].std()),
        })
    return out

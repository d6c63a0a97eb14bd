"""
Structured reports (JSON) and plot-data tables (CSV).

Report values are SI; every table lists its column units. Plot-data CSVs
use ns / nH / eV columns named with their unit for direct plotting.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import math
import os
from typing import Optional

import numpy as np

from . import __version__
from .analysis import crossing_histogram
from .config import ConfigError, RunConfig, parse_quantity
from .device_model import (EV, ParamRange, combined_rise_time, corner_extremes,
                           delta_current, electrical_rise_time, external_rise_time,
                           jitter_envelope, optimal_inductance, predicted_jitter_fwhm,
                           rms_noise)
from .pipeline import AnalysisResult, closure
from .pulse_sim import TraceBatch
from .timing_fit import emg_pdf


def table(columns, units, rows) -> dict:
    if len(columns) != len(units):
        raise ValueError("every column needs a unit")
    return {"columns": list(columns), "units": list(units), "rows": [list(r) for r in rows]}


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def provenance(cfg: RunConfig, seed: Optional[int] = None, **extra) -> dict:
    p = {
        "config_hash": cfg.digest(),
        "seed": cfg.seed if seed is None else int(seed),
        "tool": "tesjitter",
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    p.update(extra)
    return p


def dumps(report: dict) -> str:
    return json.dumps(_clean(report), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, report: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(report))


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(["" if v is None or (isinstance(v, float) and not math.isfinite(v))
                        else (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                        for v in r])


def file_sha256(path, block: int = 1 << 22) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(block), b""):
            h.update(chunk)
    return h.hexdigest()


# -- predict / sweep -------------------------------------------------------------------

def predict_report(cfg: RunConfig, bracket=(1e-10, 1e-6)) -> dict:
    p = cfg.device
    opt = optimal_inductance(p, bracket)
    lo, hi = corner_extremes(cfg.ranges)
    corner_fields = sorted(cfg.ranges.intervals)
    return {
        "provenance": provenance(cfg),
        "prediction": table(
            ["quantity", "value"], ["", "SI"],
            [["jitter_fwhm", predicted_jitter_fwhm(p)],
             ["tau_el", electrical_rise_time(p)],
             ["tau_ext", external_rise_time(p)],
             ["tau_rise", combined_rise_time(p)],
             ["delta_current", delta_current(p)],
             ["rms_noise", rms_noise(p)],
             ["optimal_inductance", opt.inductance]]),
        "optimal_inductance_at_bracket_edge": opt.at_bound,
        "corners": {
            "best": {"jitter_fwhm": lo.value, **{k: getattr(lo.params, k) for k in corner_fields}},
            "worst": {"jitter_fwhm": hi.value, **{k: getattr(hi.params, k) for k in corner_fields}},
        },
    }


def format_predict(rep: dict) -> str:
    rows = dict(rep["prediction"]["rows"])
    best, worst = rep["corners"]["best"], rep["corners"]["worst"]

    def corner(c):
        keys = ", ".join(f"{k}={c[k]:.4g}" for k in sorted(c) if k != "jitter_fwhm")
        return f"{c['jitter_fwhm'] * 1e9:.3f} ns ({keys})"

    flag = "  [bracket edge]" if rep["optimal_inductance_at_bracket_edge"] else ""
    lines = [
        f"predicted jitter FWHM : {rows['jitter_fwhm'] * 1e9:.4f} ns  ({rows['jitter_fwhm']!r} s)",
        f"tau_el                : {rows['tau_el'] * 1e9:.4f} ns  ({rows['tau_el']!r} s)",
        f"tau_ext               : {rows['tau_ext'] * 1e9:.4f} ns  ({rows['tau_ext']!r} s)",
        f"tau_rise              : {rows['tau_rise'] * 1e9:.4f} ns  ({rows['tau_rise']!r} s)",
        f"delta I               : {rows['delta_current'] * 1e6:.4f} uA  ({rows['delta_current']!r} A)",
        f"I_RMS                 : {rows['rms_noise'] * 1e9:.4f} nA  ({rows['rms_noise']!r} A)",
        f"optimal L             : {rows['optimal_inductance'] * 1e9:.4f} nH"
        f"  ({rows['optimal_inductance']!r} H){flag}",
        f"best corner           : {corner(best)}",
        f"worst corner          : {corner(worst)}",
    ]
    return "\n".join(lines) + "\n"


def parse_grid(spec: str):
    """``"start:stop:num"`` with optional units, e.g. ``"5nH:100nH:96"``."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise ConfigError(f"grid: expected start:stop:num, got {spec!r}")
    start = parse_quantity(parts[0], "inductance", "grid.start")
    stop = parse_quantity(parts[1], "inductance", "grid.stop")
    try:
        num = int(parts[2])
    except ValueError:
        raise ConfigError(f"grid.num: not an integer: {parts[2]!r}") from None
    if num < 1 or not (0 < start) or (num > 1 and not stop > start):
        raise ConfigError("grid: need 0 < start < stop and num >= 1")
    return np.linspace(start, stop, num)


def sweep_rows(ranges: ParamRange, grid, measured=None):
    """
    Envelope rows ``(L nH, lower ns, upper ns[, measured min ns, measured max ns])``.

    `measured` is ``(inductance, min_fwhm, max_fwhm)`` in SI; it is attached to
    the grid row closest to that inductance.
    """
    env = jitter_envelope(ranges, grid)
    rows = [[L * 1e9, a * 1e9, b * 1e9] for L, a, b in zip(env.inductance, env.lower, env.upper)]
    header = ["inductance_nH", "lower_ns", "upper_ns"]
    if measured is not None:
        header += ["measured_min_ns", "measured_max_ns"]
        k = int(np.argmin(np.abs(env.inductance - measured[0])))
        for i, r in enumerate(rows):
            r += [measured[1] * 1e9, measured[2] * 1e9] if i == k else [None, None]
    return header, rows, env


def measured_from_report(rep: dict, photon_number: int = 1):
    """``(inductance, min, max)`` of the class jitter column of an analysis report."""
    tab = rep["jitter"]
    ci = tab["columns"].index("photon_number")
    fi = tab["columns"].index("fwhm")
    vals = [r[fi] for r in tab["rows"] if r[ci] == photon_number and r[fi] is not None]
    if not vals:
        raise ValueError(f"report has no jitter values for class {photon_number}")
    return rep["device_inductance"], min(vals), max(vals)


# -- analysis --------------------------------------------------------------------------

def analysis_report(cfg: RunConfig, batch: TraceBatch, res: AnalysisResult,
                    input_sha256: Optional[str] = None) -> dict:
    h = res.histogram
    rep = {
        "provenance": provenance(cfg, batch.provenance.get("seed"),
                                 input_sha256=input_sha256,
                                 simulator_params_hash=batch.provenance.get("params_hash")),
        "device_inductance": cfg.device.inductance,
        "summary": {
            "n_traces": res.n_traces,
            "noise_rms": res.noise_rms,
            "partial": res.partial,
            "notes": list(res.notes),
            "sample_interval": batch.dt,
        },
        "area_histogram": {
            "peaks": table(["index", "score"], ["", "one-photon units"],
                           [[i, p] for i, p in enumerate(h.peaks)]),
            "valleys": table(["index", "score"], ["", "one-photon units"],
                             [[i, v] for i, v in enumerate(h.valleys)]),
        },
    }
    if res.assignment is not None:
        cnt = res.assignment.counts()
        rep["classes"] = table(["photon_number", "count", "fraction"], ["", "", ""],
                               [[n, int(c), c / res.n_traces] for n, c in enumerate(cnt)])
    if res.calibration is not None:
        cal = res.calibration
        rep["energy_calibration"] = {
            "knots": table(["score", "energy"], ["one-photon units", "J"],
                           list(zip(cal.knots, cal.energies))),
            "one_photon_fwhm": cal.one_photon_fwhm,
            "one_photon_fwhm_eV": cal.one_photon_fwhm / EV,
        }
    rep["mean_pulse_metrics"] = table(
        ["photon_number", "rise_10_90", "decay_1e", "peak", "t_peak"], ["", "s", "s", "signal", "s"],
        [[n, m.rise_10_90, m.decay_1e, m.peak, m.t_peak] for n, m in sorted(res.shape_metrics.items())])
    rows = []
    for n, cur in sorted(res.jitter.items()):
        for p in cur.points:
            rows.append([n, p.fraction, p.fwhm, p.fwhm_err, p.sigma,
                         None if not math.isfinite(p.tau) else 1.0 / p.tau,
                         p.reduced_chi2, p.status, p.n_events, p.n_miss, p.low_stats])
    rep["jitter"] = table(
        ["photon_number", "fraction", "fwhm", "fwhm_err", "sigma", "decay_time",
         "reduced_chi2", "status", "n_events", "n_miss", "low_stats"],
        ["", "", "s", "s", "s", "s", "", "", "", "", ""], rows)
    if batch.has_truth:
        rep["closure"] = closure(batch, res)
    return rep


def write_analysis_outputs(out_dir, rep: dict, res: AnalysisResult, dt: float) -> list:
    """Write ``report.json`` and the plot-data CSVs into `out_dir`; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []

    def p(name):
        path = os.path.join(out_dir, name)
        paths.append(path)
        return path

    write_json(p("report.json"), rep)
    h = res.histogram
    write_csv(p("area_histogram.csv"), ["score_lo", "score_hi", "count", "smoothed"],
              zip(h.edges[:-1], h.edges[1:], h.counts, h.smoothed))
    if res.mean_pulses:
        ns = sorted(res.mean_pulses)
        m = len(res.mean_pulses[ns[0]].samples)
        cols = [res.mean_pulses[n].samples for n in ns]
        write_csv(p("mean_pulses.csv"), ["time_ns"] + [f"class_{n}" for n in ns],
                  ([k * dt * 1e9] + [c[k] for c in cols] for k in range(m)))
    rows = []
    for (n, f), rec in sorted(res.crossings.items()):
        t = rec.times[rec.hit]
        if t.size < 2:
            continue
        edges, counts = crossing_histogram(t, dt)
        pt = next(q for q in res.jitter[n].points if q.fraction == f)
        model = np.full(counts.size, np.nan)
        if pt.fit is not None:
            model = _fit_counts(pt.fit, edges)
        for lo, hi, c, mdl in zip(edges[:-1], edges[1:], counts, model):
            rows.append([n, f, lo * 1e9, hi * 1e9, int(c), mdl])
    write_csv(p("crossing_histograms.csv"),
              ["photon_number", "fraction", "t_lo_ns", "t_hi_ns", "count", "fit"], rows)
    write_csv(p("jitter_vs_threshold.csv"),
              ["photon_number", "fraction", "fwhm_ns", "fwhm_err_ns", "n_events", "status"],
              ([n, q.fraction, q.fwhm * 1e9, q.fwhm_err * 1e9, q.n_events, q.status]
               for n, cur in sorted(res.jitter.items()) for q in cur.points))
    return paths


def _fit_counts(fit, edges):
    """Expected counts per bin from a fitted EMG."""
    centers = 0.5 * (edges[1:] + edges[:-1])
    lam = fit.params.decay_time
    return fit.area * (edges[1] - edges[0]) * emg_pdf(centers, fit.params.t0, fit.params.sigma,
                                                     lam if math.isfinite(lam) else 0.0)

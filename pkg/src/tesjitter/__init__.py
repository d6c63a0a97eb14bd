"""
tesjitter: timing jitter of transition-edge-sensor photon detectors.

Analytic jitter model (`device_model`), Monte Carlo trace synthesis
(`pulse_sim`), the measurement pipeline (`analysis`, `pipeline`), EMG fits
of crossing-time histograms (`timing_fit`) and file formats / CLI
(`config`, `traceio`, `report`, `cli`).
"""

__version__ = "0.1.0"

from .device_model import (DeviceParams, JitterEnvelope, ParamRange, combined_rise_time,
                           corner_extremes, delta_current, electrical_rise_time,
                           equilibrium_power, external_rise_time, jitter_envelope,
                           optimal_inductance, predicted_jitter_fwhm, rms_noise,
                           threshold_jitter_estimate)
from .pulse_sim import (DigitizerParams, PulseShapeParams, SourceParams, Trace, TraceBatch,
                        compress_amplitude, ideal_pulse, simulate_batch)
from .timing_fit import EmgFit, EmgParams, emg_eval, emg_fwhm, fit_emg
from .analysis import (AreaHistogram, CrossingRecord, EnergyCalibration, JitterCurve,
                       PhotonClassAssignment, build_area_histogram, class_mean_pulse, classify,
                       energy_calibration, jitter_vs_threshold, matched_filter,
                       rise_fall_metrics, threshold_crossings)
from .config import AnalysisSettings, RunConfig
from .pipeline import analyze_batch

__all__ = [
    "DeviceParams", "JitterEnvelope", "ParamRange", "combined_rise_time", "corner_extremes",
    "delta_current", "electrical_rise_time", "equilibrium_power", "external_rise_time",
    "jitter_envelope", "optimal_inductance", "predicted_jitter_fwhm", "rms_noise",
    "threshold_jitter_estimate", "DigitizerParams", "PulseShapeParams", "SourceParams",
    "Trace", "TraceBatch", "compress_amplitude", "ideal_pulse", "simulate_batch", "EmgFit",
    "EmgParams", "emg_eval", "emg_fwhm", "fit_emg", "AreaHistogram", "CrossingRecord",
    "EnergyCalibration", "JitterCurve", "PhotonClassAssignment", "build_area_histogram",
    "class_mean_pulse", "classify", "energy_calibration", "jitter_vs_threshold",
    "matched_filter", "rise_fall_metrics", "threshold_crossings", "AnalysisSettings",
    "RunConfig", "analyze_batch",
]

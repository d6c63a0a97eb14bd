"""
Trace synthesis: pulse shapes, compression, noise, quantisation and the
determinism contract of the simulator.
"""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import poisson

from tesjitter.device_model import DeviceParams
from tesjitter.pulse_sim import (MEASURED_DECAY_TIMES, MEASURED_RISE_TIMES, DigitizerParams,
                                 PulseShapeParams, Ringing, SourceParams, TraceBatch,
                                 compress_amplitude, ideal_pulse, noise_rms_signal,
                                 simulate_batch)

DEV = DeviceParams.nominal()
SHAPE = PulseShapeParams.nominal()
DIGI = DigitizerParams.nominal()
SRC = SourceParams.nominal()


def short_digitizer(length=64, pre=8):
    return DIGI.replace(trace_length=length, pre_trigger=pre)


# ---------------------------------------------------------------- pulse shape

def test_pulse_is_causal():
    t = np.linspace(-500e-9, 0.0, 101)
    for n in (1, 2, 5):
        assert np.all(ideal_pulse(n, SHAPE, t) == 0.0)
    assert ideal_pulse(1, SHAPE, 1e-9) > 0


@pytest.mark.parametrize("n", [1, 2, 3])
def test_profiles_hit_rise_and_decay_targets(n):
    prof = SHAPE.profile(n)
    assert prof.rise_10_90 == pytest.approx(MEASURED_RISE_TIMES[n - 1], rel=0.02)
    assert prof.decay_1e == pytest.approx(MEASURED_DECAY_TIMES[n - 1], rel=0.02)


def test_profile_is_unit_peak():
    prof = SHAPE.profile(2)
    assert prof(prof.t_peak) == pytest.approx(1.0, rel=1e-12)
    t = np.linspace(0, 5e-6, 20001)
    assert prof(t).max() <= 1.0 + 1e-12


def test_decay_times_increase_with_photon_number():
    d = np.array(SHAPE.decay_times)
    assert np.all(np.diff(d) > 0)


def test_photon_number_outside_table():
    with pytest.raises(ValueError):
        ideal_pulse(SHAPE.n_max + 1, SHAPE, 0.0)
    with pytest.raises(ValueError):
        ideal_pulse(0, SHAPE, 0.0)


def test_ringing_adds_after_arrival_only():
    ring = SHAPE.replace(ringing=Ringing(0.05, 30e6, 200e-9))
    t = np.linspace(-100e-9, 1e-6, 1101)
    diff = ideal_pulse(1, ring, t) - ideal_pulse(1, SHAPE, t)
    assert np.all(diff[t <= 0] == 0)
    assert np.abs(diff[t > 0]).max() > 0.01


def test_shape_validation():
    with pytest.raises(ValueError):
        SHAPE.replace(rise_times=(1e-9,), decay_times=(1e-6,))   # faster than the low-pass
    with pytest.raises(ValueError):
        SHAPE.replace(rise_times=(30e-9, 30e-9), decay_times=(1e-6,))
    with pytest.raises(ValueError):
        DigitizerParams(1e9, 8, 1.0, 100, 100)
    with pytest.raises(ValueError):
        SourceParams(-1.0, 1e5, 1e-9, 0.0, 1)


# ---------------------------------------------------------------- compression

def test_compression_zero_is_identity():
    x = np.linspace(0, 10, 11)
    assert np.array_equal(compress_amplitude(x, 0.0), x)


# kept below k x ~ 4, where tanh still resolves in double precision
@given(st.floats(0, 2), st.floats(1e-3, 2), st.floats(0.01, 1))
def test_compression_monotone_and_below_identity(x, dx, k):
    a = compress_amplitude(x, k)
    b = compress_amplitude(x + dx, k)
    assert b > a
    assert a <= x + 1e-12


def test_compression_rejects_negative():
    with pytest.raises(ValueError):
        compress_amplitude(-1.0, 0.5)


def test_amplitudes_sublinear_with_shrinking_separations():
    amp = SHAPE.amplitudes
    sep = np.diff(np.concatenate([[0.0], amp]))
    assert np.all(sep > 0)
    assert np.all(np.diff(sep) < 0)
    assert np.all(amp < np.arange(1, SHAPE.n_max + 1))


# ---------------------------------------------------------------- simulator

def test_zero_mean_gives_noise_only():
    b = simulate_batch(SRC.replace(mean_photon_number=0.0), SHAPE, DEV, short_digitizer(), 200)
    assert np.all(b.n_true == 0)
    assert abs(b.values().mean()) < 0.01


def test_same_seed_is_bit_identical_and_chunk_independent():
    digi = short_digitizer(1500, 100)
    a = simulate_batch(SRC, SHAPE, DEV, digi, 300)
    b = simulate_batch(SRC, SHAPE, DEV, digi, 300, chunk=7)
    assert np.array_equal(a.codes, b.codes)
    assert np.array_equal(a.t0_true, b.t0_true) and np.array_equal(a.n_true, b.n_true)
    assert a.provenance == b.provenance
    c = simulate_batch(SRC.replace(rng_seed=SRC.rng_seed + 1), SHAPE, DEV, digi, 300)
    assert not np.array_equal(a.codes, c.codes)


def test_prefix_of_larger_batch_is_identical():
    digi = short_digitizer(200, 20)
    a = simulate_batch(SRC, SHAPE, DEV, digi, 50)
    b = simulate_batch(SRC, SHAPE, DEV, digi, 120)
    assert np.array_equal(a.codes, b.codes[:50])


def test_photon_numbers_follow_poisson():
    n = 100_000
    b = simulate_batch(SRC, SHAPE, DEV, short_digitizer(16, 4), n)
    counts = np.bincount(b.n_true, minlength=8)[:8]
    p = poisson.pmf(np.arange(8), SRC.mean_photon_number)
    sd = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) <= 3 * sd)


def test_noise_rms_matches_configuration():
    digi = DIGI.replace(bits=16, full_scale=1.0)
    b = simulate_batch(SRC.replace(mean_photon_number=0.0), SHAPE, DEV, digi, 300)
    v = b.values()
    assert v.size >= 1_000_000
    sigma = noise_rms_signal(SHAPE, DEV)
    expected = math.sqrt(sigma ** 2 + digi.lsb ** 2 / 12)
    assert v.std() == pytest.approx(expected, rel=0.02)
    assert b.provenance["noise_rms"] == sigma


def test_white_noise_option_matches_rms():
    shape = SHAPE.replace(noise_filtered=False)
    digi = DIGI.replace(bits=16, full_scale=1.0)
    b = simulate_batch(SRC.replace(mean_photon_number=0.0), shape, DEV, digi, 300)
    v = b.values()
    assert v.std() == pytest.approx(noise_rms_signal(shape, DEV), rel=0.02)
    # white noise: neighbouring samples uncorrelated
    assert abs(np.corrcoef(v[:, :-1].ravel(), v[:, 1:].ravel())[0, 1]) < 0.01


def test_quantisation_error_within_half_lsb():
    shape = SHAPE.replace(noise_scale=1e-12, energy_fwhm=0.0)
    digi = short_digitizer(1500, 100)
    b = simulate_batch(SRC.replace(mean_photon_number=2.0), shape, DEV, digi, 200)
    assert b.provenance["clipped_traces"] == 0
    t = np.arange(digi.trace_length) * digi.dt
    for i in range(len(b)):
        n = int(b.n_true[i])
        ideal = ideal_pulse(n, shape, t - b.t0_true[i]) if n else np.zeros_like(t)
        assert np.abs(b.values(i) - ideal).max() <= 0.5 * digi.lsb * (1 + 1e-9)


def test_clipping_is_counted():
    digi = short_digitizer(1500, 100).replace(full_scale=0.5)
    b = simulate_batch(SRC, SHAPE, DEV, digi, 200)
    big = int(np.sum(b.n_true >= 1))
    assert b.provenance["clipped_traces"] == big
    assert b.codes.max() == digi.code_range[1]


def test_mean_pulse_reproduces_ideal_pulse():
    shape = SHAPE.replace(energy_fwhm=0.0)
    digi = DIGI.replace(bits=16, full_scale=4.0, trace_length=1500, pre_trigger=100)
    src = SRC.replace(mean_photon_number=1.0, arrival_time_offset=200e-9)
    b = simulate_batch(src, shape, DEV, digi, 30_000)
    ones = np.nonzero(b.n_true == 1)[0]
    assert ones.size >= 10_000
    mean = b.values(ones).mean(axis=0)
    # arrival is uniform inside the 1 ns optical pulse: average the ideal over it
    t = np.arange(digi.trace_length) * digi.dt
    u = (np.arange(200) + 0.5) / 200 * src.optical_pulse_duration
    ideal = np.mean([ideal_pulse(1, shape, t - src.arrival_time_offset - x) for x in u], axis=0)
    bound = 3 * noise_rms_signal(shape, DEV) / math.sqrt(ones.size)
    assert np.abs(mean - ideal).max() <= bound


def test_short_repetition_period_rejected():
    with pytest.raises(ValueError):
        simulate_batch(SRC.replace(repetition_rate=1e7), SHAPE, DEV, short_digitizer(), 1)


def test_batch_invariants():
    with pytest.raises(ValueError):
        TraceBatch(np.zeros((2, 10), np.int16), short_digitizer(10, 2), np.zeros(2), None)
    with pytest.raises(ValueError):
        TraceBatch(np.zeros((2, 11), np.int16), short_digitizer(10, 2))
    b = TraceBatch(np.zeros((2, 10), np.int16), short_digitizer(10, 2))
    assert not b.has_truth and b[0].t0_true is None

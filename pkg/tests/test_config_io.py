"""Run configuration, quantity parsing and the binary trace-file format."""

import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tesjitter.config import (ConfigError, RunConfig, apply_overrides, load_config,
                              parse_quantity, save_config)
from tesjitter.device_model import EV
from tesjitter.pulse_sim import simulate_batch
from tesjitter.traceio import (HEADER, MAGIC, TraceFileError, read_batch, read_header,
                               write_batch)

CFG = RunConfig()


# ---------------------------------------------------------------- quantities

@pytest.mark.parametrize("text, dim, expected", [
    ("24 nH", "inductance", 24e-9),
    ("17.5ns", "time", 17.5e-9),
    ("0.8 eV", "energy", 0.8 * EV),
    ("150 mK", "temperature", 0.15),
    ("20 MHz", "frequency", 20e6),
    ("1.25 GS/s", "frequency", 1.25e9),
    ("1e3 pH", "inductance", 1e-9),
    ("3", None, 3.0),
])
def test_parse_quantity(text, dim, expected):
    assert parse_quantity(text, dim) == expected


@pytest.mark.parametrize("text", ["24 nX", "fast", "24 ns", ""])
def test_parse_quantity_rejects(text):
    with pytest.raises(ConfigError):
        parse_quantity(text, "inductance")


def test_parse_quantity_rejects_bool():
    with pytest.raises(ConfigError):
        parse_quantity(True)


# ---------------------------------------------------------------- config

def test_default_round_trip(tmp_path):
    path = tmp_path / "cfg.json"
    save_config(CFG, path)
    assert load_config(path) == CFG
    assert load_config(path).digest() == CFG.digest()


@settings(max_examples=30, deadline=None)
@given(st.floats(150, 800), st.floats(0.8, 2.2), st.floats(1e-9, 1e-7),
       st.integers(0, 2 ** 64 - 1), st.lists(st.floats(0.05, 0.95), min_size=1, max_size=9))
def test_round_trip_is_lossless(alpha, beta, inductance, seed, fractions):
    cfg = RunConfig.from_dict({
        "device": {"alpha": alpha, "beta": beta, "inductance": inductance},
        "seed": seed, "analysis": {"thresholds": fractions},
    })
    again = RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg and again.seed == seed


def test_unit_strings_in_config():
    cfg = RunConfig.from_dict({"device": {"inductance": "30 nH", "photon_energy": "1.6 eV"},
                               "ranges": {"inductance": ["20 nH", "40 nH"]}})
    assert cfg.device.inductance == 30e-9
    assert cfg.device.photon_energy == pytest.approx(1.6 * EV)
    assert cfg.ranges.interval("inductance") == (20e-9, 40e-9)


@pytest.mark.parametrize("doc, field", [
    ({"device": {"inductance": 0}}, "inductance"),
    ({"device": {"inductance": "24 ns"}}, "device.inductance"),
    ({"device": {"flux": 1}}, "device.flux"),
    ({"digitizer": {"bits": 8.5}}, "digitizer.bits"),
    ({"ranges": {"alpha": [800, 150]}}, "alpha"),
    ({"analysis": {"thresholds": [0.5, 1.2]}}, "thresholds"),
    ({"detector": {}}, "detector"),
    ({"shape": {"noise_filtered": "yes"}}, "shape.noise_filtered"),
])
def test_invalid_config_names_field(doc, field):
    with pytest.raises(ConfigError, match=field):
        RunConfig.from_dict(doc)


def test_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(path)


def test_overrides_take_precedence():
    cfg = RunConfig.from_dict({"device": {"inductance": 30e-9}})
    cfg = apply_overrides(cfg, "device", {"inductance": "20 nH", "alpha": None})
    assert cfg.device.inductance == 20e-9 and cfg.device.alpha == CFG.device.alpha
    cfg = apply_overrides(cfg, "seed", {"seed": 5})
    assert cfg.seed == 5


# ---------------------------------------------------------------- trace files

@pytest.fixture(scope="module")
def small_batch():
    d = CFG.digitizer.replace(trace_length=1500, pre_trigger=100)
    return simulate_batch(CFG.source.replace(arrival_time_offset=200e-9), CFG.shape,
                          CFG.device, d, 257)


@pytest.mark.parametrize("mmap", [True, False])
def test_trace_file_round_trip(tmp_path, small_batch, mmap):
    path = tmp_path / "b.tesb"
    write_batch(path, small_batch)
    back = read_batch(path, small_batch.digitizer.pre_trigger, mmap=mmap)
    assert np.array_equal(np.asarray(back.codes), small_batch.codes)
    assert np.array_equal(back.t0_true, small_batch.t0_true)
    assert np.array_equal(back.n_true, small_batch.n_true)
    assert back.digitizer == small_batch.digitizer


def test_trace_file_layout(tmp_path, small_batch):
    path = tmp_path / "b.tesb"
    write_batch(path, small_batch)
    raw = path.read_bytes()
    magic, version, flags, bits, rate, fs, n, m = HEADER.unpack_from(raw)
    assert (magic, version, flags, bits) == (MAGIC, 1, 1, 8)
    assert (rate, fs, n, m) == (1.25e9, 2.0, 257, 1500)
    assert len(raw) == 32 + n * (2 * m + 8 + 1)
    first = np.frombuffer(raw, "<i2", count=m, offset=32)
    assert np.array_equal(first, small_batch.codes[0])
    t0, n0 = struct.unpack_from("<dB", raw, 32 + 2 * m)
    assert t0 == small_batch.t0_true[0] and n0 == small_batch.n_true[0]


def test_trace_file_without_truth(tmp_path, small_batch):
    from tesjitter.pulse_sim import TraceBatch
    bare = TraceBatch(small_batch.codes, small_batch.digitizer)
    path = tmp_path / "bare.tesb"
    write_batch(path, bare)
    assert not read_header(path)["truth"]
    back = read_batch(path, 100)
    assert not back.has_truth


def test_truncated_file(tmp_path, small_batch):
    path = tmp_path / "b.tesb"
    write_batch(path, small_batch)
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(TraceFileError):
        read_batch(path, 100)


def test_empty_and_foreign_files(tmp_path):
    empty = tmp_path / "empty.tesb"
    empty.write_bytes(HEADER.pack(MAGIC, 1, 1, 8, 1.25e9, 2.0, 0, 100))
    with pytest.raises(TraceFileError, match="no traces"):
        read_batch(empty, 10)
    short = tmp_path / "short.tesb"
    short.write_bytes(b"TES")
    with pytest.raises(TraceFileError):
        read_batch(short, 10)
    foreign = tmp_path / "foreign.tesb"
    foreign.write_bytes(HEADER.pack(b"NOPE", 1, 0, 8, 1.25e9, 2.0, 1, 4) + bytes(8))
    with pytest.raises(TraceFileError, match="magic"):
        read_batch(foreign, 1)
    newer = tmp_path / "newer.tesb"
    newer.write_bytes(HEADER.pack(MAGIC, 2, 0, 8, 1.25e9, 2.0, 1, 4) + bytes(8))
    with pytest.raises(TraceFileError, match="version"):
        read_batch(newer, 1)

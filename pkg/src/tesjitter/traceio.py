"""
Binary trace-batch files.

Layout, little-endian::

    header  magic b"TESB" | u16 version | u8 flags | u8 bits
            f64 sample_rate | f64 full_scale | u32 n_traces | u32 samples
    record  i16 samples[samples] (+ f64 t0_true, u8 n_true when flags bit 0)

Records are packed without padding, so a file can be memory-mapped as one
structured array.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .pulse_sim import DigitizerParams, TraceBatch

MAGIC = b"TESB"
VERSION = 1
FLAG_TRUTH = 0x01
HEADER = struct.Struct("<4sHBBddII")


class TraceFileError(IOError):
    pass


def record_dtype(n_samples: int, truth: bool) -> np.dtype:
    fields = [("samples", "<i2", (n_samples,))]
    if truth:
        fields += [("t0_true", "<f8"), ("n_true", "u1")]
    return np.dtype(fields)


def write_batch(path, batch: TraceBatch) -> None:
    """Write `batch`; ground truth is stored only if the batch carries it."""
    digi = batch.digitizer
    n, m = batch.codes.shape
    truth = batch.has_truth
    dtype = record_dtype(m, truth)
    head = HEADER.pack(MAGIC, VERSION, FLAG_TRUTH if truth else 0, digi.bits,
                       float(digi.sample_rate), float(digi.full_scale), n, m)
    with open(path, "wb") as fh:
        fh.write(head)
        step = max(1, (64 << 20) // dtype.itemsize)
        for s in range(0, n, step):
            rec = np.zeros(min(step, n - s), dtype=dtype)
            rec["samples"] = batch.codes[s:s + step]
            if truth:
                rec["t0_true"] = batch.t0_true[s:s + step]
                rec["n_true"] = batch.n_true[s:s + step]
            fh.write(rec.tobytes())


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read(HEADER.size)
    if len(raw) < HEADER.size:
        raise TraceFileError(f"{path}: too short for a trace-file header")
    magic, version, flags, bits, rate, full, n, m = HEADER.unpack(raw)
    if magic != MAGIC:
        raise TraceFileError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise TraceFileError(f"{path}: unsupported version {version}")
    return {"flags": flags, "bits": bits, "sample_rate": rate, "full_scale": full,
            "n_traces": n, "samples": m, "truth": bool(flags & FLAG_TRUTH)}


def read_batch(path, pre_trigger: int, mmap: bool = True) -> TraceBatch:
    """
    Load a trace file.

    The pre-trigger length is not stored in the file and comes from the
    analysis configuration. With `mmap` the samples stay on disk.
    """
    h = read_header(path)
    if h["n_traces"] == 0:
        raise TraceFileError(f"{path}: file holds no traces")
    dtype = record_dtype(h["samples"], h["truth"])
    expected = HEADER.size + h["n_traces"] * dtype.itemsize
    size = os.path.getsize(path)
    if size != expected:
        raise TraceFileError(f"{path}: size {size} bytes, header implies {expected}")
    try:
        digi = DigitizerParams(h["sample_rate"], h["bits"], h["full_scale"],
                               h["samples"], pre_trigger)
    except ValueError as exc:
        raise TraceFileError(f"{path}: {exc}") from None
    if mmap:
        rec = np.memmap(path, dtype=dtype, mode="r", offset=HEADER.size,
                        shape=(h["n_traces"],))
    else:
        rec = np.fromfile(path, dtype=dtype, offset=HEADER.size, count=h["n_traces"])
    t0 = n_true = None
    if h["truth"]:
        t0 = np.asarray(rec["t0_true"], dtype=float)
        n_true = np.asarray(rec["n_true"], dtype=np.int64)
    return TraceBatch(rec["samples"], digi, t0, n_true, {"source_file": os.fspath(path)})

"""Binary waveform files: 8-byte little-endian sample count, then
interleaved float64 I/Q pairs, little-endian.  Sample rate travels out of
band (callers pass it when reading).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from . import params as P
from .ofdm import Baseband


def write_baseband(path: str | Path, bb: Baseband) -> None:
    samples = np.ascontiguousarray(bb.samples, dtype=complex)
    iq = np.empty(2 * len(samples), dtype="<f8")
    iq[0::2] = samples.real
    iq[1::2] = samples.imag
    with open(path, "wb") as f:
        f.write(struct.pack("<Q", len(samples)))
        f.write(iq.tobytes())


def read_baseband(path: str | Path, sample_rate: float = P.SAMPLE_RATE) -> Baseband:
    with open(path, "rb") as f:
        header = f.read(8)
        if len(header) < 8:
            raise ValueError("file truncated: no sample count header")
        (count,) = struct.unpack("<Q", header)
        data = f.read(16 * count)
    if len(data) != 16 * count:
        raise ValueError(f"file truncated: header says {count} samples")
    iq = np.frombuffer(data, dtype="<f8")
    return Baseband(iq[0::2] + 1j * iq[1::2], sample_rate)

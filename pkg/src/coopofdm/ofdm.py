"""OFDM symbol construction and recovery.

Grids are (n_symbols, 64) complex arrays in FFT bin order.  Transforms are
unitary (norm="ortho") so subcarrier power equals time-sample power and noise
variance is preserved in both domains.  Each symbol gets a 16-sample cyclic
prefix; a receive window may start up to CP_LEN samples early ("backoff"),
which shows up as a per-bin phase ramp absorbed by channel estimation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import params as P


class InsufficientSamplesError(ValueError):
    """Stream too short for the requested number of symbols."""


@dataclass
class Baseband:
    """A complex baseband sample stream with its sample rate."""
    samples: np.ndarray
    sample_rate: float = P.SAMPLE_RATE

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def place_data(data_symbols: np.ndarray, pilot_values: np.ndarray = P.PILOT_VALUES,
               scale: float = P.SUBCARRIER_SCALE) -> np.ndarray:
    """Scatter (n_symbols, 48) data symbols into (n_symbols, 64) grids.

    Pilot bins get pilot_values on every symbol, null bins stay zero.  The
    default scale gives the modulated symbol unit RMS in time.
    """
    data_symbols = np.atleast_2d(data_symbols)
    n_sym = data_symbols.shape[0]
    if data_symbols.shape[1] != P.N_DATA:
        raise ValueError(f"expected {P.N_DATA} data symbols per row")
    grid = np.zeros((n_sym, P.N_FFT), dtype=complex)
    grid[:, P.DATA_BINS] = data_symbols
    grid[:, P.PILOT_BINS] = pilot_values
    return grid * scale


def extract_data(grid: np.ndarray) -> np.ndarray:
    """Gather the 48 data bins from (n_symbols, 64) grids."""
    return np.atleast_2d(grid)[:, P.DATA_BINS]


def extract_pilots(grid: np.ndarray) -> np.ndarray:
    return np.atleast_2d(grid)[:, P.PILOT_BINS]


def ofdm_modulate(grid: np.ndarray) -> np.ndarray:
    """Grids -> time samples with cyclic prefix, concatenated.

    Output length is n_symbols * 80.
    """
    grid = np.atleast_2d(grid)
    body = np.fft.ifft(grid, axis=1, norm="ortho")
    with_cp = np.concatenate([body[:, -P.CP_LEN:], body], axis=1)
    return with_cp.reshape(-1)


def ofdm_demodulate(samples: np.ndarray, n_symbols: int, offset: int = 0,
                    backoff: int = 0) -> np.ndarray:
    """Recover (n_symbols, 64) grids from a sample stream.

    offset is the index of the first symbol's cyclic prefix.  backoff moves
    each FFT window that many samples into the preceding cyclic prefix; the
    resulting known phase ramp is left in place for the channel estimator to
    absorb.
    """
    if not 0 <= backoff <= P.CP_LEN:
        raise ValueError("backoff must lie within the cyclic prefix")
    need = offset + n_symbols * P.SYMBOL_LEN
    if offset < 0 or len(samples) < need:
        raise InsufficientSamplesError(
            f"need {need} samples for {n_symbols} symbols, have {len(samples)}")
    chunks = samples[offset:need].reshape(n_symbols, P.SYMBOL_LEN)
    start = P.CP_LEN - backoff
    windows = chunks[:, start:start + P.N_FFT]
    return np.fft.fft(windows, axis=1, norm="ortho")

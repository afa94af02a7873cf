"""Air-interface constants and derived layout tables.

Everything downstream (modulation, framing, estimation, channel emulation)
imports its numerology from here.  The layout is the classic 64-point WLAN
plan: 48 data subcarriers, 4 pilots at logical indices +-7 and +-21, guards
and DC empty, 16-sample cyclic prefix, 10 MHz sampling.
"""

from __future__ import annotations

import numpy as np

SAMPLE_RATE = 10e6          # Hz
N_FFT = 64
CP_LEN = 16
SYMBOL_LEN = N_FFT + CP_LEN         # 80 samples, 8 us
SYMBOL_DURATION = SYMBOL_LEN / SAMPLE_RATE
SUBCARRIER_SPACING = SAMPLE_RATE / N_FFT   # 156.25 kHz

CARRIER_FREQ = 2.4e9        # Hz, used only to derive Doppler from speed

# Logical subcarrier indices (-32..31).  Occupied = +-1..26, pilots at +-7, +-21.
PILOT_BINS_LOGICAL = np.array([-21, -7, 7, 21])
_occupied = [k for k in range(-26, 27) if k != 0]
DATA_BINS_LOGICAL = np.array([k for k in _occupied if k not in set(PILOT_BINS_LOGICAL.tolist())])
OCCUPIED_BINS_LOGICAL = np.array(_occupied)

# FFT-order positions (numpy fft layout: bin k at index k mod 64)
DATA_BINS = DATA_BINS_LOGICAL % N_FFT
PILOT_BINS = PILOT_BINS_LOGICAL % N_FFT
OCCUPIED_BINS = OCCUPIED_BINS_LOGICAL % N_FFT

N_DATA = len(DATA_BINS)     # 48
N_PILOT = len(PILOT_BINS)   # 4
N_OCCUPIED = len(OCCUPIED_BINS)  # 52

# Pilot values, identical for every transmitter (BPSK, unit power).
# Ordered to match PILOT_BINS_LOGICAL.
PILOT_VALUES = np.array([1.0, 1.0, 1.0, -1.0], dtype=complex)

# Short training sequence: 10 repetitions of a 16-sample period.  Each role
# transmits its own period so that the superposed preamble carries energy from
# both channels instead of fading as a single coherent sum.  Periods are built
# from unit-magnitude QPSK tones on logical bins +-{4,8,...,24}; tones on
# multiples of 4 make every 64-sample window 16-periodic with empty null bins
# and no DC.  Phase patterns chosen offline for minimal circular
# cross-correlation (exactly orthogonal at lag 0, max 0.375 at other lags).
STS_REPS = 10
STS_PERIOD = 16
STS_LEN = STS_REPS * STS_PERIOD     # 160 samples
STS_TONE_BINS_LOGICAL = np.array([-24, -20, -16, -12, -8, -4, 4, 8, 12, 16, 20, 24])
_STS_PHASES_A = np.array([2, 0, 1, 2, 0, 3, 0, 2, 1, 1, 0, 2])
_STS_PHASES_B = np.array([3, 3, 0, 2, 0, 0, 0, 0, 0, 3, 2, 3])


def _sts_period(phases: np.ndarray) -> np.ndarray:
    grid = np.zeros(N_FFT, dtype=complex)
    grid[STS_TONE_BINS_LOGICAL % N_FFT] = np.exp(1j * np.pi / 2 * phases)
    # sqrt(64/12) scales the 12 unit tones to unit-RMS time samples
    x = np.fft.ifft(grid, norm="ortho") * np.sqrt(N_FFT / len(STS_TONE_BINS_LOGICAL))
    return x[:STS_PERIOD].copy()


STS_PERIOD_A = _sts_period(_STS_PHASES_A)
STS_PERIOD_B = _sts_period(_STS_PHASES_B)

# Occupied bins are boosted by sqrt(64/52) so each OFDM symbol has unit RMS
# in time; channel estimates absorb the factor, keeping unit constellations
# at the combiner output.
SUBCARRIER_SCALE = np.sqrt(N_FFT / N_OCCUPIED)

# Long training symbol: one BPSK value per occupied bin (pilots included),
# scaled so the time-domain symbol has unit RMS.  Sign pattern chosen offline
# for low peak-to-average power (3.3 dB).
_LTS_SIGN_STR = "-++-++++---+++++-+--+-+++--+-------+++-+-+++----+-+-"
LTS_SIGNS = np.array([1.0 if c == "+" else -1.0 for c in _LTS_SIGN_STR])
LTS_VALUES = LTS_SIGNS * SUBCARRIER_SCALE
N_LTS_SYMBOLS = 2

# Frame layout (in samples): STS, then 2 LTS symbols, then header + payload
# OFDM symbols, all with cyclic prefix.
PREAMBLE_LEN = STS_LEN + N_LTS_SYMBOLS * SYMBOL_LEN   # 320

HEADER_BYTES = 24
N_HEADER_SYMBOLS = 2        # header always QPSK: 24*8 / (2*48) = 2
PAYLOAD_CRC_BYTES = 4
MAX_PAYLOAD_BYTES = 4096    # cap keeps frames bounded; raises beyond this

# Reference operating point: a unit-RMS waveform attenuated by the 53 dB
# inherent loss lands 40 dB above the noise floor.
REF_PATH_LOSS_DB = 53.0
REF_SNR_DB = 40.0
NOISE_FLOOR = 10.0 ** (-(REF_PATH_LOSS_DB + REF_SNR_DB) / 10.0)   # 1e-9.3

DEFAULT_LO_RANGE_HZ = 2000.0        # LO offsets drawn uniform in +-this

assert len(_LTS_SIGN_STR) == N_OCCUPIED
assert N_DATA == 48 and N_PILOT == 4
assert HEADER_BYTES * 8 == N_HEADER_SYMBOLS * 2 * N_DATA
assert abs(np.mean(np.abs(STS_PERIOD_A) ** 2) - 1.0) < 1e-12
assert abs(np.mean(np.abs(STS_PERIOD_B) ** 2) - 1.0) < 1e-12
assert abs(np.vdot(np.exp(1j * np.pi / 2 * _STS_PHASES_A),
                   np.exp(1j * np.pi / 2 * _STS_PHASES_B))) < 1e-9


def frame_len(n_payload_symbols: int) -> int:
    """Total frame length in samples for the given payload symbol count."""
    return PREAMBLE_LEN + (N_HEADER_SYMBOLS + n_payload_symbols) * SYMBOL_LEN


def snr_db_for_path_loss(path_loss_db: float, ref_snr_db: float = REF_SNR_DB) -> float:
    """Mean receive SNR of a unit-RMS waveform after the given path loss."""
    return ref_snr_db - (path_loss_db - REF_PATH_LOSS_DB)

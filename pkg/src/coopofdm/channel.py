"""Emulated radio links: path loss, fading, LO offsets, noise.

Links are modeled the way a bench channel emulator presents them: a fixed
inherent path loss plus programmable attenuation per link, a tapped-delay
fading process, and additive receiver noise at a fixed floor.  Transmit
waveforms are unit RMS by convention, so a link with path loss PL dB lands at
SNR = 40 - (PL - 53) dB against the fixed noise floor.

Fading kinds:

    awgn      unity gain, no fading
    flat      single Rayleigh tap, CN(0,1)
    tdl15ns   exponential power-delay profile on a 10 ns synthesis grid
              (16 taps, 15 ns RMS delay spread), resampled to the 100 ns
              sample grid via band-limited (sinc) interpolation

Tap sets have unit mean total power; no per-draw renormalization, so
instantaneous power is Rayleigh-distributed as it should be.  Packet-to-packet
time evolution is first-order Gauss-Markov with correlation J0(2*pi*fd*dt),
the Jakes autocorrelation at Doppler fd.

Every node owns a clock with an LO offset; a link's carrier frequency offset
is tx minus rx.  Offsets are applied as a time-domain rotation indexed by
global sample time so multi-transmitter superpositions stay coherent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import j0

from . import params as P

SPEED_OF_LIGHT = 299792458.0

# tdl15ns synthesis grid: 16 taps, 10 ns apart, exponential PDP with 15 ns
# time constant, unit total mean power.
_TDL_GRID_NS = 10.0
_TDL_N_TAPS = 16
_TDL_DELAYS_NS = np.arange(_TDL_N_TAPS) * _TDL_GRID_NS
_TDL_POWERS = np.exp(-_TDL_DELAYS_NS / 15.0)
_TDL_POWERS = _TDL_POWERS / _TDL_POWERS.sum()
# sampled-impulse-response span: taps at sample offsets -3..+5 catch the sinc
# tails to < 1e-3 of total power
_FIR_LO, _FIR_HI = -3, 5


def doppler_hz(speed_kmh: float, carrier_hz: float = P.CARRIER_FREQ) -> float:
    return speed_kmh / 3.6 * carrier_hz / SPEED_OF_LIGHT


DEFAULT_DOPPLER_HZ = doppler_hz(1.2)    # pedestrian stirring, ~2.67 Hz


@dataclass(frozen=True)
class FadingSpec:
    kind: str = "flat"                  # awgn | flat | tdl15ns
    doppler: float = DEFAULT_DOPPLER_HZ

    def __post_init__(self):
        if self.kind not in ("awgn", "flat", "tdl15ns"):
            raise ValueError(f"unknown fading kind {self.kind!r}")


@dataclass
class FadingState:
    """Synthesis-grid tap gains plus the sample-rate impulse response."""
    gains: np.ndarray
    fir: np.ndarray
    origin: int         # fir index corresponding to zero delay


def _complex_normal(rng: np.random.Generator, scale2, size=None) -> np.ndarray:
    """CN(0, scale2) samples; scale2 is the total (two-dim) variance.

    Shape follows size when given, else the shape of scale2.
    """
    shape = (size,) if isinstance(size, int) else size
    if shape is None:
        shape = np.shape(scale2)
    n = int(np.prod(shape)) if shape else 1
    z = rng.standard_normal((n, 2)).view(np.complex128)[:, 0].reshape(shape)
    return np.sqrt(np.asarray(scale2) / 2.0) * z


def _tdl_fir(gains: np.ndarray, sample_rate: float) -> np.ndarray:
    n = np.arange(_FIR_LO, _FIR_HI + 1)
    frac = _TDL_DELAYS_NS * 1e-9 * sample_rate     # delays in samples
    return np.sinc(n[:, None] - frac[None, :]) @ gains


def sample_fading(spec: FadingSpec, rng: np.random.Generator,
                  sample_rate: float = P.SAMPLE_RATE) -> FadingState:
    """Draw a fresh fading realization.

    awgn burns one draw so that seed-matched runs differing only in one
    link's fading kind keep every other link's realizations identical.
    """
    if spec.kind == "awgn":
        _ = _complex_normal(rng, 1.0, size=1)
        return FadingState(np.ones(1, complex), np.ones(1, complex), 0)
    if spec.kind == "flat":
        g = _complex_normal(rng, 1.0, size=1)
        return FadingState(g, g.copy(), 0)
    gains = _complex_normal(rng, _TDL_POWERS)
    return FadingState(gains, _tdl_fir(gains, sample_rate), -_FIR_LO)


def evolve_fading(state: FadingState, spec: FadingSpec, dt: float,
                  rng: np.random.Generator,
                  sample_rate: float = P.SAMPLE_RATE) -> FadingState:
    """Advance a realization by dt seconds (Gauss-Markov, Jakes correlation).

    Draws innovation even for awgn so stream alignment is draw-count stable.
    """
    rho = float(j0(2 * np.pi * spec.doppler * dt))
    if spec.kind == "awgn":
        _ = _complex_normal(rng, 1.0, size=1)
        return state
    powers = _TDL_POWERS if spec.kind == "tdl15ns" else np.ones(1)
    innov = _complex_normal(rng, powers)
    gains = rho * state.gains + np.sqrt(max(0.0, 1 - rho * rho)) * innov
    if spec.kind == "flat":
        return FadingState(gains, gains.copy(), 0)
    return FadingState(gains, _tdl_fir(gains, sample_rate), -_FIR_LO)


@dataclass
class NodeClock:
    lo_offset_hz: float = 0.0


@dataclass
class Link:
    """One directed radio link, quasi-static within an exchange."""
    path_loss_db: float
    spec: FadingSpec
    tx_clock: NodeClock
    rx_clock: NodeClock
    state: FadingState = field(default_factory=lambda: FadingState(
        np.ones(1, complex), np.ones(1, complex), 0))

    @property
    def cfo_hz(self) -> float:
        return self.tx_clock.lo_offset_hz - self.rx_clock.lo_offset_hz

    @property
    def gain(self) -> float:
        return 10.0 ** (-self.path_loss_db / 20.0)


def apply_cfo(samples: np.ndarray, freq_hz: float,
              sample_rate: float = P.SAMPLE_RATE,
              start_phase: float = 0.0) -> tuple[np.ndarray, float]:
    """Rotate samples by a frequency offset; returns (rotated, end phase).

    The end phase lets a caller keep the rotation continuous across
    consecutive segments.
    """
    n = np.arange(len(samples))
    phase = start_phase + 2 * np.pi * freq_hz / sample_rate * n
    end = (start_phase + 2 * np.pi * freq_hz / sample_rate * len(samples)) % (2 * np.pi)
    return samples * np.exp(1j * phase), end


@dataclass
class Transmission:
    samples: np.ndarray
    start: int          # global sample index of the first sample
    link: Link


def apply_link(transmissions: list[Transmission], span_start: int, span_len: int,
               noise_floor: float, rng: np.random.Generator,
               sample_rate: float = P.SAMPLE_RATE) -> np.ndarray:
    """Render what one receiver hears over a global-time span.

    Each transmission is convolved with its link's sampled impulse response,
    scaled by the link path loss, rotated by the link CFO (phase indexed by
    global time so concurrent transmitters stay mutually coherent), and
    overlap-added into the span.  Receiver noise CN(0, noise_floor) covers
    the whole span.
    """
    y = _complex_normal(rng, noise_floor, size=span_len)
    for tx in transmissions:
        link = tx.link
        conv = np.convolve(tx.samples, link.state.fir) * link.gain
        g0 = tx.start - link.state.origin          # global index of conv[0]
        if link.cfo_hz != 0.0:
            idx = g0 + np.arange(len(conv))
            conv = conv * np.exp(2j * np.pi * link.cfo_hz / sample_rate * idx)
        a = max(g0, span_start)
        b = min(g0 + len(conv), span_start + span_len)
        if a < b:
            y[a - span_start:b - span_start] += conv[a - g0:b - g0]
    return y

"""Synchronization and estimation: packet detection, carrier-frequency-offset
estimators, channel estimation, pilot phase tracking.

The coarse CFO estimator exploits the 16-sample periodicity of the short
preamble: with r[n + L] = r[n] * exp(j*2*pi*df*L/fs) the lag-L autocorrelation

    z = sum conj(r[n]) * r[n + L]

has phase 2*pi*df*L/fs, giving df = fs/(2*pi*L) * arg(z), unambiguous within
+-fs/(2L) = +-312.5 kHz.  Its error floor (hundreds of Hz at practical SNR)
is what the pilot-based residual estimator cleans up afterwards: the phase of
the final symbol's pilots, referenced to the channel estimate, divided by the
elapsed time.  That single-shot ratio wraps beyond +-1/(2T); callers that can
supply a per-symbol phase slope get the wrap resolved and flagged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import params as P


@dataclass
class DetectionResult:
    detected: bool
    start_index: int = -1
    rx_power_db: float = float("nan")


@dataclass
class CfoEstimate:
    freq_hz: float
    quality_db: float = float("nan")
    ambiguous: bool = False


def _template_metrics(samples: np.ndarray, starts: np.ndarray) -> np.ndarray:
    """Noncoherent per-period preamble correlation at many candidate starts.

    Summing |correlation| per 16-sample period keeps the metric robust to
    channel phase and CFO; both roles' templates contribute so the metric
    peaks at the true start whichever transmitters are active.
    """
    # (n_cand, 10, 16) windows via gather; n_cand is tiny so this stays cheap
    idx = (starts[:, None] + np.arange(P.STS_LEN)[None, :])
    reps = samples[idx].reshape(len(starts), P.STS_REPS, P.STS_PERIOD)
    m = np.abs(reps @ np.conj(P.STS_PERIOD_A)).sum(axis=1)
    m += np.abs(reps @ np.conj(P.STS_PERIOD_B)).sum(axis=1)
    return m


def detect_packet(samples: np.ndarray, noise_floor: float,
                  margin_db: float = 6.0) -> DetectionResult:
    """Energy detection plus template timing refinement.

    A 16-sample sliding window crossing noise_floor * 10^(margin_db/10)
    arms the detector; the start index is then refined by correlating both
    roles' preamble templates over +-some samples around the crossing.
    Reported rx_power_db is measured over the long-training region.
    """
    n = len(samples)
    w = P.STS_PERIOD
    if n < P.PREAMBLE_LEN:
        return DetectionResult(False)
    power = np.abs(samples) ** 2
    csum = np.concatenate([[0.0], np.cumsum(power)])
    win = (csum[w:] - csum[:-w]) / w
    threshold = noise_floor * 10.0 ** (margin_db / 10.0)
    above = np.nonzero(win > threshold)[0]
    if above.size == 0:
        return DetectionResult(False)
    crossing = int(above[0])

    lo = max(0, crossing - 8)
    hi = min(n - P.PREAMBLE_LEN, crossing + 24)
    if hi < lo:
        return DetectionResult(False)
    starts = np.arange(lo, hi + 1)
    best_d = int(starts[np.argmax(_template_metrics(samples, starts))])
    lts = samples[best_d + P.STS_LEN: best_d + P.PREAMBLE_LEN]
    rx_power_db = 10.0 * np.log10(np.mean(np.abs(lts) ** 2) + 1e-300)
    return DetectionResult(True, best_d, rx_power_db)


def estimate_cfo_coarse(samples: np.ndarray, period: int = P.STS_PERIOD,
                        sample_rate: float = P.SAMPLE_RATE) -> CfoEstimate:
    """Lag-`period` autocorrelation phase over the given preamble slice."""
    r = np.asarray(samples)
    if len(r) < 2 * period:
        raise ValueError("need at least two periods")
    z = np.vdot(r[:-period], r[period:])
    energy = 0.5 * (np.sum(np.abs(r[:-period]) ** 2) + np.sum(np.abs(r[period:]) ** 2))
    freq = sample_rate / (2 * np.pi * period) * np.angle(z)
    denom = max(energy - np.abs(z), 1e-300)
    quality = 10.0 * np.log10(np.abs(z) / denom + 1e-300)
    return CfoEstimate(float(freq), float(quality))


def estimate_channels(lts_grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-subcarrier channel estimates for both roles from the two LTS.

    Role A transmits (+L, +L) and role B (+L, -L), so

        h_a = (Y1 + Y2) / (2 L),   h_b = (Y1 - Y2) / (2 L).

    The reference is the +-1 sign pattern; the occupied-bin power boost
    stays inside the estimates so combined data symbols come out at unit
    constellation scale.  Returns full 64-bin vectors, zero off-plan.
    """
    y1, y2 = np.atleast_2d(lts_grid)[0], np.atleast_2d(lts_grid)[1]
    h_a = np.zeros(P.N_FFT, dtype=complex)
    h_b = np.zeros(P.N_FFT, dtype=complex)
    occ = P.OCCUPIED_BINS
    h_a[occ] = (y1[occ] + y2[occ]) / (2.0 * P.LTS_SIGNS)
    h_b[occ] = (y1[occ] - y2[occ]) / (2.0 * P.LTS_SIGNS)
    return h_a, h_b


def track_pilot_phase(pilots: np.ndarray, ref: np.ndarray) -> float:
    """Common phase of one symbol's pilots against their reference."""
    return float(np.angle(np.vdot(ref, pilots)))


def track_pilot_phases(pilot_rows: np.ndarray, ref: np.ndarray,
                       noise_floor: float, smooth: int = 5,
                       ref_scale: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-symbol common phase across a packet, gated and unwrapped.

    pilot_rows is (n_symbols, 4); ref is the expected pilot observation
    (channel estimate times pilot values), one row shared by every symbol or
    one row per symbol.  Symbols whose pilot correlation is too weak to
    trust are bridged by linear interpolation of the unwrapped phase.
    ref_scale, when given, is the energy the reference would have if the
    underlying channels combined constructively; a reference far below it
    (two streams superposing near anti-phase) is rejected outright, since
    its projection is noise-dominated no matter how it compares to the
    thermal floor.  Returns (phase per symbol, trust weight per symbol);
    all-zero phases if nothing is trustworthy.
    """
    n = pilot_rows.shape[0]
    refs = np.atleast_2d(np.asarray(ref))
    if refs.shape[0] == 1:
        refs = np.broadcast_to(refs, pilot_rows.shape)
    z = np.einsum("ij,ij->i", pilot_rows, np.conj(refs))
    ref_energy = np.sum(np.abs(refs) ** 2, axis=1)
    gate = np.maximum(0.25 * ref_energy, 4.0 * np.sqrt(ref_energy * noise_floor))
    good = (ref_energy > 0.0) & (np.abs(z) > gate)
    if ref_scale is not None:
        good &= ref_energy > 0.05 * ref_scale
    if not np.any(good):
        return np.zeros(n), np.zeros(n)
    idx = np.arange(n)
    theta_good = np.unwrap(np.angle(z[good]))
    theta = np.interp(idx, idx[good], theta_good)
    if smooth > 1 and n > 1:
        k = min(smooth, n)
        kernel = np.ones(k) / k
        # normalized 'same' convolution so edges are plain averages
        theta = np.convolve(theta, kernel, mode="same") / np.convolve(
            np.ones(n), kernel, mode="same")
    weights = np.where(good, np.abs(z) / np.maximum(ref_energy, 1e-300), 0.0)
    return theta, weights


def estimate_cfo_residual(final_pilots: np.ndarray, ref: np.ndarray,
                          duration: float,
                          slope_hint_hz: float | None = None) -> CfoEstimate:
    """Residual CFO from the final symbol's pilot phase over the packet.

    The single-shot ratio phase/(2*pi*duration) is unambiguous only within
    +-1/(2*duration) and is deliberately reported at face value: a node that
    trusts it can pre-correct by a whole cycle-per-packet too much or too
    little, which is a real failure mode this simulator must keep.  A slope
    hint (Hz, e.g. from per-symbol tracking) only flags estimates whose
    phase appears to have wrapped.
    """
    phase = track_pilot_phase(final_pilots, ref)
    raw = phase / (2 * np.pi * duration)
    if slope_hint_hz is None:
        return CfoEstimate(float(raw))
    wraps = np.round((slope_hint_hz - raw) * duration)
    return CfoEstimate(float(raw), ambiguous=bool(wraps != 0))

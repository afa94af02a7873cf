"""Synchronization and estimation tests.

Coarse CFO statistics are checked against the lag-16 autocorrelation
identity (exact when noiseless), then against frozen Monte Carlo values
under seeded noise.  Channel-estimate MSE is compared with the analytic
noise-division level.  Residual CFO behavior is pinned by construction:
a known pilot phase over a known duration.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coopofdm import params as P
from coopofdm.channel import apply_cfo
from coopofdm.estimators import (
    CfoEstimate,
    detect_packet,
    estimate_cfo_coarse,
    estimate_cfo_residual,
    estimate_channels,
    track_pilot_phase,
    track_pilot_phases,
)
from coopofdm.framing import Frame, Role, build_frame_waveform
from coopofdm.modem import QPSK
from coopofdm.ofdm import Baseband
from coopofdm.receiver import ReceiverConfig, receive

CFO_HALF_RANGE = P.SAMPLE_RATE / (2 * P.STS_PERIOD)   # 312.5 kHz


def sts_samples(reps: int = P.STS_REPS) -> np.ndarray:
    return np.tile(P.STS_PERIOD_A, reps)


def noisy_sts_batch(n_trials: int, snr_db: float, freq_hz: float,
                    rng: np.random.Generator) -> np.ndarray:
    """(n_trials, STS_LEN) matrix of unit-power STS at an offset, plus noise."""
    base, _ = apply_cfo(sts_samples(), freq_hz)
    sigma = 10.0 ** (-snr_db / 20.0)
    noise = rng.standard_normal((n_trials, base.size, 2)) @ np.array([1, 1j])
    return base[None, :] + sigma * np.sqrt(0.5) * noise


def coarse_batch(x: np.ndarray) -> np.ndarray:
    """Vectorized lag-16 estimate per row."""
    L = P.STS_PERIOD
    z = np.einsum("ij,ij->i", np.conj(x[:, :-L]), x[:, L:])
    return P.SAMPLE_RATE / (2 * np.pi * L) * np.angle(z)


# ---------------------------------------------------------------- detection

def test_detection_false_alarm_rate_on_pure_noise():
    rng = np.random.default_rng(101)
    n = 100_000
    sigma = np.sqrt(P.NOISE_FLOOR / 2.0)
    noise = sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    assert not detect_packet(noise, P.NOISE_FLOOR).detected
    # arming stage directly: fraction of 16-sample windows over the threshold
    power = np.abs(noise) ** 2
    csum = np.concatenate([[0.0], np.cumsum(power)])
    win = (csum[16:] - csum[:-16]) / 16.0
    fa = np.mean(win > P.NOISE_FLOOR * 10.0 ** 0.6)
    assert fa < 1e-4


def test_detection_start_index_within_two_samples():
    rng = np.random.default_rng(102)
    frame = Frame.make(bytes(64), QPSK)
    bb = build_frame_waveform(frame, Role.B)
    offset, snr_db = 5000, 30.0
    rms = np.sqrt(P.NOISE_FLOOR * 10.0 ** (snr_db / 10.0))
    n = offset + bb.samples.size + 400
    sigma = np.sqrt(P.NOISE_FLOOR / 2.0)
    stream = sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    stream[offset:offset + bb.samples.size] += rms * bb.samples
    det = detect_packet(stream, P.NOISE_FLOOR)
    assert det.detected
    assert offset - 2 <= det.start_index <= offset + 2
    assert abs(det.rx_power_db - 10 * np.log10(rms**2)) < 1.5


def test_detection_probability_monotone_in_snr():
    rng = np.random.default_rng(103)
    frame = Frame.make(bytes(8), QPSK)
    wave = build_frame_waveform(frame, Role.A).samples
    sigma = np.sqrt(P.NOISE_FLOOR / 2.0)
    offset, tail = 700, 200
    n = offset + wave.size + tail
    rates = []
    for snr_db in (-5.0, 0.0, 5.0, 10.0, 15.0, 20.0):
        rms = np.sqrt(P.NOISE_FLOOR * 10.0 ** (snr_db / 10.0))
        hits = 0
        for _ in range(300):
            stream = sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
            stream[offset:offset + wave.size] += rms * wave
            if detect_packet(stream, P.NOISE_FLOOR).detected:
                hits += 1
        rates.append(hits / 300.0)
    assert all(b >= a for a, b in zip(rates, rates[1:]))
    assert rates[0] < 0.01 and rates[-1] > 0.99


# ------------------------------------------------------------- coarse CFO

def test_coarse_exact_on_clean_preamble():
    for f in (-250e3, -3.05e2, 0.0, 305.0, 41e3, 250e3):
        x, _ = apply_cfo(sts_samples(), f)
        est = estimate_cfo_coarse(x)
        assert est.freq_hz == pytest.approx(f, abs=1e-6)


def test_coarse_range_edge_and_alias():
    near = 0.98 * CFO_HALF_RANGE
    for sign in (+1, -1):
        x, _ = apply_cfo(sts_samples(), sign * near)
        assert estimate_cfo_coarse(x).freq_hz == pytest.approx(sign * near, abs=1e-3)
    beyond = 1.2 * CFO_HALF_RANGE
    x, _ = apply_cfo(sts_samples(), beyond)
    est = estimate_cfo_coarse(x)
    assert est.freq_hz == pytest.approx(beyond - 2 * CFO_HALF_RANGE, abs=1e-3)
    assert est.freq_hz < 0


def test_coarse_rejects_short_input():
    with pytest.raises(ValueError):
        estimate_cfo_coarse(np.ones(2 * P.STS_PERIOD - 1, dtype=complex))


def test_coarse_matches_single_shot_wrapper():
    rng = np.random.default_rng(104)
    x = noisy_sts_batch(1, 20.0, 305.0, rng)
    assert estimate_cfo_coarse(x[0]).freq_hz == pytest.approx(coarse_batch(x)[0])


def test_coarse_bias_below_5hz_at_30db():
    rng = np.random.default_rng(105)
    errs = coarse_batch(noisy_sts_batch(10_000, 30.0, 305.0, rng)) - 305.0
    assert abs(np.mean(errs)) < 5.0


def test_coarse_unbiased_and_spread_shrinks_with_snr():
    rng = np.random.default_rng(106)
    trials = {5.0: 200_000, 10.0: 50_000, 20.0: 10_000, 30.0: 10_000}
    spreads = []
    for snr_db, n in trials.items():
        chunks = [20_000] * (n // 20_000) + ([n % 20_000] if n % 20_000 else [])
        errs = np.concatenate([
            coarse_batch(noisy_sts_batch(chunk, snr_db, 305.0, rng)) - 305.0
            for chunk in chunks])
        assert abs(np.mean(errs)) < 10.0, f"bias at {snr_db} dB"
        spreads.append(2.0 * np.std(errs))
    assert all(b < a for a, b in zip(spreads, spreads[1:]))


def test_coarse_errors_look_gaussian_at_30db():
    scipy_stats = pytest.importorskip("scipy.stats")
    rng = np.random.default_rng(107)
    errs = coarse_batch(noisy_sts_batch(10_000, 30.0, 305.0, rng)) - 305.0
    z = (errs - np.mean(errs)) / np.std(errs)
    assert scipy_stats.kstest(z, "norm").pvalue > 0.01


@settings(max_examples=40, deadline=None)
@given(st.floats(min_value=-0.9, max_value=0.9))
def test_coarse_recovers_any_in_range_offset(frac):
    f = frac * CFO_HALF_RANGE
    x, _ = apply_cfo(sts_samples(), f)
    assert estimate_cfo_coarse(x).freq_hz == pytest.approx(f, abs=1e-3)


# ------------------------------------------------------- channel estimates

def random_channels(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    def one():
        h = np.zeros(P.N_FFT, dtype=complex)
        h[P.OCCUPIED_BINS] = (rng.standard_normal(P.N_OCCUPIED)
                              + 1j * rng.standard_normal(P.N_OCCUPIED)) / np.sqrt(2)
        return h
    return one(), one()


def lts_observation(h_a: np.ndarray, h_b: np.ndarray) -> np.ndarray:
    """Noiseless two-symbol LTS grid: role A sends (+L, +L), role B (+L, -L)."""
    y1 = (h_a + h_b) * 0.0j
    y1[P.OCCUPIED_BINS] = (h_a + h_b)[P.OCCUPIED_BINS] * P.LTS_VALUES
    y2 = (h_a + h_b) * 0.0j
    y2[P.OCCUPIED_BINS] = (h_a - h_b)[P.OCCUPIED_BINS] * P.LTS_VALUES
    return np.stack([y1, y2])


def test_channel_estimates_exact_when_noiseless():
    rng = np.random.default_rng(108)
    for _ in range(50):
        h_a, h_b = random_channels(rng)
        e_a, e_b = estimate_channels(lts_observation(h_a, h_b))
        # the occupied-bin boost stays inside the estimate by convention
        assert np.max(np.abs(e_a - h_a * P.SUBCARRIER_SCALE)) < 1e-10
        assert np.max(np.abs(e_b - h_b * P.SUBCARRIER_SCALE)) < 1e-10
        off = np.setdiff1d(np.arange(P.N_FFT), P.OCCUPIED_BINS)
        assert np.all(e_a[off] == 0) and np.all(e_b[off] == 0)


def test_channel_estimate_mse_matches_noise_division():
    rng = np.random.default_rng(109)
    snr_db, n_trials = 20.0, 4000
    sig_power = float(np.mean(np.abs(P.LTS_VALUES) ** 2))   # flat unit channel
    sigma2 = sig_power * 10.0 ** (-snr_db / 10.0)
    h = np.zeros(P.N_FFT, dtype=complex)
    h[P.OCCUPIED_BINS] = 1.0
    clean = lts_observation(h, h)
    sq = []
    for _ in range(n_trials):
        noise = np.sqrt(sigma2 / 2) * (
            rng.standard_normal((2, P.N_FFT)) + 1j * rng.standard_normal((2, P.N_FFT)))
        e_a, _ = estimate_channels(clean + noise)
        err = e_a[P.OCCUPIED_BINS] - P.SUBCARRIER_SCALE
        sq.append(np.abs(err) ** 2)
    mse = float(np.mean(sq))
    expected = sigma2 / 2.0      # (n1 + n2) / (2 * sign): variance halves
    m = n_trials * P.N_OCCUPIED
    assert abs(mse / expected - 1.0) < 3.0 / np.sqrt(m)


# --------------------------------------------------------- pilot tracking

def test_track_single_symbol_phase_is_exact():
    rng = np.random.default_rng(110)
    ref = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    for phi in (-2.5, -0.3, 0.0, 1.0, 3.0):
        got = track_pilot_phase(ref * np.exp(1j * phi), ref)
        assert got == pytest.approx(phi, abs=1e-12)


def test_tracked_phase_slope_matches_cfo():
    f, n_sym = 100.0, 118
    ref = (1.0 + 0.2j) * P.PILOT_VALUES
    k = np.arange(n_sym)
    slope_true = 2 * np.pi * f * P.SYMBOL_DURATION
    rows = ref[None, :] * np.exp(1j * slope_true * k)[:, None]
    theta, weights = track_pilot_phases(rows, ref, P.NOISE_FLOOR)
    assert np.all(weights > 0)
    fit = np.polyfit(k, theta, 1)[0]
    assert abs(fit - slope_true) / slope_true < 0.01


def test_tracking_gates_out_collapsed_reference():
    # reference energy far below the constructive-combination scale is junk
    ref = 1e-3 * P.PILOT_VALUES
    rows = np.tile(ref, (20, 1))
    theta, weights = track_pilot_phases(rows, ref, P.NOISE_FLOOR,
                                        ref_scale=4.0)
    assert np.all(weights == 0) and np.all(theta == 0)


# ----------------------------------------------------------- residual CFO

def test_residual_reads_phase_over_duration():
    ref = P.PILOT_VALUES * (0.8 - 0.1j)
    duration = 500e-6
    pilots = ref * np.exp(1j * 0.1 * np.pi)
    est = estimate_cfo_residual(pilots, ref, duration)
    assert est.freq_hz == pytest.approx(100.0, abs=1e-9)
    assert not est.ambiguous


def test_residual_flags_wrapped_phase_via_slope_hint():
    ref = P.PILOT_VALUES.astype(complex)
    duration = 500e-6
    pilots = ref * np.exp(1j * 0.1 * np.pi)
    hinted = estimate_cfo_residual(pilots, ref, duration, slope_hint_hz=100.0)
    assert not hinted.ambiguous
    wrapped = estimate_cfo_residual(pilots, ref, duration, slope_hint_hz=2100.0)
    assert wrapped.ambiguous
    assert wrapped.freq_hz == pytest.approx(100.0, abs=1e-9)  # face value kept


def test_residual_spread_halves_when_duration_doubles():
    rng = np.random.default_rng(111)
    ref = P.PILOT_VALUES.astype(complex)
    n, sigma = 10_000, 0.05
    def spread(duration):
        noise = sigma * np.sqrt(0.5) * (
            rng.standard_normal((n, 4)) + 1j * rng.standard_normal((n, 4)))
        z = np.einsum("j,ij->i", np.conj(ref), ref[None, :] + noise)
        return 2.0 * np.std(np.angle(z) / (2 * np.pi * duration))
    ratio = spread(1e-3) / spread(0.5e-3)
    assert 0.35 < ratio < 0.65


# --------------------------------------- tracking effect on the receiver

def rx_stream(frame: Frame, snr_db: float, cfo_hz: float,
              rng: np.random.Generator, lead: int = 600) -> Baseband:
    wave = build_frame_waveform(frame, Role.B).samples
    shifted, _ = apply_cfo(wave, cfo_hz)
    rms = np.sqrt(P.NOISE_FLOOR * 10.0 ** (snr_db / 10.0))
    n = lead + wave.size + 200
    sigma = np.sqrt(P.NOISE_FLOOR / 2.0)
    stream = sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    stream[lead:lead + wave.size] += rms * shifted
    return Baseband(stream)


def test_pilot_tracking_strictly_reduces_evm():
    rng = np.random.default_rng(112)
    payload = rng.integers(0, 256, 1412, dtype=np.uint8).tobytes()
    frame = Frame.make(payload, QPSK)
    on, off = [], []
    for _ in range(10):
        bb = rx_stream(frame, 30.0, 100.0, rng)
        r_on = receive(bb, ReceiverConfig(track_pilots=True, collect_evm=True),
                       expected_payload=payload)
        r_off = receive(bb, ReceiverConfig(track_pilots=False, collect_evm=True),
                        expected_payload=payload)
        on.append(np.mean(10 ** (r_on.evm_db / 10)))
        off.append(np.mean(10 ** (r_off.evm_db / 10)))
    assert np.mean(on) < np.mean(off)


def test_tracking_holds_evm_flat_across_packet():
    rng = np.random.default_rng(113)
    payload = rng.integers(0, 256, 1412, dtype=np.uint8).tobytes()
    frame = Frame.make(payload, QPSK)
    first, last = [], []
    for _ in range(40):
        bb = rx_stream(frame, 25.0, 300.0, rng)
        r = receive(bb, ReceiverConfig(collect_evm=True), expected_payload=payload)
        assert r.evm_db.size == 118
        first.append(10 ** (r.evm_db[0] / 10))
        last.append(10 ** (r.evm_db[-1] / 10))
    gap = abs(10 * np.log10(np.mean(last) / np.mean(first)))
    assert gap < 1.0

"""Monte Carlo trial machinery: topologies, per-point packet loops, metrics.

Determinism contract: a point's results depend only on (master_seed,
point_id) and the packet count, never on worker count or scheduling.  Work
is split into fixed-size shards; shard s draws every random quantity from
np.random.default_rng([master_seed, point_id, s]) in a fixed order, and
shard results merge associatively in shard order.

Per-packet draw order inside a shard: three LO offsets (always drawn, even
when the range is zero, to keep streams aligned between configurations),
fading states for sd, sr, rd (again always all three), payload bytes, then
receiver noise inside the exchange.

Fading modes: "iid" draws fresh states per packet (statistically independent
packets, the right setting for tolerance-checked measurements); "evolve"
advances each link's state by the inter-packet interval with Gauss-Markov
correlation (physically continuous, but packets are strongly correlated at
pedestrian Doppler, so confidence intervals shrink far slower than 1/sqrt(n)).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from multiprocessing import get_context

import numpy as np

from . import params as P
from .channel import (DEFAULT_DOPPLER_HZ, FadingSpec, Link, NodeClock,
                      evolve_fading, sample_fading)
from .framing import Frame, build_frame_waveform, payload_symbol_count
from .modem import MODULATIONS
from .nodes import ExchangeConfig, run_exchange
from .ofdm import Baseband
from .receiver import Outcome, ReceiverConfig, receive
from .stbc import Role


class EmptyTrialError(ValueError):
    pass


class NoEligiblePacketsError(ValueError):
    pass


class InvalidPositionError(ValueError):
    pass


LINEAR_SD_DISTANCE_M = 10.4
PATH_LOSS_REF_M = 1.44
PATH_LOSS_EXPONENT = 2.1


def path_loss_db(distance_m: float) -> float:
    """Distance to path loss: 53 dB at 1.44 m, exponent 2.1."""
    return P.REF_PATH_LOSS_DB + 10.0 * PATH_LOSS_EXPONENT * np.log10(
        distance_m / PATH_LOSS_REF_M)


@dataclass(frozen=True)
class Topology:
    kind: str
    sd_db: float
    sr_db: float
    rd_db: float
    atten_db: float = float("nan")
    relay_pos_m: float = float("nan")


def make_topology(kind: str, *, atten_db: float | None = None,
                  relay_pos_m: float | None = None,
                  sd_db: float | None = None, sr_db: float | None = None,
                  rd_db: float | None = None) -> Topology:
    """Build one of the supported layouts.

    colocated: relay beside the source (S-R fixed at the 53 dB floor), the
    two long links both at 53 + atten_db.
    linear: relay on the S-D segment at relay_pos_m from the source, path
    loss by distance; S-D spans 10.4 m (71 dB).
    manual: explicit per-link losses.
    """
    if kind == "colocated":
        if atten_db is None:
            raise ValueError("colocated topology needs atten_db")
        far = P.REF_PATH_LOSS_DB + atten_db
        return Topology(kind, far, P.REF_PATH_LOSS_DB, far, atten_db=atten_db)
    if kind == "linear":
        if relay_pos_m is None:
            raise ValueError("linear topology needs relay_pos_m")
        if not 0.0 < relay_pos_m < LINEAR_SD_DISTANCE_M:
            raise InvalidPositionError(
                f"relay position {relay_pos_m} m outside (0, {LINEAR_SD_DISTANCE_M})")
        # distances below the reference clamp to it: path loss never < 53 dB
        d_sr = max(relay_pos_m, PATH_LOSS_REF_M)
        d_rd = max(LINEAR_SD_DISTANCE_M - relay_pos_m, PATH_LOSS_REF_M)
        return Topology(kind, path_loss_db(LINEAR_SD_DISTANCE_M),
                        path_loss_db(d_sr), path_loss_db(d_rd),
                        relay_pos_m=relay_pos_m)
    if kind == "manual":
        if sd_db is None or sr_db is None or rd_db is None:
            raise ValueError("manual topology needs sd_db, sr_db, rd_db")
        return Topology(kind, sd_db, sr_db, rd_db)
    raise ValueError(f"unknown topology kind {kind!r}")


@dataclass(frozen=True)
class PointConfig:
    """Everything one Monte Carlo point needs; hashable and picklable."""
    point_id: int
    scheme: str
    topology: Topology
    modulation: str = "qpsk"
    payload_bytes: int = 1412
    n_packets: int = 1000
    master_seed: int = 1
    fading: str = "flat"
    fading_mode: str = "iid"            # iid | evolve
    inter_packet_s: float = 0.010
    doppler_hz: float = DEFAULT_DOPPLER_HZ
    lo_range_hz: float = P.DEFAULT_LO_RANGE_HZ
    oracle_cfo: bool = False
    forced_offset_hz: float = 0.0
    relay_extra_delay_ns: float = 0.0
    collect_cfo_power: bool = False
    shard_size: int = 2048
    label: str = ""
    # per-link fading kind overrides, e.g. (("sr", "flat"), ("sd", "awgn"))
    fading_overrides: tuple[tuple[str, str], ...] = ()


@dataclass
class TrialResult:
    n_tx: int = 0
    n_good: int = 0
    n_no_rx: int = 0
    n_bad_hdr: int = 0
    n_bad_payload: int = 0
    b_error: int = 0
    b_total: int = 0
    relay_triggered: int = 0
    bit_error_hist: dict[int, int] = field(default_factory=dict)
    cfo_power: list[tuple[float, float]] = field(default_factory=list)

    def merge(self, other: "TrialResult") -> "TrialResult":
        self.n_tx += other.n_tx
        self.n_good += other.n_good
        self.n_no_rx += other.n_no_rx
        self.n_bad_hdr += other.n_bad_hdr
        self.n_bad_payload += other.n_bad_payload
        self.b_error += other.b_error
        self.b_total += other.b_total
        self.relay_triggered += other.relay_triggered
        for k, v in other.bit_error_hist.items():
            self.bit_error_hist[k] = self.bit_error_hist.get(k, 0) + v
        self.cfo_power.extend(other.cfo_power)
        return self


def shard_counts(n_packets: int, shard_size: int) -> list[int]:
    full, rem = divmod(n_packets, shard_size)
    return [shard_size] * full + ([rem] if rem else [])


def run_shard(cfg: PointConfig, shard_idx: int, n_packets: int) -> TrialResult:
    rng = np.random.default_rng([cfg.master_seed, cfg.point_id, shard_idx])
    overrides = dict(cfg.fading_overrides)
    specs = {k: FadingSpec(overrides.get(k, cfg.fading), cfg.doppler_hz)
             for k in ("sd", "sr", "rd")}
    mod = MODULATIONS[cfg.modulation]
    ex_cfg = ExchangeConfig(
        scheme=cfg.scheme,
        oracle_cfo=cfg.oracle_cfo,
        forced_offset_hz=cfg.forced_offset_hz,
        relay_extra_delay_ns=cfg.relay_extra_delay_ns,
    )
    res = TrialResult()
    states: dict[str, object] | None = None
    for pkt in range(n_packets):
        lo = rng.uniform(-1.0, 1.0, size=3) * cfg.lo_range_hz
        clocks = {"s": NodeClock(lo[0]), "r": NodeClock(lo[1]), "d": NodeClock(lo[2])}
        if cfg.fading_mode == "evolve" and states is not None:
            states = {k: evolve_fading(states[k], specs[k], cfg.inter_packet_s, rng)
                      for k in ("sd", "sr", "rd")}
        else:
            states = {k: sample_fading(specs[k], rng) for k in ("sd", "sr", "rd")}
        payload = rng.integers(0, 256, cfg.payload_bytes, dtype=np.uint8).tobytes()
        frame = Frame.make(payload, mod, seq_num=pkt % 65536)
        topo = cfg.topology
        links = {
            "sd": Link(topo.sd_db, specs["sd"], clocks["s"], clocks["d"], states["sd"]),
            "sr": Link(topo.sr_db, specs["sr"], clocks["s"], clocks["r"], states["sr"]),
            "rd": Link(topo.rd_db, specs["rd"], clocks["r"], clocks["d"], states["rd"]),
        }
        ex = run_exchange(frame, links, ex_cfg, rng)
        _accumulate(res, ex, cfg)
    return res


def _accumulate(res: TrialResult, ex, cfg: PointConfig) -> None:
    res.n_tx += 1
    out = ex.dest.outcome
    if out is Outcome.GOOD:
        res.n_good += 1
    elif out is Outcome.NO_RECEPTION:
        res.n_no_rx += 1
    elif out is Outcome.BAD_HEADER:
        res.n_bad_hdr += 1
    else:
        res.n_bad_payload += 1
    if out in (Outcome.GOOD, Outcome.BAD_PAYLOAD):
        res.b_total += ex.dest.bits_compared
        res.b_error += ex.dest.bit_errors
        k = ex.dest.bit_errors
        res.bit_error_hist[k] = res.bit_error_hist.get(k, 0) + 1
    if ex.relay_transmitted:
        res.relay_triggered += 1
    if cfg.collect_cfo_power and np.isfinite(ex.relay_cfo_err_hz):
        res.cfo_power.append((ex.relay.rx_power_db, ex.relay_cfo_err_hz))


def run_trial(cfg: PointConfig) -> TrialResult:
    """Run one point sequentially (shard loop inlined)."""
    res = TrialResult()
    for idx, count in enumerate(shard_counts(cfg.n_packets, cfg.shard_size)):
        res.merge(run_shard(cfg, idx, count))
    return res


def _shard_task(args):
    cfg, idx, count = args
    return run_shard(cfg, idx, count)


def run_points(cfgs: list[PointConfig], workers: int = 1) -> dict[int, TrialResult]:
    """Run many points, optionally with a process pool.

    Shards are the unit of parallelism and merge in fixed order, so results
    are identical for any worker count.
    """
    tasks = []
    for cfg in cfgs:
        for idx, count in enumerate(shard_counts(cfg.n_packets, cfg.shard_size)):
            tasks.append((cfg, idx, count))
    if workers <= 1:
        outputs = [_shard_task(t) for t in tasks]
    else:
        with get_context("spawn").Pool(workers) as pool:
            outputs = pool.map(_shard_task, tasks, chunksize=1)
    results: dict[int, TrialResult] = {}
    for (cfg, _idx, _count), out in zip(tasks, outputs):
        results.setdefault(cfg.point_id, TrialResult()).merge(out)
    return results


def compute_per(res: TrialResult) -> float:
    if res.n_tx == 0:
        raise EmptyTrialError("no packets transmitted")
    return 1.0 - res.n_good / res.n_tx


def compute_ber(res: TrialResult) -> float:
    if res.b_total == 0:
        raise NoEligiblePacketsError("no packets reached payload comparison")
    return res.b_error / res.b_total


def proportion_stderr(p: float, n: int) -> float:
    return float(np.sqrt(max(p * (1.0 - p), 0.0) / n)) if n else float("nan")


def bit_error_ccdf(res: TrialResult) -> tuple[np.ndarray, np.ndarray]:
    """P(bit errors >= k) over packets with counted payloads.

    Evaluated at every change point: each observed count, each observed
    count + 1, and zero.
    """
    if not res.bit_error_hist:
        raise NoEligiblePacketsError("no packets reached payload comparison")
    total = sum(res.bit_error_hist.values())
    observed = sorted(res.bit_error_hist)
    ks = sorted({0, *observed, *(k + 1 for k in observed)})
    counts = np.array([res.bit_error_hist[k] for k in observed], dtype=float)
    obs = np.array(observed, dtype=float)
    p = np.array([counts[obs >= k].sum() / total for k in ks])
    return np.array(ks), p


def cfo_error_power_hist(records: list[tuple[float, float]],
                         power_bin_db: float = 2.0,
                         err_bin_hz: float = 25.0
                         ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Joint histogram of (rx power, CFO estimation error), as probabilities.

    Returns (power_bin_centers, err_bin_centers, matrix[power, err]).
    """
    if not records:
        raise NoEligiblePacketsError("no estimation records collected")
    arr = np.asarray(records, dtype=float)
    power, err = arr[:, 0], arr[:, 1]

    def edges(values, width):
        lo = np.floor(values.min() / width) * width
        hi = np.ceil(values.max() / width) * width
        if hi <= lo:                    # all values on one grid line
            hi = lo + width
        return np.arange(lo, hi + width * 0.5, width)

    pe, ee = edges(power, power_bin_db), edges(err, err_bin_hz)
    h, _, _ = np.histogram2d(power, err, bins=[pe, ee])
    return (pe[:-1] + power_bin_db / 2.0, ee[:-1] + err_bin_hz / 2.0,
            h / arr.shape[0])


# ---------------------------------------------------------------------------
# estimator characterization (no packet exchange, direct Monte Carlo)

@dataclass(frozen=True)
class EstimatorPoint:
    point_id: int
    estimator: str              # coarse | residual
    snr_db: float
    cfo_hz: float
    n_est: int
    master_seed: int
    payload_bytes: int = 1412


@dataclass
class EstimatorResult:
    point: EstimatorPoint
    errors_hz: np.ndarray

    @property
    def mean_err_hz(self) -> float:
        return float(np.mean(self.errors_hz))

    @property
    def two_sigma_hz(self) -> float:
        return float(2.0 * np.std(self.errors_hz))

    @property
    def duration_s(self) -> float:
        if self.point.estimator == "coarse":
            return P.STS_LEN / P.SAMPLE_RATE
        n_pay = payload_symbol_count(self.point.payload_bytes, MODULATIONS["qpsk"])
        return (P.N_HEADER_SYMBOLS + n_pay) * P.SYMBOL_LEN / P.SAMPLE_RATE


def coarse_cfo_errors(point: EstimatorPoint, batch: int = 20000) -> np.ndarray:
    """Vectorized coarse estimator error samples on a noisy, offset preamble."""
    rng = np.random.default_rng([point.master_seed, point.point_id])
    n0 = 10.0 ** (-point.snr_db / 10.0)
    sts = np.tile(P.STS_PERIOD_A, P.STS_REPS)
    n = np.arange(P.STS_LEN)
    tx = sts * np.exp(2j * np.pi * point.cfo_hz / P.SAMPLE_RATE * n)
    out = np.empty(point.n_est)
    done = 0
    scale = P.SAMPLE_RATE / (2 * np.pi * P.STS_PERIOD)
    while done < point.n_est:
        m = min(batch, point.n_est - done)
        noise = np.sqrt(n0 / 2) * (rng.standard_normal((m, P.STS_LEN))
                                   + 1j * rng.standard_normal((m, P.STS_LEN)))
        r = tx[None, :] + noise
        z = np.einsum("ij,ij->i", np.conj(r[:, :-P.STS_PERIOD]), r[:, P.STS_PERIOD:])
        out[done:done + m] = scale * np.angle(z) - point.cfo_hz
        done += m
    return out


def residual_cfo_errors(point: EstimatorPoint) -> np.ndarray:
    """Total (coarse + residual) estimation error through the full receiver.

    One transmitter, no fading, known SNR; the packet-duration pilot stage
    dominates the error at the SNRs where packets decode.
    """
    rng = np.random.default_rng([point.master_seed, point.point_id])
    n0 = 10.0 ** (-point.snr_db / 10.0)
    rx_cfg = ReceiverConfig(noise_floor=n0)
    # one fixed frame per point: the pilot path never looks at payload bits,
    # so reusing the frame only saves rebuild time
    payload = rng.integers(0, 256, point.payload_bytes, dtype=np.uint8).tobytes()
    frame = Frame.make(payload, MODULATIONS["qpsk"])
    wf = build_frame_waveform(frame, Role.A)
    pad = np.zeros(32, dtype=complex)
    clean = np.concatenate([pad, wf.samples, pad])
    idx = np.arange(len(clean))
    clean = clean * np.exp(2j * np.pi * point.cfo_hz / P.SAMPLE_RATE * idx)
    errs = []
    while len(errs) < point.n_est:
        x = clean + np.sqrt(n0 / 2) * (
            rng.standard_normal((len(clean), 2)).view(np.complex128)[:, 0])
        out = receive(Baseband(x), rx_cfg)
        if np.isfinite(out.cfo_total_hz):
            errs.append(out.cfo_total_hz - point.cfo_hz)
    return np.asarray(errs)


def run_estimator_point(point: EstimatorPoint) -> EstimatorResult:
    if point.estimator == "coarse":
        return EstimatorResult(point, coarse_cfo_errors(point))
    if point.estimator == "residual":
        return EstimatorResult(point, residual_cfo_errors(point))
    raise ValueError(f"unknown estimator {point.estimator!r}")

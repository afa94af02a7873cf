"""Experiment definitions: presets, config files, and run-directory output.

A run directory contains:

    results.csv         one row per Monte Carlo point (schema results-v1)
    biterr_ccdf.csv     long-format bit-error CCDF per point (ccdf-v1)
    cfo_power_hist.csv  joint CFO-error/rx-power histogram rows (cfopow-v1)
    estimators.csv      estimator characterization rows (est-v1)
    manifest.json       schema versions plus the fully resolved point list

results.csv is a pure function of (configuration, seed): floats are written
with shortest-round-trip repr and rows are sorted by point id, so reruns and
different worker counts produce byte-identical files.  Histogram files are
only written when an experiment produced the underlying data.

Config files are INI:

    [experiment]
    preset = fig5-colocated     ; use a preset, or define the rest by hand
    name = my-sweep
    schemes = nc,df
    modulation = qpsk
    payload_bytes = 1412
    packets = 2000
    seed = 1
    fading = flat               ; awgn | flat | tdl15ns
    fading_mode = iid           ; iid | evolve
    lo_range_hz = 2000
    oracle_cfo = false
    collect_cfo_power = false
    misalignment_samples = 0    ; relay slot-2 start error, -1 | 0 | +1

    [topology]
    kind = colocated            ; colocated | linear | manual
    atten_db = 0,4,8            ; colocated sweep
    ;relay_pos_m = 1.2,2.2      ; linear sweep
    ;sd_db/sr_db/rd_db = ...    ; manual

    [offsets]                   ; optional forced inter-transmitter offsets
    offset_hz = 0,100,200
"""

from __future__ import annotations

import configparser
import json
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from . import params as P
from .harness import (EstimatorPoint, EstimatorResult, PointConfig,
                      TrialResult, Topology, bit_error_ccdf,
                      cfo_error_power_hist, compute_ber, compute_per,
                      make_topology, proportion_stderr, run_estimator_point,
                      run_points)
from .modem import MODULATIONS
from .nodes import SCHEMES

SCHEMAS = {
    "results": "results-v1",
    "biterr_ccdf": "ccdf-v1",
    "cfo_power_hist": "cfopow-v1",
    "estimators": "est-v1",
}

RESULTS_COLUMNS = [
    "point_id", "experiment", "scheme", "topology", "fading", "fading_mode",
    "modulation", "payload_bytes", "sd_path_loss_db", "sr_path_loss_db",
    "rd_path_loss_db", "atten_db", "relay_pos_m", "snr_db",
    "forced_offset_hz", "oracle_cfo", "lo_range_hz", "n_tx", "n_good",
    "n_no_rx", "n_bad_hdr", "n_bad_payload", "b_error", "b_total", "per",
    "per_stderr", "ber", "ber_stderr", "relay_trigger_rate", "seed",
]


class ConfigError(ValueError):
    pass


_KNOWN_KEYS = {
    "experiment": {"preset", "name", "seed", "packets", "schemes",
                   "modulation", "payload_bytes", "fading", "fading_mode",
                   "lo_range_hz", "oracle_cfo", "collect_cfo_power",
                   "misalignment_samples"},
    "topology": {"kind", "atten_db", "relay_pos_m", "sd_db", "sr_db", "rd_db"},
    "offsets": {"offset_hz"},
}


@dataclass
class Experiment:
    name: str
    seed: int
    points: list[PointConfig] = field(default_factory=list)
    estimator_points: list[EstimatorPoint] = field(default_factory=list)
    preset: str | None = None

    def override(self, seed: int | None = None, packets: int | None = None) -> "Experiment":
        exp = self
        if seed is not None:
            exp = replace(exp, seed=seed,
                          points=[replace(p, master_seed=seed) for p in exp.points],
                          estimator_points=[replace(p, master_seed=seed)
                                            for p in exp.estimator_points])
        if packets is not None:
            exp = replace(exp, points=[replace(p, n_packets=packets)
                                       for p in exp.points])
        return exp


# ---------------------------------------------------------------------------
# presets

def _preset_fig2(seed: int) -> Experiment:
    """PER vs forced inter-transmitter frequency offset, with a 1-Tx baseline.

    One row per offset in 0..500 Hz steps of 25 for each transmitter count;
    the baseline rows repeat the single-transmitter statistic at every offset
    so the two curves share an x axis.
    """
    topo = make_topology("colocated", atten_db=26.0)
    points = []
    base = dict(topology=topo, master_seed=seed, n_packets=2000,
                payload_bytes=1416, fading="awgn", fading_mode="iid",
                lo_range_hz=0.0, label="fig2-cfo-sweep")
    pid = 0
    for off in range(0, 501, 25):
        points.append(PointConfig(point_id=pid, scheme="df", oracle_cfo=True,
                                  forced_offset_hz=float(off), **base))
        points.append(PointConfig(point_id=pid + 1, scheme="nc", **base))
        pid += 2
    return Experiment("fig2-cfo-sweep", seed, points, preset="fig2-cfo-sweep")


def _preset_fig3(seed: int) -> Experiment:
    pts = [EstimatorPoint(i, "coarse", float(snr), 305.0, 10000, seed)
           for i, snr in enumerate([0, 5, 10, 15, 20, 25, 30])]
    return Experiment("fig3-coarse-cfo", seed, estimator_points=pts,
                      preset="fig3-coarse-cfo")


def _preset_fig4(seed: int) -> Experiment:
    pts = []
    i = 0
    for payload in (348, 1412):
        for snr in (10, 15, 20, 25, 30):
            pts.append(EstimatorPoint(i, "residual", float(snr), 305.0, 2000,
                                      seed, payload_bytes=payload))
            i += 1
    return Experiment("fig4-pilot-cfo", seed, estimator_points=pts,
                      preset="fig4-pilot-cfo")


def _preset_fig5(seed: int) -> Experiment:
    points = []
    i = 0
    for scheme in ("nc", "af", "df"):
        for mod in ("qpsk", "qam16"):
            for atten in range(0, 37, 4):
                points.append(PointConfig(
                    point_id=i, scheme=scheme, modulation=mod,
                    topology=make_topology("colocated", atten_db=float(atten)),
                    master_seed=seed, n_packets=2000, fading="flat",
                    fading_mode="iid", label="fig5-colocated"))
                i += 1
    return Experiment("fig5-colocated", seed, points, preset="fig5-colocated")


def _preset_fig7(seed: int) -> Experiment:
    topo = make_topology("colocated", atten_db=0.0)
    points = [PointConfig(point_id=i, scheme=s, topology=topo, master_seed=seed,
                          n_packets=5000, modulation="qam16", fading="flat",
                          fading_mode="iid", label="fig7-biterr-ccdf")
              for i, s in enumerate(("nc", "af", "df"))]
    return Experiment("fig7-biterr-ccdf", seed, points, preset="fig7-biterr-ccdf")


def _preset_fig8(seed: int) -> Experiment:
    topo = make_topology("colocated", atten_db=0.0)
    points = [PointConfig(point_id=0, scheme="df", topology=topo,
                          master_seed=seed, n_packets=10000, fading="flat",
                          fading_mode="iid", collect_cfo_power=True,
                          label="fig8-cfo-power")]
    return Experiment("fig8-cfo-power", seed, points, preset="fig8-cfo-power")


def _preset_fig9(seed: int) -> Experiment:
    points = []
    i = 0
    for scheme in ("df", "mhop"):
        for tenths in range(12, 93, 10):
            points.append(PointConfig(
                point_id=i, scheme=scheme,
                topology=make_topology("linear", relay_pos_m=tenths / 10.0),
                master_seed=seed, n_packets=2000, fading="flat",
                fading_mode="iid", label="fig9-linear"))
            i += 1
    points.append(PointConfig(
        point_id=i, scheme="nc",
        topology=make_topology("linear", relay_pos_m=5.2),
        master_seed=seed, n_packets=2000, fading="flat", fading_mode="iid",
        label="fig9-linear"))
    return Experiment("fig9-linear", seed, points, preset="fig9-linear")


PRESETS = {
    "fig2-cfo-sweep": _preset_fig2,
    "fig3-coarse-cfo": _preset_fig3,
    "fig4-pilot-cfo": _preset_fig4,
    "fig5-colocated": _preset_fig5,
    "fig7-biterr-ccdf": _preset_fig7,
    "fig8-cfo-power": _preset_fig8,
    "fig9-linear": _preset_fig9,
}


def build_preset(name: str, seed: int = 1) -> Experiment:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    return PRESETS[name](seed)


# ---------------------------------------------------------------------------
# config files

def _floats(key: str, text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.replace(";", ",").split(",") if tok.strip()]
    except ValueError as e:
        raise ConfigError(f"bad numeric list for {key}: {text!r}") from e


def load_config(path: str | Path) -> Experiment:
    cp = configparser.ConfigParser()
    try:
        read = cp.read(path)
    except configparser.Error as e:
        raise ConfigError(f"cannot parse {path}: {e}") from e
    if not read:
        raise ConfigError(f"config file {path} not found or empty")
    for sec in cp.sections():
        if sec not in _KNOWN_KEYS:
            raise ConfigError(f"unknown section [{sec}]")
        for key in cp[sec]:
            if key not in _KNOWN_KEYS[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
    if not cp.has_section("experiment"):
        raise ConfigError("config needs an [experiment] section")
    exp_sec = cp["experiment"]
    seed = exp_sec.getint("seed", fallback=1)
    if "preset" in exp_sec:
        exp = build_preset(exp_sec["preset"], seed)
        if "packets" in exp_sec:
            exp = exp.override(packets=exp_sec.getint("packets"))
        return exp

    name = exp_sec.get("name", fallback="custom")
    schemes = [s.strip() for s in exp_sec.get("schemes", fallback="nc").split(",") if s.strip()]
    for s in schemes:
        if s not in SCHEMES:
            raise ConfigError(f"unknown scheme {s!r} in schemes")
    try:
        misalign = exp_sec.getint("misalignment_samples", fallback=0)
    except ValueError as e:
        raise ConfigError(f"bad misalignment_samples: {e}") from e
    if misalign not in (-1, 0, 1):
        raise ConfigError(
            f"misalignment_samples must be -1, 0 or 1, got {misalign}")
    try:
        common = dict(
            modulation=exp_sec.get("modulation", fallback="qpsk"),
            payload_bytes=exp_sec.getint("payload_bytes", fallback=1412),
            n_packets=exp_sec.getint("packets", fallback=1000),
            master_seed=seed,
            fading=exp_sec.get("fading", fallback="flat"),
            fading_mode=exp_sec.get("fading_mode", fallback="iid"),
            lo_range_hz=exp_sec.getfloat("lo_range_hz", fallback=P.DEFAULT_LO_RANGE_HZ),
            oracle_cfo=exp_sec.getboolean("oracle_cfo", fallback=False),
            collect_cfo_power=exp_sec.getboolean("collect_cfo_power", fallback=False),
            relay_extra_delay_ns=misalign * 100.0,
            label=name,
        )
    except ValueError as e:
        raise ConfigError(f"bad [experiment] value: {e}") from e
    if common["modulation"] not in MODULATIONS:
        raise ConfigError(f"unknown modulation {common['modulation']!r}")

    if not cp.has_section("topology"):
        raise ConfigError("config needs a [topology] section")
    topo_sec = cp["topology"]
    kind = topo_sec.get("kind", fallback="colocated")
    try:
        if kind == "colocated":
            topos = [make_topology("colocated", atten_db=a)
                     for a in _floats("atten_db", topo_sec.get("atten_db", fallback="0"))]
        elif kind == "linear":
            topos = [make_topology("linear", relay_pos_m=d)
                     for d in _floats("relay_pos_m", topo_sec.get("relay_pos_m", fallback="5.2"))]
        elif kind == "manual":
            topos = [make_topology("manual",
                                   sd_db=topo_sec.getfloat("sd_db"),
                                   sr_db=topo_sec.getfloat("sr_db"),
                                   rd_db=topo_sec.getfloat("rd_db"))]
        else:
            raise ConfigError(f"unknown topology kind {kind!r}")
    except (ValueError, TypeError) as e:
        raise ConfigError(f"bad [topology] section: {e}") from e

    offsets = [0.0]
    if cp.has_section("offsets"):
        offsets = _floats("offset_hz", cp["offsets"].get("offset_hz", fallback="0"))

    points = []
    pid = 0
    for scheme in schemes:
        for topo in topos:
            for off in offsets:
                points.append(PointConfig(point_id=pid, scheme=scheme,
                                          topology=topo,
                                          forced_offset_hz=off, **common))
                pid += 1
    if not points:
        raise ConfigError("config defines no points")
    return Experiment(name, seed, points)


# ---------------------------------------------------------------------------
# output writing

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if v != v:      # nan -> empty cell
            return ""
        return repr(v)
    return str(v)


def results_rows(exp: Experiment, results: dict[int, TrialResult]) -> list[dict]:
    rows = []
    for cfg in sorted(exp.points, key=lambda c: c.point_id):
        res = results[cfg.point_id]
        topo = cfg.topology
        per = compute_per(res)
        try:
            ber = compute_ber(res)
            ber_se = proportion_stderr(ber, res.b_total)
        except Exception:
            ber, ber_se = float("nan"), float("nan")
        has_relay = cfg.scheme != "nc"
        rows.append({
            "point_id": cfg.point_id,
            "experiment": cfg.label or exp.name,
            "scheme": cfg.scheme,
            "topology": topo.kind,
            "fading": cfg.fading,
            "fading_mode": cfg.fading_mode,
            "modulation": cfg.modulation,
            "payload_bytes": cfg.payload_bytes,
            "sd_path_loss_db": topo.sd_db,
            "sr_path_loss_db": topo.sr_db,
            "rd_path_loss_db": topo.rd_db,
            "atten_db": topo.atten_db,
            "relay_pos_m": topo.relay_pos_m,
            "snr_db": P.snr_db_for_path_loss(topo.sd_db),
            "forced_offset_hz": cfg.forced_offset_hz,
            "oracle_cfo": cfg.oracle_cfo,
            "lo_range_hz": cfg.lo_range_hz,
            "n_tx": res.n_tx,
            "n_good": res.n_good,
            "n_no_rx": res.n_no_rx,
            "n_bad_hdr": res.n_bad_hdr,
            "n_bad_payload": res.n_bad_payload,
            "b_error": res.b_error,
            "b_total": res.b_total,
            "per": per,
            "per_stderr": proportion_stderr(per, res.n_tx),
            "ber": ber,
            "ber_stderr": ber_se,
            "relay_trigger_rate": (res.relay_triggered / res.n_tx
                                   if has_relay and res.n_tx else float("nan")),
            "seed": cfg.master_seed,
        })
    return rows


def _write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(row.get(c)) for c in columns))
    path.write_text("\n".join(lines) + "\n")


def write_run(outdir: str | Path, exp: Experiment,
              results: dict[int, TrialResult],
              est_results: list[EstimatorResult],
              workers: int = 1) -> None:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)

    if results:
        _write_csv(out / "results.csv", RESULTS_COLUMNS, results_rows(exp, results))

        ccdf_rows = []
        by_id = {c.point_id: c for c in exp.points}
        for pid in sorted(results):
            res = results[pid]
            if not res.bit_error_hist:
                continue
            ks, p = bit_error_ccdf(res)
            for k, pv in zip(ks, p):
                ccdf_rows.append({"point_id": pid, "scheme": by_id[pid].scheme,
                                  "k": int(k), "p_ge": float(pv)})
        if ccdf_rows:
            _write_csv(out / "biterr_ccdf.csv",
                       ["point_id", "scheme", "k", "p_ge"], ccdf_rows)

        hist_rows = []
        for pid in sorted(results):
            res = results[pid]
            if not res.cfo_power:
                continue
            power_c, err_c, h = cfo_error_power_hist(res.cfo_power)
            for i, pc in enumerate(power_c):
                for j, ec in enumerate(err_c):
                    if h[i, j] > 0:
                        hist_rows.append({"point_id": pid,
                                          "rx_power_db": float(pc),
                                          "cfo_err_hz": float(ec),
                                          "probability": float(h[i, j])})
        if hist_rows:
            _write_csv(out / "cfo_power_hist.csv",
                       ["point_id", "rx_power_db", "cfo_err_hz", "probability"],
                       hist_rows)

    if est_results:
        rows = [{
            "point_id": r.point.point_id,
            "estimator": r.point.estimator,
            "snr_db": r.point.snr_db,
            "true_cfo_hz": r.point.cfo_hz,
            "payload_bytes": r.point.payload_bytes,
            "duration_s": r.duration_s,
            "n_est": r.point.n_est,
            "mean_err_hz": r.mean_err_hz,
            "two_sigma_hz": r.two_sigma_hz,
            "seed": r.point.master_seed,
        } for r in sorted(est_results, key=lambda r: r.point.point_id)]
        _write_csv(out / "estimators.csv",
                   ["point_id", "estimator", "snr_db", "true_cfo_hz",
                    "payload_bytes", "duration_s", "n_est", "mean_err_hz",
                    "two_sigma_hz", "seed"], rows)

    manifest = {
        "format": "coopofdm-run",
        "version": __version__,
        "schemas": SCHEMAS,
        "experiment": exp.name,
        "preset": exp.preset,
        "seed": exp.seed,
        "workers": workers,
        "created": datetime.now(timezone.utc).isoformat(),
        "points": [_sanitize(asdict(p)) for p in exp.points],
        "estimator_points": [asdict(p) for p in exp.estimator_points],
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, allow_nan=False) + "\n")


def _sanitize(v):
    """Strict JSON has no NaN; map it to null."""
    if isinstance(v, dict):
        return {k: _sanitize(x) for k, x in v.items()}
    if isinstance(v, float) and v != v:
        return None
    return v


def experiment_from_manifest(path: str | Path) -> Experiment:
    """Rebuild the exact experiment a run directory came from.

    Together with the seed embedded in every point this makes a run
    reproducible from its manifest alone.
    """
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read manifest {path}: {e}") from e
    if doc.get("format") != "coopofdm-run":
        raise ConfigError(f"{path} is not a run manifest")
    points = []
    for raw in doc["points"]:
        d = dict(raw)
        topo = {k: (v if v is not None else float("nan"))
                for k, v in d.pop("topology").items()}
        d["topology"] = Topology(**topo)
        d["fading_overrides"] = tuple(tuple(p) for p in d["fading_overrides"])
        points.append(PointConfig(**d))
    est = [EstimatorPoint(**raw) for raw in doc["estimator_points"]]
    return Experiment(doc["experiment"], doc["seed"], points, est,
                      preset=doc.get("preset"))


def run_experiment(exp: Experiment, outdir: str | Path, workers: int = 1) -> None:
    results = run_points(exp.points, workers) if exp.points else {}
    est_results = [run_estimator_point(p) for p in exp.estimator_points]
    write_run(outdir, exp, results, est_results, workers)

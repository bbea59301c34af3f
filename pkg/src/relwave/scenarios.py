"""Scenario dispatch, report assembly and plot-data files.

A run writes into a staging directory beside the output directory and only
moves files into place once everything succeeded, so a failed run leaves
no partial output. ``report.json`` depends on ``(config, seed)`` only: the
worker count, output path and wall time live in ``manifest.json``.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import shutil
import tempfile
import time
import warnings
from dataclasses import dataclass, field
from io import StringIO
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, serialize
from .epr import (
    chsh,
    correlation_sweep,
    frame_roles,
    joint_table,
    optimal_chsh_settings,
    sample_joint,
)
from .lorentz_action import (
    grid_for_boost,
    momentum_boost,
    pullback_transform,
    quasi_2d_residual,
    time_slice_spread,
)
from .reduction import (
    DetectorArray,
    measure,
    reduce_position,
    reduction_in_boosted_frame,
    write_records_jsonl,
)
from .seeding import stream_key, trial_seeds
from .spacetime import BoostParameters, FourVector
from .twoparticle import (
    DecayGeometry,
    gaussian_swave,
    run_90deg_scenario,
    run_einstein_screen,
)
from .wavepacket import (
    AliasingWarning,
    gaussian_packet,
    momentum_to_position,
    norm,
    outer_fraction,
    packet_extent,
    position_to_momentum,
    synthesize_events,
)

log = logging.getLogger(__name__)

EXIT_OK, EXIT_SCENARIO, EXIT_CONFIG = 0, 1, 2
REPORT_ONLY = ("out", "workers")


class SchemaError(ValueError):
    pass


@dataclass
class Outputs:
    """Files produced by a scenario besides ``report.json``."""

    text: dict = field(default_factory=dict)

    def add(self, name: str, content: str):
        self.text[name] = content


def _config_echo(cfg: RunConfig) -> dict:
    return {k: v for k, v in cfg.to_dict().items() if k not in REPORT_ONLY}


def _einstein_screen(cfg: RunConfig, out: Outputs) -> dict:
    hits = run_einstein_screen(cfg.n_trials, seed=cfg.seed, n_theta=cfg.n_theta, n_phi=cfg.n_phi,
                               workers=cfg.workers, policy=cfg.policy)
    counts = hits.counts()
    return {
        "n_trials": hits.n_trials,
        "n_theta": cfg.n_theta,
        "n_phi": cfg.n_phi,
        "bin_probabilities": hits.probabilities.tolist(),
        "bin_counts": counts.tolist(),
        "max_hits_per_trial": int(hits.registered_per_trial().max()) if hits.n_trials else 0,
        "hits": {"theta": hits.theta.tolist(), "phi": hits.phi.tolist()},
    }


def _decay_90(cfg: RunConfig, out: Outputs) -> dict:
    geom = DecayGeometry.right_angle(cfg.distance, cfg.distance_2, cfg.half_angle,
                                     angle=math.radians(cfg.detector_angle_deg))
    state = gaussian_swave(cfg.k_center, cfg.k_width, cfg.mass)
    b = BoostParameters(cfg.beta)
    rep = run_90deg_scenario(geom, b, cfg.seed, cfg.n_trials, state, cfg.workers)
    mirror = run_90deg_scenario(geom, b.inverse(), cfg.seed, cfg.n_trials, state, cfg.workers)
    f, g = rep.trials["first"], mirror.trials["first"]
    decided = (f >= 0) & (g >= 0)
    summary = rep.summary()
    summary["mirror"] = {
        "beta": -cfg.beta,
        "first_counts": mirror.summary()["first_counts"],
        "non_tie_trials": int(decided.sum()),
        "flipped": int(np.sum(decided & (f != g))),
    }
    summary["trials"] = rep.trial_records()
    return summary


def _epr_boosted(cfg: RunConfig, out: Outputs) -> dict:
    half = 0.5 * cfg.detector_separation
    positions = [(-half, 0.0, 0.0), (half, 0.0, 0.0)]
    roles = []
    for beta in (-cfg.beta, 0.0, cfg.beta):
        fo = frame_roles(positions, BoostParameters(beta))
        roles.append({"beta": beta, "first_detector": fo.first_detector, "delay": fo.delay})
    order = frame_roles(positions, BoostParameters(cfg.beta))
    a, a2, b, b2 = optimal_chsh_settings()
    s = chsh(a, a2, b, b2, cfg.n_trials, cfg.seed, order, cfg.workers)
    sweep = correlation_sweep(cfg.n_angles, cfg.n_trials, cfg.seed, order, cfg.workers)
    # the same pair measured in both orders: joint tables and marginals
    tables = {}
    for beta in (-cfg.beta, cfg.beta):
        fo = frame_roles(positions, BoostParameters(beta))
        joint = sample_joint(a, b, fo, cfg.seed, cfg.n_trials, cfg.workers, stream=f"order{fo.first_detector}")
        counts = joint.table()
        tables[fo.first_detector] = {
            "counts": counts.tolist(),
            "marginal_d1_plus": float(counts[0].sum() / joint.n_trials),
            "marginal_d2_plus": float(counts[:, 0].sum() / joint.n_trials),
        }
        if cfg.trial_csv and fo.first_detector == order.first_detector:
            buf = StringIO()
            joint.write_csv(buf)
            out.add("epr_trials.csv", buf.getvalue())
    return {
        "detector_positions": [list(p) for p in positions],
        "frame_roles": roles,
        "operative_order": order.first_detector,
        "settings": {"a": a.tolist(), "a_prime": a2.tolist(), "b": b.tolist(), "b_prime": b2.tolist()},
        "chsh": s.to_dict(),
        "joint_probability": joint_table(a, b).tolist(),
        "order_tables": tables,
        "correlation_sweep": sweep,
    }


def _packet_boost_demo(cfg: RunConfig, out: Outputs) -> dict:
    b = BoostParameters(cfg.beta)
    grid = grid_for_boost(cfg.k_center, cfg.k_width, cfg.mass, b)
    amp = gaussian_packet(cfg.k_center, cfg.k_width, cfg.mass, grid)
    boosted = momentum_boost(amp, b)
    rest = momentum_to_position(amp, 0.0)
    lo, hi = packet_extent(rest, threshold=1e-6)
    extent = hi - lo

    new_field = momentum_to_position(boosted, 0.0)
    nlo, nhi = packet_extent(new_field, threshold=1e-6)
    xs = np.linspace(nlo, nhi, 257)
    events = np.column_stack([np.zeros_like(xs), xs, np.zeros_like(xs), np.zeros_like(xs)])
    direct = pullback_transform(amp, b, events).values
    via_k = synthesize_events(boosted, events)
    equiv = float(np.linalg.norm(direct - via_k) / np.linalg.norm(direct))

    det = DetectorArray.uniform_1d(lo, hi, cfg.n_cells)
    key = stream_key(cfg.seed, "packet_records")
    seeds = trial_seeds(key, cfg.n_records)
    records = []
    for s in seeds:
        rec, _ = measure(rest, det, int(s), cfg.policy)
        records.append(rec)
    buf = StringIO()
    write_records_jsonl(records, buf)
    out.add("records.jsonl", buf.getvalue())

    # one reduction at t = 0 onto the cell holding the packet centre
    centre = 0.5 * (lo + hi)
    cell = det.cells[int(det.assign(np.array([[centre, 0.0, 0.0]]))[0])]
    # the cut edges put high-k content into the reduced state; its size is reported
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AliasingWarning)
        post = position_to_momentum(reduce_position(rest, cell), cfg.mass, grid=amp.grid)
    ts = np.linspace(-1.0, 1.0, 5) * time_slice_spread(extent, b)
    tgt = np.array([[t, x, 0.0, 0.0] for t in ts for x in np.linspace(nlo, nhi, 33)])
    red = reduction_in_boosted_frame(amp, post, FourVector(0.0, centre, 0.0, 0.0), b, tgt,
                                     support=(lo, hi))
    counts = np.bincount([r.outcome_index for r in records], minlength=cfg.n_cells)
    return {
        "grid_size": int(grid.size),
        "norm_rest": norm(amp),
        "norm_boosted": norm(boosted),
        "pullback_vs_momentum_boost": equiv,
        "packet_extent": [float(lo), float(hi)],
        "time_slice_spread": time_slice_spread(extent, b),
        "mixed_region": list(red.transition),
        "mixed_region_width": red.width,
        "post_reduction_outer_fraction": outer_fraction(post),
        "quasi_2d_residual": quasi_2d_residual(amp, b),
        "detector_edges": [float(c.lower[0]) for c in det.cells] + [float(det.cells[-1].upper[0])],
        "record_counts": counts.tolist(),
        "profile": {
            "x": xs.tolist(),
            "intensity_rest": (np.abs(synthesize_events(amp, events)) ** 2).tolist(),
            "intensity_boosted": (np.abs(via_k) ** 2).tolist(),
        },
    }


RUNNERS = {
    "einstein_screen": _einstein_screen,
    "decay_90": _decay_90,
    "epr_boosted": _epr_boosted,
    "packet_boost_demo": _packet_boost_demo,
}

# CSV name -> header, per scenario
PLOT_SCHEMAS = {
    "einstein_screen": {"hits.csv": ["theta", "phi", "trial"],
                        "bins.csv": ["bin", "theta_lo", "theta_hi", "phi_lo", "phi_hi", "probability", "count"]},
    "decay_90": {"timeline.csv": ["trial", "detector", "t_rest", "t_boost", "first", "fired"]},
    "epr_boosted": {"correlation.csv": ["angle_deg", "estimate", "stderr", "analytic"],
                    "frame_roles.csv": ["beta", "first_detector", "delay"]},
    "packet_boost_demo": {"packet.csv": ["x", "intensity_rest", "intensity_boosted"]},
}


def _rows(report: dict) -> dict:
    sc = report["scenario"]
    if sc == "einstein_screen":
        hits = report.get("hits", {"theta": [], "phi": []})
        nt, nphi = report.get("n_theta", 0), report.get("n_phi", 0)
        probs, counts = report.get("bin_probabilities", []), report.get("bin_counts", [])
        bins = []
        for k, (p, c) in enumerate(zip(probs, counts)):
            i, j = divmod(k, nphi)
            bins.append([k, math.acos(1.0 - i / nt), math.acos(1.0 - (i + 1) / nt),
                         2 * math.pi * j / nphi, 2 * math.pi * (j + 1) / nphi, p, c])
        return {"hits.csv": [[th, ph, n] for n, (th, ph) in enumerate(zip(hits["theta"], hits["phi"]))],
                "bins.csv": bins}
    if sc == "decay_90":
        rows = []
        for tr in report.get("trials", []):
            for d, label in enumerate(("D1", "D2")):
                rows.append([tr["trial"], label, tr["t_rest"][d], tr["t_boost"][d], tr["first"],
                             int(tr["firing"] == label or tr["silent"] is None)])
        return {"timeline.csv": rows}
    if sc == "epr_boosted":
        return {"correlation.csv": [[r["angle_deg"], r["estimate"], r["stderr"], r["analytic"]]
                                    for r in report.get("correlation_sweep", [])],
                "frame_roles.csv": [[r["beta"], r["first_detector"], r["delay"]]
                                    for r in report.get("frame_roles", [])]}
    prof = report.get("profile", {"x": [], "intensity_rest": [], "intensity_boosted": []})
    return {"packet.csv": [list(r) for r in zip(prof["x"], prof["intensity_rest"], prof["intensity_boosted"])]}


def _cell(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def plot_data(report: dict) -> dict:
    """CSV texts keyed by file name for a scenario report."""
    sc = report.get("scenario") if isinstance(report, dict) else None
    if sc not in PLOT_SCHEMAS:
        raise SchemaError(f"report has no known scenario (got {sc!r})")
    try:
        rows = _rows(report)
    except (KeyError, TypeError, IndexError, ValueError) as exc:
        raise SchemaError(f"{sc} report does not match its schema: {exc!r}") from None
    out = {}
    for name, header in PLOT_SCHEMAS[sc].items():
        lines = [",".join(header)]
        for r in rows[name]:
            if len(r) != len(header):
                raise SchemaError(f"{name}: row of {len(r)} fields, header has {len(header)}")
            lines.append(",".join(_cell(v) for v in r))
        out[name] = "\n".join(lines) + "\n"
    return out


def emit_plot_data(report: dict, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, text in plot_data(report).items():
        p = out_dir / name
        p.write_text(text, encoding="utf-8")
        paths.append(p)
    return paths


def build_report(cfg: RunConfig) -> tuple[dict, Outputs]:
    out = Outputs()
    body = RUNNERS[cfg.scenario](cfg, out)
    report = {"scenario": cfg.scenario, "version": __version__, "config": _config_echo(cfg), **body}
    return report, out


def dumps_report(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=1, allow_nan=False) + "\n"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class RunResult:
    status: int
    files: list = field(default_factory=list)
    error: str | None = None


def run(cfg: RunConfig) -> RunResult:
    """Run one scenario; on success ``cfg.out`` holds report, manifest and CSVs."""
    out_dir = Path(cfg.out)
    t0 = time.perf_counter()
    parent = out_dir.resolve().parent
    parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}.staging-", dir=parent))
    try:
        report, extra = build_report(cfg)
        (stage / "report.json").write_text(dumps_report(report), encoding="utf-8")
        for name, text in {**plot_data(report), **extra.text}.items():
            (stage / name).write_text(text, encoding="utf-8")
        (stage / "config.txt").write_text(serialize(cfg), encoding="utf-8")
        names = sorted(p.name for p in stage.iterdir())
        manifest = {
            "scenario": cfg.scenario,
            "seed": cfg.seed,
            "version": __version__,
            "config": cfg.to_dict(),
            "wall_time_s": time.perf_counter() - t0,
            "files": {n: _sha256(stage / n) for n in names},
        }
        (stage / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n",
                                             encoding="utf-8")
        out_dir.mkdir(parents=True, exist_ok=True)
        files = []
        for p in sorted(stage.iterdir()):
            dest = out_dir / p.name
            os.replace(p, dest)
            files.append(dest)
        return RunResult(EXIT_OK, files)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return RunResult(EXIT_CONFIG, error=str(exc))
    except Exception as exc:  # any module error fails the run without partial output
        log.error("%s failed: %s", cfg.scenario, exc)
        return RunResult(EXIT_SCENARIO, error=f"{type(exc).__name__}: {exc}")
    finally:
        shutil.rmtree(stage, ignore_errors=True)

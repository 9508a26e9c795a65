"""Command-line interface: scan, wavepacket, fit, simulate, analyze, witness.

Every subcommand is deterministic given (config, seed); numeric output is
fixed at 12 significant digits so result files are reproducible byte for
byte. Exit codes: 0 ok, 2 configuration error, 3 numeric failure, 4 data
format error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import math
import os
import sys

import numpy as np

from . import calibration, plots
from .bloch import dark_resonance_scan
from .config import load_config
from .detection import simulate_block
from .errors import ConfigError, DataFormatError, IonPhotonError, NumericError
from .stats import clopper_pearson
from .tags import (
    TtagWriter,
    dark_corrected_alpha,
    g2_histogram,
    read_tags,
    statistics_from_counts,
    classify_windows,
    window_statistics,
    write_sidecar,
)
from .wavepacket import beat_frequency, photon_wavepacket
from .witness import ClickProbs, evaluate_witness, threshold_curve

FMT = "%.11e"   # 12 significant digits


def _outdir(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _path(args, name):
    return os.path.join(_outdir(args), name)


def _write_csv(path, header, columns):
    rows = zip(*columns)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(FMT % v for v in row) + "\n")
    return path


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------

def _scan_chunk(payload):
    scheme, cooling, repump, env, chunk, geometry = payload
    scan = dark_resonance_scan(scheme, cooling, repump, env, chunk, geometry=geometry)
    return scan.rates, scan.errors


def cmd_scan(args):
    cfg = load_config(args.config)
    scheme = cfg.scheme()
    env = cfg.environment()
    cooling = cfg.laser("cooling", env)
    repump = cfg.laser("repump", env)
    geometry = cfg.geometry(env)
    grid_hz = cfg.scan_grid()
    grid = 2.0 * math.pi * grid_hz
    chunks = np.array_split(np.arange(grid.size), max(args.workers, 1))
    chunks = [c for c in chunks if c.size]
    payloads = [(scheme, cooling, repump, env, grid[c], geometry) for c in chunks]
    if args.workers > 1 and len(payloads) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.workers) as pool:
            parts = list(pool.map(_scan_chunk, payloads))
    else:
        parts = [_scan_chunk(p) for p in payloads]
    rates = np.concatenate([p[0] for p in parts])
    failures = [e for p in parts for e in p[1]]
    if failures:
        raise NumericError(f"{len(failures)} scan points failed: {failures[0][1]}")
    csv = _write_csv(_path(args, "scan.csv"), ["detuning_hz", "rate_cps"],
                     [grid_hz, rates])
    with open(_path(args, "scan_summary.txt"), "w") as fh:
        fh.write(f"points        : {grid.size}\n")
        fh.write(f"max rate      : {FMT % rates.max()} counts/s\n")
        fh.write(f"min rate      : {FMT % rates.min()} counts/s\n")
        fh.write(f"min at        : {FMT % grid_hz[int(np.argmin(rates))]} Hz\n")
    if args.plot:
        plots.render_scan(_path(args, "scan.png"), grid_hz, rates)
    print(f"wrote {csv}")
    return 0


def cmd_wavepacket(args):
    cfg = load_config(args.config)
    scheme = cfg.scheme()
    env = cfg.environment()
    sequence, window, n_points = cfg.sequence(env)
    geometry = cfg.geometry(env)
    wp = photon_wavepacket(scheme, sequence, env, geometry=geometry,
                           window=window, n_points=n_points)
    normalized = wp.normalized() if wp.contained_probability > 0 else np.zeros_like(wp.density)
    csv = _write_csv(_path(args, "wavepacket.csv"),
                     ["time_s", "density_per_s", "density_normalized"],
                     [wp.times, wp.density, normalized])
    beat = beat_frequency(wp)
    with open(_path(args, "beat_report.txt"), "w") as fh:
        fh.write(f"window_s             : {FMT % wp.window}\n")
        fh.write(f"contained_probability: {FMT % wp.contained_probability}\n")
        fh.write(f"emission_probability : {FMT % wp.emission_probability}\n")
        if wp.contained_probability > 0:
            fh.write(f"mean_arrival_s       : {FMT % wp.mean_arrival_time()}\n")
        fh.write(f"beat_detected        : {beat.found}\n")
        if beat.found:
            fh.write(f"beat_frequency_hz    : {FMT % beat.frequency}\n")
            fh.write(f"resolution_hz        : {FMT % beat.resolution}\n")
            fh.write(f"peak_ratio           : {FMT % beat.peak_ratio}\n")
    if args.plot:
        plots.render_wavepacket(_path(args, "wavepacket.png"), wp.times, wp.density,
                                beat=beat)
    print(f"wrote {csv}")
    return 0


def cmd_fit(args):
    cfg = load_config(args.config)
    data = calibration.read_scan_csv(args.scan)
    initial, free, bounds = cfg.fit_spec()
    missing = [n for n in calibration.PARAM_NAMES if n not in initial]
    if missing:
        raise ConfigError(f"fit.initial missing parameters: {missing}")
    env = cfg.environment()
    result = calibration.fit_dark_resonance(
        data, initial, free=free, bounds=bounds or None,
        scheme=cfg.scheme(), b_direction=env.direction,
        beam_axis=cfg.beam_axis(), geometry=cfg.geometry(env))
    with open(_path(args, "fit_report.txt"), "w") as fh:
        fh.write(result.report() + "\n")
    model = calibration.scan_model(result.params, data.detunings_hz,
                                   scheme=cfg.scheme(), b_direction=env.direction,
                                   beam_axis=cfg.beam_axis(), geometry=cfg.geometry(env))
    _write_csv(_path(args, "fit_curve.csv"),
               ["detuning_hz", "rate_cps", "model_cps", "weighted_residual"],
               [data.detunings_hz, data.rates_cps, model,
                (data.rates_cps - model) / data.sigma_cps])
    if args.plot:
        plots.render_scan(_path(args, "fit.png"), data.detunings_hz,
                          data.rates_cps, fitted=model)
    print(f"wrote {_path(args, 'fit_report.txt')}")
    return 0 if result.converged else 3


def _simulate_chunk(payload):
    source, det_a, det_b, run, start, stop = payload
    return simulate_block(source, det_a, det_b, run, start, stop)


def cmd_simulate(args):
    cfg = load_config(args.config)
    run = cfg.run_config(seed=args.seed)
    source = cfg.source()
    det_a, det_b = cfg.detectors()
    out = _path(args, "run.ttag")
    block = 1 << 18
    starts = list(range(0, run.n_triggers, block))
    edges = [(s, min(s + block, run.n_triggers)) for s in starts]
    writer = TtagWriter(out)
    try:
        if args.workers > 1:
            with concurrent.futures.ProcessPoolExecutor(max_workers=args.workers) as pool:
                for stream in pool.map(
                        _simulate_chunk,
                        [(source, det_a, det_b, run, a, b) for a, b in edges],
                        chunksize=1):
                    writer.append(stream)
        else:
            for a, b in edges:
                writer.append(simulate_block(source, det_a, det_b, run, a, b))
    finally:
        writer.close()
    write_sidecar(out, {
        "configuration": run.configuration,
        "trigger_period_s": run.trigger_period,
        "window_s": run.window,
        "n_triggers": run.n_triggers,
        "seed": run.seed,
        "p_emit": source.p_emit,
        "p_multi": source.p_multi,
        "mode_efficiency": source.mode_efficiency if np.isscalar(source.mode_efficiency)
        else list(source.mode_efficiency),
        "detector_a": {"qe": det_a.quantum_efficiency, "dark_rate_cps": det_a.dark_rate},
        "detector_b": {"qe": det_b.quantum_efficiency, "dark_rate_cps": det_b.dark_rate},
    })
    digest = hashlib.sha256()
    with open(out, "rb") as fh:
        for piece in iter(lambda: fh.read(1 << 20), b""):
            digest.update(piece)
    print(f"wrote {out}")
    print(f"sha256 {digest.hexdigest()}")
    return 0


def cmd_analyze(args):
    stream = read_tags(args.tags)
    if len(stream) == 0 or not np.any(stream.channels == 2):
        stats = None
    else:
        stats = window_statistics(stream, args.window)
    if stats is None:
        with open(_path(args, "stats.txt"), "w") as fh:
            fh.write("empty stream: no triggers, no statistics\n")
        with open(_path(args, "stats.json"), "w") as fh:
            json.dump({"n_triggers": 0}, fh)
            fh.write("\n")
        print("empty stream")
        return 0
    with open(_path(args, "stats.json"), "w") as fh:
        json.dump(stats.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    report = stats.summary()
    if args.dark_rate is not None:
        bound = dark_corrected_alpha(stats, args.dark_rate,
                                     rate_uncertainty=args.dark_rate_uncertainty)
        report += "\n" + bound.summary()
    with open(_path(args, "stats.txt"), "w") as fh:
        fh.write(report + "\n")
    tau = args.tau_range if args.tau_range is not None else 3.5 * args.period
    bw = args.bin_width if args.bin_width is not None else args.window / 4.0
    hist = g2_histogram(stream, -tau, tau, bw,
                        gating_window=args.gate_window)
    _write_csv(_path(args, "g2.csv"), ["delay_s", "pair_counts"],
               [hist.bin_centers, hist.counts.astype(float)])
    if args.plot:
        plots.render_g2(_path(args, "g2.png"), hist.bin_centers, hist.counts)
    print(report)
    return 0


def cmd_witness(args):
    if args.stats is not None:
        with open(args.stats) as fh:
            payload = json.load(fh)
        for key in ("n_triggers", "exclusive_singles", "coincidences"):
            if key not in payload:
                raise DataFormatError(f"stats file missing field {key!r}")
        n, ns, nc = payload["n_triggers"], payload["exclusive_singles"], payload["coincidences"]
    else:
        if args.triggers is None or args.singles is None or args.coincidences is None:
            raise ConfigError("need --stats or all of --triggers/--singles/--coincidences")
        n, ns, nc = args.triggers, args.singles, args.coincidences
    verdict = evaluate_witness(n, ns, nc)
    with open(_path(args, "verdict.txt"), "w") as fh:
        fh.write(verdict.summary() + "\n")
    v, ps, pc, pc_cl = threshold_curve()
    _write_csv(_path(args, "threshold_curve.csv"),
               ["squeezing_v", "ps", "pc_qng", "pc_classical"],
               [v, ps, pc, pc_cl])
    if args.plot:
        plots.render_witness(_path(args, "witness.png"), ps, pc, pc_cl,
                             measured=(verdict.pc, verdict.ps,
                                       verdict.pc_ci95, verdict.ps_ci95))
    print(verdict.summary())
    return 0


# ----------------------------------------------------------------------
# argument parsing
# ----------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="ionphoton",
        description="Trapped-ion single-photon source simulator and analysis toolkit")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--workers", type=int, default=1,
                        help="worker processes (results independent of it)")
    parser.add_argument("--no-plot", dest="plot", action="store_false",
                        help="skip figure rendering")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan", help="dark-resonance scan -> CSV curve")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("wavepacket", help="single-photon wavepacket and beat report")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_wavepacket)

    p = sub.add_parser("fit", help="fit model parameters to a measured scan CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--scan", required=True, help="CSV: detuning_hz,rate_cps[,sigma_cps]")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="Monte-Carlo detection run -> TTAG file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override run.seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="click statistics and g2 from a TTAG/CSV file")
    p.add_argument("--tags", required=True)
    p.add_argument("--window", type=float, required=True, help="detection window [s]")
    p.add_argument("--period", type=float, required=True, help="trigger period [s]")
    p.add_argument("--gate-window", type=float, default=None,
                   help="restrict g2 pairs to per-trigger windows of this length [s]")
    p.add_argument("--tau-range", type=float, default=None, help="g2 delay half-range [s]")
    p.add_argument("--bin-width", type=float, default=None, help="g2 bin width [s]")
    p.add_argument("--dark-rate", type=float, default=None,
                   help="per-detector dark rate [counts/s] for the corrected alpha bound")
    p.add_argument("--dark-rate-uncertainty", type=float, default=0.0)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("witness", help="evaluate NC and QNG witnesses on counts")
    p.add_argument("--stats", default=None, help="stats.json from analyze")
    p.add_argument("--triggers", type=int, default=None)
    p.add_argument("--singles", type=int, default=None)
    p.add_argument("--coincidences", type=int, default=None)
    p.set_defaults(func=cmd_witness)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError,) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DataFormatError as exc:
        print(f"data format error: {exc}", file=sys.stderr)
        return 4
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except IonPhotonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

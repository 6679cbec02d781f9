"""Command-line front end.

Subcommands map one-to-one onto the library: ``matrix`` builds detection
matrices, ``sweep`` runs heralded-g2 brightness sweeps, ``simulate`` runs
the event-level Monte Carlo and writes a tag file, ``analyze`` correlates a
tag file, and ``thresholds`` produces discriminator count-rate surfaces.

Every invocation that writes outputs also writes ``<out>.manifest.json``
recording the tool version, the resolved configuration, the seed and the
SHA-256 digest of each emitted file; re-running the same configuration and
seed reproduces the outputs byte for byte.

Durations accept ``ps`` and ``ns`` suffixes (bare numbers are picoseconds).
Environment overrides are limited to ``HERALDSIM_THREADS`` and
``HERALDSIM_OUTDIR``.
"""

from __future__ import annotations

import argparse
import configparser
import datetime
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .coincidence import correlate, g2_tau, integrate_peaks, write_histogram_csv, write_peaks_csv
from .detector_model import detection_matrix, write_matrix_csv
from .discriminator import AmplitudeModel, threshold_sweep, write_surface_csv
from .errors import (
    EmptyEnsembleError,
    FormatError,
    InconsistentRatesError,
    ParameterError,
    UndefinedStatisticError,
)
from .event_sim import CHANNELS_BY_NAME, Channel, ExperimentConfig, run
from .feedforward import HeraldSelection, g2_sweep, write_sweep_csv
from .photon_stats import poissonian, required_n_max, thermal
from .tagio import read_tags, write_binary, write_csv

_PS_PER_UNIT = {"ps": 1, "ns": 1000}


def parse_duration(text: str) -> int:
    """'250ps', '12.5ns' or a bare picosecond count -> integer ps."""
    raw = str(text).strip().lower()
    unit = "ps"
    for suffix in _PS_PER_UNIT:
        if raw.endswith(suffix):
            unit = suffix
            raw = raw[: -len(suffix)]
            break
    try:
        value = float(raw) * _PS_PER_UNIT[unit]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad duration {text!r}") from exc
    if abs(value - round(value)) > 1e-6 or value < 0:
        raise argparse.ArgumentTypeError(f"duration {text!r} is not a whole number of picoseconds")
    return int(round(value))


def _probability(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"{value!r} is outside [0, 1]")
    return value


def _crosstalk_arg(text: str) -> float:
    value = float(text)
    if not 0.0 <= value < 1.0:
        raise argparse.ArgumentTypeError(f"crosstalk {value!r} is outside [0, 1)")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def _non_negative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text!r}")
    return value


def _resolve_out(path: str) -> str:
    outdir = os.environ.get("HERALDSIM_OUTDIR")
    if outdir and not os.path.isabs(path):
        os.makedirs(outdir, exist_ok=True)
        return os.path.join(outdir, path)
    return path


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_manifest(primary_out: str, command: str, config: dict, seed, outputs, started: str) -> str:
    manifest = {
        "tool": "heraldsim",
        "version": __version__,
        "command": command,
        "config": config,
        "seed": seed,
        "started_utc": started,
        "finished_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "outputs": {path: f"sha256:{_sha256(path)}" for path in outputs},
    }
    path = primary_out + ".manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _utc_now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _default_threads() -> int:
    env = os.environ.get("HERALDSIM_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


# ----------------------------------------------------------------------
# simulate: config file handling


_CONFIG_SCHEMA = {
    ("source", "mean_pairs_per_pulse"): ("mean_pairs_per_pulse", float),
    ("source", "family"): ("source_family", str),
    ("source", "rep_period"): ("rep_period", parse_duration),
    ("idler", "transmission"): ("idler_transmission", float),
    ("idler", "pixels"): ("n_pixels", int),
    ("idler", "crosstalk"): ("crosstalk", float),
    ("modulator", "latency"): ("latency", parse_duration),
    ("modulator", "gate_length"): ("gate_length", parse_duration),
    ("modulator", "extinction_db"): ("extinction_db", float),
    ("modulator", "retrigger"): ("retrigger", str),
    ("modulator", "gate_rise_time"): ("gate_rise_time", parse_duration),
    ("signal", "transmission"): ("signal_transmission", float),
    ("signal", "hbt_splitting"): ("hbt_splitting", float),
    ("signal", "hbt_efficiency"): ("hbt_efficiency", float),
    ("signal", "dark_rate"): ("dark_rate", float),
    ("signal", "signal_delay"): ("signal_delay", parse_duration),
    ("run", "pulses"): ("n_pulses", int),
    ("run", "seed"): ("seed", int),
}


def load_config_file(path: str) -> dict:
    """Read the flat sectioned key-value config file into constructor kwargs."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if not parser.read(path):
        raise ParameterError(f"cannot read config file {path!r}")
    kwargs: dict = {}
    selection_text = None
    for section in parser.sections():
        for key, raw in parser.items(section):
            if (section, key) == ("idler", "selection"):
                selection_text = raw
                continue
            try:
                field, convert = _CONFIG_SCHEMA[(section, key)]
            except KeyError:
                raise ParameterError(f"{path}: unknown config key [{section}] {key}") from None
            try:
                kwargs[field] = convert(raw)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise ParameterError(f"{path}: bad value for [{section}] {key}: {raw!r}") from exc
    if selection_text is not None:
        kwargs["herald_selection"] = HeraldSelection.parse(
            selection_text, kwargs.get("n_pixels", 4)
        )
    return kwargs


def _config_echo(config: ExperimentConfig) -> dict:
    echo = {
        "mean_pairs_per_pulse": config.mean_pairs_per_pulse,
        "n_pulses": config.n_pulses,
        "seed": config.seed,
        "rep_period": config.rep_period,
        "source_family": config.source_family,
        "idler_transmission": config.idler_transmission,
        "n_pixels": config.n_pixels,
        "crosstalk": config.crosstalk,
        "herald_selection": config.herald_selection.label,
        "latency": config.latency,
        "gate_length": config.gate_length,
        "extinction_db": config.extinction_db,
        "signal_transmission": config.signal_transmission,
        "hbt_splitting": config.hbt_splitting,
        "hbt_efficiency": config.hbt_efficiency,
        "dark_rate": config.dark_rate,
        "signal_delay": config.resolved_signal_delay,
        "retrigger": config.retrigger,
        "gate_rise_time": config.gate_rise_time,
    }
    return echo


# ----------------------------------------------------------------------
# subcommands


def _cmd_matrix(args) -> int:
    started = _utc_now()
    out = _resolve_out(args.out)
    matrix = detection_matrix(args.transmission, args.pixels, args.crosstalk, args.nmax)
    write_matrix_csv(matrix, out)
    config = {
        "transmission": args.transmission,
        "pixels": args.pixels,
        "crosstalk": args.crosstalk,
        "nmax": args.nmax,
    }
    _write_manifest(out, "matrix", config, None, [out], started)
    print(f"wrote {out}")
    return 0


def _cmd_sweep(args) -> int:
    started = _utc_now()
    out = _resolve_out(args.out)
    if args.mu_min <= 0 or args.mu_max <= args.mu_min:
        raise ParameterError("need 0 < --mu-min < --mu-max")
    n_max = args.nmax
    if n_max is None:
        n_max = max(10, required_n_max(args.mu_max, args.family))
    det = detection_matrix(args.transmission, args.pixels, args.crosstalk, n_max)
    selection = HeraldSelection.parse(args.selection, args.pixels)
    means = np.geomspace(args.mu_min, args.mu_max, args.points)
    rows = g2_sweep(det, selection, means, args.family)
    write_sweep_csv(rows, selection, args.family, out)
    config = {
        "selection": selection.label,
        "family": args.family,
        "mu_min": args.mu_min,
        "mu_max": args.mu_max,
        "points": args.points,
        "transmission": args.transmission,
        "pixels": args.pixels,
        "crosstalk": args.crosstalk,
        "nmax": n_max,
    }
    _write_manifest(out, "sweep", config, None, [out], started)
    print(f"wrote {out}")
    return 0


def _cmd_simulate(args) -> int:
    started = _utc_now()
    kwargs = load_config_file(args.config) if args.config else {}
    if args.mu is not None:
        kwargs["mean_pairs_per_pulse"] = args.mu
    if args.pulses is not None:
        kwargs["n_pulses"] = args.pulses
    if args.seed is not None:
        kwargs["seed"] = args.seed
    if args.selection is not None:
        kwargs["herald_selection"] = HeraldSelection.parse(
            args.selection, kwargs.get("n_pixels", 4)
        )
    missing = [k for k in ("mean_pairs_per_pulse", "n_pulses", "seed") if k not in kwargs]
    if missing:
        raise ParameterError(f"missing required simulate parameters: {', '.join(missing)}")
    config = ExperimentConfig(**kwargs)
    out = _resolve_out(args.out)
    stream, summary = run(config, threads=args.threads)
    if out.endswith(".csv"):
        write_csv(stream, out)
    else:
        write_binary(stream, out)
    summary_path = out + ".summary.txt"
    with open(summary_path, "w", encoding="utf-8") as fh:
        fh.write(summary.as_text())
    _write_manifest(out, "simulate", _config_echo(config), config.seed, [out, summary_path], started)
    print(f"wrote {out} ({sum(stream.counts().values())} tags)")
    return 0


def _parse_pair(text: str) -> tuple:
    try:
        name_a, name_b = (tok.strip().lower() for tok in text.split(","))
        return CHANNELS_BY_NAME[name_a], CHANNELS_BY_NAME[name_b]
    except (ValueError, KeyError) as exc:
        names = ", ".join(CHANNELS_BY_NAME)
        raise argparse.ArgumentTypeError(f"bad channel pair {text!r}; channels: {names}") from exc


def _cmd_analyze(args) -> int:
    started = _utc_now()
    stream = read_tags(args.tags, duration=args.duration)
    hist = correlate(stream, args.pair, bin_width=args.bin, range_ps=args.range)
    peaks = integrate_peaks(hist, args.rep_period, args.halfwidth)
    rep_rate = args.rep_rate if args.rep_rate is not None else 1e12 / args.rep_period
    g2 = g2_tau(hist, args.rep_period, rep_rate, args.halfwidth)
    out = _resolve_out(args.out)
    hist_path = out + ".hist.csv"
    peaks_path = out + ".peaks.csv"
    write_histogram_csv(hist, hist_path)
    write_peaks_csv(peaks, g2, peaks_path)
    config = {
        "tags": args.tags,
        "pair": [int(c) for c in args.pair],
        "bin": args.bin,
        "range": args.range,
        "rep_period": args.rep_period,
        "halfwidth": args.halfwidth,
        "rep_rate": rep_rate,
    }
    _write_manifest(out, "analyze", config, None, [hist_path, peaks_path], started)
    print(f"wrote {hist_path} and {peaks_path}")
    return 0


def _cmd_thresholds(args) -> int:
    started = _utc_now()
    out = _resolve_out(args.out)
    n_max = args.nmax if args.nmax is not None else max(10, required_n_max(args.mu, args.family))
    det = detection_matrix(args.transmission, args.pixels, args.crosstalk, n_max)
    source = poissonian(args.mu, n_max) if args.family == "poissonian" else thermal(args.mu, n_max)
    model = AmplitudeModel(
        unit_amplitude=args.unit_amplitude,
        noise_sigma=args.noise_sigma,
        baseline=args.baseline,
    )
    low_grid = np.linspace(args.low_min, args.low_max, args.low_steps)
    if args.high_min is None:
        high_grid = np.asarray([np.inf])
    else:
        high_grid = np.linspace(args.high_min, args.high_max, args.high_steps)
    surface = threshold_sweep(source, det, model, args.rep_rate, low_grid, high_grid)
    write_surface_csv(low_grid, high_grid, surface, out)
    config = {
        "mu": args.mu,
        "family": args.family,
        "transmission": args.transmission,
        "pixels": args.pixels,
        "crosstalk": args.crosstalk,
        "nmax": n_max,
        "unit_amplitude": args.unit_amplitude,
        "noise_sigma": args.noise_sigma,
        "baseline": args.baseline,
        "rep_rate": args.rep_rate,
    }
    _write_manifest(out, "thresholds", config, None, [out], started)
    print(f"wrote {out}")
    return 0


def _add_detector_args(sub, nmax_default=None):
    sub.add_argument("--transmission", type=_probability, default=0.7,
                     help="source-to-detector transmission in [0, 1]")
    sub.add_argument("--pixels", type=_positive_int, default=4, help="number of detector pixels")
    sub.add_argument("--crosstalk", type=_crosstalk_arg, default=0.025, help="crosstalk probability in [0, 1)")
    sub.add_argument("--nmax", type=_non_negative_int, default=nmax_default,
                     help="incident photon-number cutoff")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heraldsim",
        description="Photon-number feedforward simulator and time-tag analysis toolkit",
    )
    parser.add_argument("--version", action="version", version=f"heraldsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("matrix", help="build a detection matrix and write it as CSV")
    _add_detector_args(p, nmax_default=10)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_matrix)

    p = sub.add_parser("sweep", help="heralded g2(0) vs mean photon number")
    _add_detector_args(p)
    p.add_argument("--selection", required=True, help="accepted clicks, e.g. '1', '1,2', '2+', 'any'")
    p.add_argument("--family", choices=("poissonian", "thermal"), default="poissonian")
    p.add_argument("--mu-min", type=float, default=1e-4)
    p.add_argument("--mu-max", type=float, default=1.0)
    p.add_argument("--points", type=_positive_int, default=30)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("simulate", help="run the event-level Monte Carlo")
    p.add_argument("--config", help="sectioned key-value config file")
    p.add_argument("--mu", type=float, help="mean pairs per pulse (overrides config)")
    p.add_argument("--pulses", type=_non_negative_int, help="number of pulses (overrides config)")
    p.add_argument("--seed", type=_non_negative_int, help="RNG seed (overrides config)")
    p.add_argument("--selection", help="herald selection (overrides config)")
    p.add_argument("--threads", type=_positive_int, default=_default_threads(),
                   help="worker threads; output is independent of this value")
    p.add_argument("--out", required=True, help="tag file (.csv for text, binary otherwise)")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("analyze", help="correlate a tag file and integrate pulse peaks")
    p.add_argument("--tags", required=True, help="tag file written by simulate")
    p.add_argument("--pair", type=_parse_pair, default=(Channel.HBT_A, Channel.HBT_B),
                   help="channel pair, e.g. 'herald_trigger,hbt_a' (default 'hbt_a,hbt_b')")
    p.add_argument("--bin", type=parse_duration, default="250ps", help="histogram bin width")
    p.add_argument("--range", type=parse_duration, default="100ns", help="histogram half range")
    p.add_argument("--rep-period", type=parse_duration, default="12.5ns")
    p.add_argument("--halfwidth", type=parse_duration, default="1ns", help="peak integration half width")
    p.add_argument("--rep-rate", type=float, default=None,
                   help="normalization rate in Hz (default 1/rep_period)")
    p.add_argument("--duration", type=parse_duration, default=None,
                   help="acquisition duration override (ps)")
    p.add_argument("--out", required=True, help="output prefix for .hist.csv and .peaks.csv")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("thresholds", help="discriminator threshold-sweep count-rate surface")
    _add_detector_args(p)
    p.add_argument("--mu", type=float, default=1.0, help="mean photon number of the source")
    p.add_argument("--family", choices=("poissonian", "thermal"), default="poissonian")
    p.add_argument("--unit-amplitude", type=float, default=0.1, help="volts per fired pixel")
    p.add_argument("--noise-sigma", type=float, default=0.005, help="Gaussian height noise (volts)")
    p.add_argument("--baseline", type=float, default=0.0)
    p.add_argument("--rep-rate", type=float, default=80e6, help="pulse rate in Hz")
    p.add_argument("--low-min", type=float, default=0.04)
    p.add_argument("--low-max", type=float, default=0.46)
    p.add_argument("--low-steps", type=_positive_int, default=85)
    p.add_argument("--high-min", type=float, default=None)
    p.add_argument("--high-max", type=float, default=None)
    p.add_argument("--high-steps", type=_positive_int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_thresholds)

    return parser


_CLI_ERRORS = (
    ParameterError,
    FormatError,
    EmptyEnsembleError,
    UndefinedStatisticError,
    InconsistentRatesError,
    OSError,
)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _CLI_ERRORS as exc:
        print(f"heraldsim {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

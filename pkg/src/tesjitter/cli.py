"""
Command-line entry point: ``tesjitter {predict,sweep,simulate,analyze}``.

Exit codes: 0 success, 1 invalid configuration or arguments, 2 runtime or
file error, 3 partial results (photon-number classification unavailable).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .config import ConfigError, RunConfig, apply_overrides, load_config
from .pipeline import analyze_batch
from .pulse_sim import simulate_batch
from .report import (analysis_report, file_sha256, format_predict, measured_from_report,
                     parse_grid, predict_report, sweep_rows, write_analysis_outputs, write_csv,
                     write_json)
from .traceio import TraceFileError, read_batch, write_batch

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_PARTIAL = 0, 1, 2, 3

DEVICE_FLAGS = {
    "alpha": "alpha", "beta": "beta", "m_j": "m_j", "eta": "eta", "inductance": "inductance",
    "bandwidth": "amp_bandwidth", "photon_energy": "photon_energy", "t0": "t0", "r0": "r0",
    "volume": "volume",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--seed", type=int, metavar="U64", help="random seed (overrides config)")
    dev = common.add_argument_group("device overrides (SI numbers or e.g. '24 nH')")
    for flag in DEVICE_FLAGS:
        dev.add_argument("--" + flag.replace("_", "-"), dest=flag, metavar="Q")
    src = common.add_argument_group("source / shape overrides")
    src.add_argument("--mean-photons", dest="mean_photon_number", type=float, metavar="MU")
    src.add_argument("--noise-scale", dest="noise_scale", type=float, metavar="X")

    p = _Parser(prog="tesjitter", description="TES photon-timing jitter model, "
                "trace simulator and analysis pipeline.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    q = sub.add_parser("predict", parents=[common], help="analytic jitter prediction")
    q.add_argument("--out", metavar="PATH", help="also write the prediction as JSON")

    q = sub.add_parser("sweep", parents=[common], help="jitter envelope against inductance")
    q.add_argument("--grid", metavar="START:STOP:NUM",
                   help="inductance grid, e.g. '5nH:100nH:96' (default: the range, 51 points)")
    q.add_argument("--report", metavar="PATH", help="analysis report to overlay measured jitter")
    q.add_argument("--out", metavar="PATH", help="CSV output (default stdout)")

    q = sub.add_parser("simulate", parents=[common], help="write a simulated trace file")
    q.add_argument("--traces", type=int, default=10000, metavar="N")
    q.add_argument("--out", metavar="PATH", required=True)

    q = sub.add_parser("analyze", parents=[common], help="run the analysis on a trace file")
    q.add_argument("tracefile")
    q.add_argument("--out", metavar="DIR", default="analysis_out",
                   help="directory for report.json and the plot-data CSVs")
    q.add_argument("--thresholds", metavar="LIST", help="comma-separated fractions, e.g. 0.1,0.5,0.9")
    return p


def resolve_config(args) -> RunConfig:
    """Defaults, then the config file, then command-line flags."""
    cfg = load_config(args.config) if args.config else RunConfig()
    cfg = apply_overrides(cfg, "device", {f: getattr(args, k) for k, f in DEVICE_FLAGS.items()})
    cfg = apply_overrides(cfg, "source", {"mean_photon_number": args.mean_photon_number})
    cfg = apply_overrides(cfg, "shape", {"noise_scale": args.noise_scale})
    if args.seed is not None:
        cfg = apply_overrides(cfg, "seed", {"seed": args.seed})
    if getattr(args, "thresholds", None):
        try:
            fr = [float(x) for x in args.thresholds.split(",") if x.strip()]
        except ValueError:
            raise ConfigError(f"thresholds: cannot parse {args.thresholds!r}") from None
        cfg = apply_overrides(cfg, "analysis", {"thresholds": fr})
    return cfg


def cmd_predict(cfg, args) -> int:
    rep = predict_report(cfg)
    sys.stdout.write(format_predict(rep))
    if args.out:
        write_json(args.out, rep)
    return EXIT_OK


def cmd_sweep(cfg, args) -> int:
    if args.grid:
        grid = parse_grid(args.grid)
    else:
        lo, hi = cfg.ranges.interval("inductance")
        grid = np.linspace(lo, hi, 51) if hi > lo else np.array([lo])
    measured = None
    if args.report:
        with open(args.report, encoding="utf-8") as fh:
            measured = measured_from_report(json.load(fh))
    header, rows, _ = sweep_rows(cfg.ranges, grid, measured)
    if args.out:
        write_csv(args.out, header, rows)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        w.writerows(["" if v is None else repr(float(v)) for v in r] for r in rows)
    return EXIT_OK


def cmd_simulate(cfg, args) -> int:
    if args.traces < 1:
        raise ConfigError("traces: must be >= 1")
    batch = simulate_batch(cfg.source, cfg.shape, cfg.device, cfg.digitizer, args.traces)
    write_batch(args.out, batch)
    prov = batch.provenance
    print(f"wrote {len(batch)} traces to {args.out} (seed {prov['seed']}, "
          f"noise RMS {prov['noise_rms']:.4g}, clipped traces {prov['clipped_traces']})")
    return EXIT_OK


def cmd_analyze(cfg, args) -> int:
    batch = read_batch(args.tracefile, cfg.digitizer.pre_trigger)
    res = analyze_batch(batch, cfg.analysis, cfg.device.photon_energy)
    rep = analysis_report(cfg, batch, res, file_sha256(args.tracefile))
    paths = write_analysis_outputs(args.out, rep, res, batch.dt)
    for path in paths:
        print(path)
    if res.partial:
        print("partial report: " + "; ".join(res.notes), file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


COMMANDS = {"predict": cmd_predict, "sweep": cmd_sweep, "simulate": cmd_simulate,
            "analyze": cmd_analyze}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except (ConfigError, ValueError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"cannot read configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"invalid argument: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (TraceFileError, OSError) as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

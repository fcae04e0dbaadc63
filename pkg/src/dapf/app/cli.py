"""``dapf`` command-line entry point.

Exit status is 0 on success. On failure a single line
``error: <ErrorClass>: <message>`` goes to stderr and the status is 1
(2 for usage errors, as argparse does).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from ..errors import DapfError
from .config import PipelineConfig
from . import pipeline


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dapf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, help_ in (("ingest", "build the canonical frame from per-source CSVs"),
                        ("synth", "write a synthetic frame with ground-truth sidecars"),
                        ("backtest", "rolling weekly retraining and forecasting"),
                        ("superstats", "detrending, volatility and q-Gaussian analysis"),
                        ("report", "yearly NLL/MAE/SMAPE table from forecast.csv")):
        p = sub.add_parser(verb, help=help_)
        p.add_argument("--config", required=True, help="key = value configuration file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--jobs", type=int, default=None, help="worker processes for folds")
        p.add_argument("-v", "--verbose", action="store_true")
        if verb == "report":
            p.add_argument("--reference-gate", action="store_true",
                           help="check MAE is within a factor 3 of the reference yearly values")
    return parser


def run(args: argparse.Namespace) -> int:
    cfg = PipelineConfig.from_file(args.config, seed=args.seed, jobs=args.jobs)
    if args.verb == "ingest":
        frame = pipeline.cmd_ingest(cfg)
        print(f"wrote {cfg.path('frame')} ({len(frame)} rows, {frame.n_valid} valid)")
    elif args.verb == "synth":
        print(f"wrote {pipeline.cmd_synth(cfg)}")
    elif args.verb == "backtest":
        fc = pipeline.cmd_backtest(cfg)
        print(f"wrote {cfg.out / 'forecast.csv'} ({len(fc)} hours)")
    elif args.verb == "superstats":
        summary = pipeline.cmd_superstats(cfg)
        print(json.dumps(summary["fits"], indent=2, default=str))
    elif args.verb == "report":
        report, gate = pipeline.cmd_report(cfg, reference_gate=args.reference_gate)
        print(report.to_string(index=False, float_format=lambda v: f"{v:.2f}"))
        if gate is not None:
            print("reference gate: " + ", ".join(f"{y}={'ok' if ok else 'FAIL'}"
                                              for y, ok in gate.items()))
            if gate and not all(gate.values()):
                print("error: GateError: MAE outside a factor 3 of the reference", file=sys.stderr)
                return 1
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except (DapfError, OSError, ValueError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else ""
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

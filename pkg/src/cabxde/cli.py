"""``cabxde`` command line.

Exit codes: 0 success, 1 internal or numeric failure, 2 bad input/config.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import date

from . import pipeline
from .config import FUSION_MODES, SPLITS, PipelineConfig, load_config
from .errors import CabxdeError, ConfigError
from .metrics import format_table


def _iso(text: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO date: {text!r}") from None


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=_seed)
    common.add_argument("--fusion", choices=FUSION_MODES)
    common.add_argument("--date-format", dest="date_format")
    common.add_argument("--data", dest="dataset1", help="dataset 1 CSV (overrides config)")
    common.add_argument("--data2", dest="dataset2", help="dataset 2 CSV (overrides config)")
    common.add_argument("--out", dest="output_dir", help="artifact directory (overrides config)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="cabxde", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", parents=[common], help="parse, scale and split the input data")
    p = sub.add_parser("train", parents=[common], help="train a base model")
    p.add_argument("which", choices=("bilstm", "gbdt"))
    sub.add_parser("ensemble", parents=[common], help="fit reciprocal weights and stacking")
    p = sub.add_parser("evaluate", parents=[common], help="error report for one split")
    p.add_argument("--split", choices=SPLITS, default="test")
    p = sub.add_parser("predict", parents=[common], help="next-day forecast")
    p.add_argument("--source", choices=("dataset1", "dataset2"), default="dataset1")
    p = sub.add_parser("export-plot", parents=[common], help="predictions CSV and SVG chart")
    p.add_argument("--split", choices=SPLITS, default="test")
    p.add_argument("--from", dest="date_from", type=_iso)
    p.add_argument("--to", dest="date_to", type=_iso)
    return parser


def config_from_args(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    for key in ("dataset1", "dataset2", "date_format", "fusion", "output_dir"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    if args.seed is not None:
        cfg.apply_seed(args.seed)
    if cfg.dataset1 is None:
        raise ConfigError("no dataset1 given (use --config or --data)")
    return cfg.validate()


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = config_from_args(args)
        cfg.out.mkdir(parents=True, exist_ok=True)
        if args.command == "ingest":
            m = pipeline.ingest(cfg)
            for name, s in m["splits"].items():
                print(f"{name:<9} rows [{s['first_row']}, {s['stop_row']})  windows {s['n_windows']}")
            print(f"manifest digest {m['digest']}")
        elif args.command == "train":
            pipeline.train(cfg, args.which)
            print(f"wrote {cfg.out / (args.which + '.json')}")
        elif args.command == "ensemble":
            payload = pipeline.ensemble(cfg)
            e, w, s = payload["errors"], payload["weights"], payload["stacking"]
            print(f"Ebl={e['e_bl']:.6g} Exg={e['e_xg']:.6g}  w_bl={w['w_bl']:.4f} w_xg={w['w_xg']:.4f}")
            print(f"stacking: {s['intercept']:.6g} + {s['coef_bl']:.6g}*bilstm + {s['coef_xg']:.6g}*gbdt")
        elif args.command == "evaluate":
            results = pipeline.evaluate(cfg, args.split)
            print(format_table(results))
        elif args.command == "predict":
            print(json.dumps(pipeline.predict(cfg, args.source), indent=1))
        elif args.command == "export-plot":
            paths = pipeline.export_plot(cfg, args.split, args.date_from, args.date_to)
            print("\n".join(str(p) for p in paths))
    except CabxdeError as exc:
        print(f"cabxde: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"cabxde: error: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()

"""Command-line entry point: ``afpilot <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 model or shape mismatch,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness
from . import lstm as nn
from .config import ConfigError, ExperimentConfig, load_config
from .framing import RatioConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SHAPE = 3
EXIT_NUMERIC = 4

log = logging.getLogger("afpilot")


def _common(top: bool) -> argparse.ArgumentParser:
    # Global flags are accepted before or after the subcommand; the subcommand
    # copies suppress their defaults so they never overwrite top-level values.
    def d(value):
        return value if top else argparse.SUPPRESS

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=d(None), help="TOML config file (dotted keys, e.g. geometry.n_subcarriers = 64)")
    common.add_argument("--seed", type=int, default=d(None), help="master seed (overrides experiment.seed)")
    common.add_argument("--out", default=d("."), help="output directory")
    common.add_argument("--workers", type=int, default=d(1), help="worker processes for slot batches")
    common.add_argument("--verbose", "-v", action="store_true", default=d(False))
    common.add_argument("--ratio", default=d(None), help="pilot:data split Q:M (overrides ratio.* in the config)")
    return common


def _parser() -> argparse.ArgumentParser:
    common = _common(top=False)
    p = argparse.ArgumentParser(prog="afpilot", description=__doc__.splitlines()[0], parents=[_common(top=True)])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sweep", parents=[common], help="BER versus SNR for the configured schemes")
    s.add_argument("--slots", type=int)
    s.add_argument("--schemes", help="comma-separated subset of schemes")
    s.add_argument("--snr", help="comma-separated SNR grid in dB")

    r = sub.add_parser("ratio-sweep", parents=[common], help="BER versus SNR for several pilot:data ratios")
    r.add_argument("--ratios", default="4:8,6:6", help="comma-separated Q:M pairs")
    r.add_argument("--slots", type=int)
    r.add_argument("--schemes")
    r.add_argument("--snr")

    g = sub.add_parser("gen-dataset", parents=[common], help="simulate predictor training examples")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--domain", choices=["AF", "TF"], default="AF")
    g.add_argument("--noisy-targets", action="store_true", help="keep noise on the target pilots")
    g.add_argument("--name", default="dataset.bin")

    t = sub.add_parser("train", parents=[common], help="train a virtual-pilot predictor")
    t.add_argument("--dataset", help="dataset file from gen-dataset; generated on the fly if omitted")
    t.add_argument("--domain", choices=["AF", "TF"], default="AF")
    t.add_argument("--epochs", type=int)
    t.add_argument("--name", default="model.bin")

    e = sub.add_parser("eval-predictor", parents=[common], help="compare a model against simple extrapolators")
    e.add_argument("--model", required=True)
    e.add_argument("--count", type=int, default=500)
    e.add_argument("--snr", type=float)

    sub.add_parser("inspect-channel", parents=[common], help="one realization with transform and AR checks")
    return p


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _build_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.ratio:
        try:
            r = RatioConfig.parse(args.ratio)
        except ValueError as exc:
            raise ConfigError(f"bad ratio {args.ratio!r}") from exc
        updates["pilot_count"], updates["data_count"] = r.pilot_count, r.data_count
    if getattr(args, "slots", None) is not None:
        updates["slots"] = args.slots
    if getattr(args, "schemes", None):
        updates["schemes"] = tuple(s.strip() for s in args.schemes.split(",") if s.strip())
    if getattr(args, "snr", None) and isinstance(args.snr, str):
        updates["snr_db"] = _floats(args.snr)
    try:
        return replace(cfg, **updates)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _progress(done, total):
    log.info("slots %d/%d", done, total)


def _run(args) -> int:
    cfg = _build_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.command == "sweep":
        res = harness.run_sweep(cfg, args.workers, progress=_progress)
        res.write(out, "sweep")
        sys.stdout.write(res.to_csv())
    elif args.command == "ratio-sweep":
        try:
            ratios = [RatioConfig.parse(r) for r in args.ratios.split(",")]
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        res = harness.run_ratio_sweep(cfg, ratios, args.workers, progress=_progress)
        res.write(out, "ratio_sweep")
        sys.stdout.write(res.to_csv())
    elif args.command == "gen-dataset":
        data = harness.gen_dataset(cfg, args.count, args.domain, clean_targets=not args.noisy_targets)
        path = out / args.name
        harness.save_dataset(data, path)
        print(f"wrote {len(data)} examples to {path}")
    elif args.command == "train":
        data = harness.load_dataset(args.dataset) if args.dataset else None
        if data is not None and (data.q, data.m, data.n) != (cfg.pilot_count, cfg.data_count, cfg.n_subcarriers):
            raise nn.ShapeError("dataset shape does not match the configured ratio")
        domain = data.meta.get("domain", args.domain) if data is not None else args.domain
        params = harness.train_predictor(cfg, domain, data, epochs=args.epochs)
        path = out / args.name
        nn.save_model(params, path)
        print(f"saved model to {path}; final loss {params.loss_history[-1] if params.loss_history else float('nan'):.4e}")
    elif args.command == "eval-predictor":
        params = nn.load_model(args.model)
        report = harness.eval_predictor(cfg, params, args.count, args.snr)
        (out / "eval_predictor.json").write_text(json.dumps(report, indent=2, sort_keys=True))
        print(json.dumps(report, indent=2, sort_keys=True))
    elif args.command == "inspect-channel":
        report = harness.inspect_channel(cfg, args.seed)
        text = json.dumps(report, indent=2, sort_keys=True)
        (out / "inspect_channel.json").write_text(text)
        print(text)
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return _run(args)
    except nn.ShapeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (nn.DivergenceError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

"""``obs-impact`` command line: gen | pretrain | train | eval | explain | fidelity."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, RunConfig, from_mapping, load_config
from .neuralcore import CheckpointError, TrainingError
from .pipeline import PipelineError, Run, generate
from .synthdata import DatasetFormatError

COMMANDS = ("gen", "pretrain", "train", "eval", "explain", "fidelity")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="obs-impact", description="Observation impact analysis on a synthetic GNN forecast pipeline.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--seed", type=int, help="master seed (data, init, shuffling)")
    p.add_argument("--method", choices=("sa", "gradcam", "lrp"), help="explanation method for explain")
    p.add_argument("--fraction", type=float, action="append", help="occlusion fraction for fidelity (repeatable)")
    p.add_argument("--no-pretrain", action="store_true", help="train the vanilla model from scratch")
    p.add_argument("--out", help="output directory")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key] = value
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.out is not None:
        overrides["out"] = args.out
    if args.method is not None:
        overrides["method"] = args.method
    if args.fraction:
        overrides["fractions"] = ",".join(repr(f) for f in args.fraction)
    return from_mapping(overrides, cfg) if overrides else cfg


def run_command(cfg: RunConfig, args) -> str:
    if args.command == "gen":
        train, test = generate(cfg)
        return f"wrote {train.n_nodes} train and {test.n_nodes} test nodes to {cfg.data_dir} (seed={cfg.seed})"
    run = Run(cfg)
    if args.command == "pretrain":
        run.pretrain()
        return f"wrote {cfg.out_dir / 'pretrain.ckpt'}"
    if args.command == "train":
        run.train(use_pretrained=not args.no_pretrain)
        return f"wrote {cfg.out_dir / 'model.ckpt'}"
    if args.command == "eval":
        m = run.evaluate()
        lines = [f"{name}: rmse={rmse:.4g} mae={mae:.4g} r2={r2} ev={ev}" for name, rmse, mae, r2, ev in m.rows()]
        return "\n".join(lines)
    if args.command == "explain":
        rep = run.explain()
        return "\n".join(f"{k.value}: {v:.6g}" for k, v in rep.by_kind.items())
    results, baseline = run.fidelity()
    return "\n".join(f"{r.method} f={r.fraction}: fid+={r.fidelity_plus:.6g} fid-={r.fidelity_minus:.6g}" for r in results + baseline)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        print(run_command(cfg, args))
    except ConfigError as exc:
        print(f"obs-impact: config error: {exc}", file=sys.stderr)
        return 2
    except (PipelineError, DatasetFormatError, CheckpointError, TrainingError, ValueError, OSError) as exc:
        print(f"obs-impact: {args.command} failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

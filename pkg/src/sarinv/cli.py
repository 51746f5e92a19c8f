"""Command-line entry point: ``sarinv <subcommand> [--config FILE] [--set key=value ...]``.

Exit codes: 0 success, 2 configuration error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig

SUBCOMMANDS = ["render", "dataset", "train-agent", "eval", "baseline", "compare", "behavioral", "ablate"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    p = _Parser(prog="sarinv", description="SAR view-angle inversion lab")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("render", parents=[common], help="render one image")
    r.add_argument("--alpha", type=float, required=True)
    r.add_argument("--beta", type=float, required=True)
    r.add_argument("--out", required=True, help="output .pgm path")

    d = sub.add_parser("dataset", parents=[common], help="render a labelled dataset")
    kind = d.add_mutually_exclusive_group()
    kind.add_argument("--grid", action="store_true", help="35..70 x 0..355 step-5 grid")
    kind.add_argument("--distribution", action="store_true", help="discrete uniform angle distributions")
    d.add_argument("--out", help="output directory (default <out_dir>/dataset)")

    sub.add_parser("train-agent", parents=[common], help="train the Q-learning agent")
    e = sub.add_parser("eval", parents=[common], help="greedy evaluation of a checkpoint")
    e.add_argument("--checkpoint")
    b = sub.add_parser("baseline", parents=[common], help="run one comparison method")
    b.add_argument("--method", required=True, choices=["GA", "PSO", "DL", "Random"])
    sub.add_parser("compare", parents=[common], help="all methods on a shared test set")
    h = sub.add_parser("behavioral", parents=[common], help="error-by-step and action-phase tables")
    h.add_argument("--checkpoint")
    sub.add_parser("ablate", parents=[common], help="state and reward ablations")
    return p


def resolve_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    return cfg.override(args.overrides).validate()


def write_seed_log(cfg: ExperimentConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"{k}={v}\n" for k, v in cfg.values.items() if k.endswith("seed")]
    (out / "seeds.txt").write_text("".join(lines))


def _dispatch(args, cfg: ExperimentConfig) -> None:
    from . import harness
    from .fileio import save_image
    from .geometry import ViewAngles
    from .renderer import render

    cmd = args.command
    if cmd == "render":
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        save_image(render(cfg.scene(), ViewAngles(args.alpha, args.beta), cfg.render_config()), out)
        cfg.save(out.with_suffix(".config.txt"))
        return
    if cmd == "dataset":
        if args.grid:
            cfg = cfg.override(["dataset.kind=grid"])
        elif args.distribution:
            cfg = cfg.override(["dataset.kind=distribution"])
        out = Path(args.out) if args.out else Path(cfg["out_dir"]) / "dataset"
        rows = harness.gen_dataset(cfg, out)
        write_seed_log(cfg, out)
        print(f"{len(rows)} images -> {out / 'manifest.csv'}")
        return

    out = Path(cfg["out_dir"])
    write_seed_log(cfg, out)
    if cmd == "train-agent":
        ckpt, curve = harness.run_train(cfg)
        print(f"trained {len(curve)} episodes -> {ckpt}")
    elif cmd == "eval":
        rec, _ = harness.run_eval(cfg, checkpoint=args.checkpoint)
        print(rec)
    elif cmd == "baseline":
        print(harness.run_baseline(cfg, args.method))
    elif cmd == "compare":
        for row in harness.run_comparison(cfg):
            print(f"{row['method']:>7s}  MAE_mean={row['MAE_mean']:.3f}  outliers={row['outliers']}  "
                  f"runtime_s={row['runtime_s']:.4f}")
    elif cmd == "behavioral":
        steps, _ = harness.run_behavioral(cfg, checkpoint=args.checkpoint)
        print(f"{len(steps)} step rows -> {out / 'mae_vs_step.csv'}")
    elif cmd == "ablate":
        for row in harness.run_ablation(cfg):
            print(f"{row['table']:>6s}  {row['variant']:<18s} MAE_mean={row['MAE_mean']:.3f}  "
                  f"outliers={row['outliers']}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        _dispatch(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report and map to the runtime-error exit code
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

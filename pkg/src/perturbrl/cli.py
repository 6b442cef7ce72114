"""Command-line entry point.

Exit codes: 0 on success, 1 on runtime failure (diverged run, missing or
incompatible checkpoint, I/O error), 2 on configuration or usage errors.
Values resolve as defaults < config file < command-line flags, and the fully
resolved config is echoed into the run manifest.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import config as cfg
from . import harness, plotting, streams
from .agents import agent_kinds
from .disturbance import DisturbanceSpec, Kind, Site
from .errors import ConfigError, DomainError, PerturbRLError, UsageError


def _add_common(parser):
    parser.add_argument("--config", help="config file (key = value lines)")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config value; repeatable")
    parser.add_argument("--task", help="cartpole or quadrotor")
    parser.add_argument("--agent", help=f"agent kind: {', '.join(agent_kinds())}")
    parser.add_argument("--seed", type=int,
                        help=f"base seed (default from ${streams.SEED_ENV_VAR}, else 0)")
    parser.add_argument("--steps", type=int, help="training steps per run")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--workers", type=int, help="evaluation worker pool size")
    parser.add_argument("--checkpoint", help="agent checkpoint path")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="perturbrl",
        description="Robustness benchmarking for continuous-control agents "
                    "under injected disturbances.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in [
            ("train", "train agents and write checkpoints plus a learning curve"),
            ("eval", "evaluate a checkpoint under one disturbance setting"),
            ("sweep", "evaluate a checkpoint across a range of disturbance levels"),
            ("heatmap", "train at several noise levels and cross-test every pair"),
            ("ablate", "run one ablation grid over its shared test conditions"),
            ("plot", "render figures from persisted results"),
            ("validate-config", "type-check a config and echo the resolved values")]:
        p = sub.add_parser(name, help=doc)
        _add_common(p)
        if name == "plot":
            p.add_argument("--results", help="directory written by a previous run")
            p.add_argument("--type", dest="plot_type", default="sweep",
                           choices=["curve", "sweep", "heatmap"])
    return parser


def _resolve(args) -> dict:
    file_cfg = cfg.parse(args.config) if args.config else {}
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = cfg.parse_value(value)
    flag_map = {"task": "task", "agent": "agent", "seed": "seed",
                "steps": "train.steps", "out": "out.dir", "workers": "workers",
                "checkpoint": "checkpoint.path"}
    for attr, key in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    resolved = cfg.resolve(file_cfg, overrides)
    if "seed" not in file_cfg and "seed" not in overrides:
        resolved["seed"] = streams.default_seed()
    problems = cfg.validate(resolved)
    if problems:
        raise ConfigError("invalid config:\n  " + "\n  ".join(problems))
    return resolved


def _disturbance(conf, prefix="disturbance"):
    kind = Kind(conf[f"{prefix}.kind"])
    site = Site(conf[f"{prefix}.site"])
    from .env import make_env
    dim = make_env(conf["task"]).site_dims()[site]
    return DisturbanceSpec(site=site, kind=kind, level=conf[f"{prefix}.level"],
                           dim=dim, onset_step=conf["disturbance.onset_step"],
                           width_steps=conf["disturbance.width_steps"],
                           period_steps=conf["disturbance.period_steps"])


def _train_disturbance(conf):
    if conf["train.disturbance.site"] and conf["train.disturbance.kind"]:
        spec = _disturbance(conf, "train.disturbance")
        return spec if spec.kind is not Kind.NONE else None
    return None


def _load_agent(conf):
    path = conf["checkpoint.path"]
    if not path:
        raise ConfigError("a checkpoint is required; pass --checkpoint")
    if not os.path.exists(path):
        raise UsageError(f"checkpoint not found: {path}")
    return harness.load_agent(path, conf["task"])


def cmd_train(conf):
    outdir = conf["out.dir"]
    os.makedirs(outdir, exist_ok=True)
    stop = conf["train.stop_return"] if conf["train.stop_return"] >= 0 else None
    curves = []
    any_failed = False
    for seed in cfg.seeds_of(conf):
        ckpt = os.path.join(outdir, f"{conf['agent']}_seed{seed}.ckpt")
        _, curve, failed = harness.train(
            conf["task"], conf["agent"], seed, conf["train.steps"],
            cfg.hyper_overrides(conf), _train_disturbance(conf),
            eval_interval=conf["train.eval_interval"],
            eval_episodes=conf["train.eval_episodes"],
            stop_return=stop, checkpoint_path=ckpt)
        status = "FAILED (diverged)" if failed else f"final return {curve[-1][1]:.3f}"
        print(f"seed {seed}: {status}; checkpoint {ckpt}")
        any_failed |= failed
        if not failed:
            curves.append(curve)
    if curves:
        harness.write_curve(os.path.join(outdir, "learning_curve.csv"),
                            harness.aggregate_curves(curves))
    harness.persist([], outdir, conf)
    return 1 if any_failed and not curves else 0


def cmd_eval(conf):
    agent = _load_agent(conf)
    spec = _disturbance(conf)
    summary = harness.evaluate(agent, conf["task"], spec,
                               n=conf["eval.episodes"], seed=conf["seed"])
    rec = harness.EvalRecord.from_summary(
        summary, task=conf["task"], agent=agent.kind, seed=conf["seed"],
        site=spec.site.value, kind=spec.kind.value, train_level=0.0,
        test_level=spec.level, param_overrides="")
    harness.persist([rec], conf["out.dir"], conf)
    print(f"return {summary.mean_return:.4f} +- {summary.std_return:.4f}  "
          f"rmse {summary.mean_rmse:.4f} +- {summary.std_rmse:.4f}  "
          f"mean length {summary.mean_len:.1f}  ({summary.n} episodes)")
    return 0


def cmd_sweep(conf):
    agent = _load_agent(conf)
    levels = conf["sweep.levels"]
    if not levels:
        raise ConfigError("sweep.levels must be set for the sweep command")
    records = harness.sweep_1d(
        agent, conf["task"], Site(conf["disturbance.site"]),
        Kind(conf["disturbance.kind"]), list(levels),
        n=conf["eval.episodes"], seed=conf["seed"], workers=conf["workers"])
    harness.persist(records, conf["out.dir"], conf)
    for rec in records:
        s = harness.EvalSummary(rec.returns, rec.lengths, rec.rmses)
        print(f"level {rec.test_level:g}: return {s.mean_return:.4f} "
              f"rmse {s.mean_rmse:.4f}")
    return 0


def cmd_heatmap(conf):
    train_levels, test_levels = conf["heatmap.train_levels"], conf["heatmap.test_levels"]
    if not train_levels or not test_levels:
        raise ConfigError("heatmap.train_levels and heatmap.test_levels must be set")
    records = harness.heatmap(
        conf["task"], conf["agent"], Site(conf["disturbance.site"]),
        list(train_levels), list(test_levels), seed=conf["seed"],
        train_steps=conf["train.steps"], hyper=cfg.hyper_overrides(conf),
        n=conf["eval.episodes"], workers=conf["workers"],
        checkpoint_dir=conf["out.dir"])
    harness.persist(records, conf["out.dir"], conf)
    print(f"{len(records)} cells written to {conf['out.dir']}")
    return 0


def cmd_ablate(conf):
    records = harness.ablate(conf["ablate.kind"], conf["task"], conf["seed"],
                             conf["train.steps"], conf["eval.episodes"],
                             cfg.hyper_overrides(conf))
    harness.persist(records, conf["out.dir"], conf)
    for rec in records:
        if rec.failed:
            print(f"{rec.agent:18s} {rec.kind:28s} FAILED")
            continue
        s = harness.EvalSummary(rec.returns, rec.lengths, rec.rmses)
        print(f"{rec.agent:18s} {rec.kind:28s} rmse {s.mean_rmse:.4f} "
              f"+- {s.std_rmse:.4f}")
    return 0


def cmd_plot(conf, args):
    if not args.results:
        raise ConfigError("plot requires --results DIR")
    out = conf["plot.out"] or os.path.join(args.results, args.plot_type + ".svg")
    if args.plot_type == "curve":
        import csv as _csv
        with open(os.path.join(args.results, "learning_curve.csv"), newline="") as f:
            rows = [(int(r[0]), float(r[1]), float(r[2]), int(r[3]))
                    for r in list(_csv.reader(f))[1:]]
        plotting.curve(out, rows)
    else:
        records = harness.load(args.results)
        if args.plot_type == "sweep":
            plotting.sweep(out, records)
        else:
            plotting.heatmap(out, records)
    print(f"wrote {out}")
    return 0


def cmd_validate(conf):
    print(cfg.format_resolved(conf))
    print("config OK")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate-config":
            # report every problem at once instead of failing on the first
            file_cfg = cfg.parse(args.config) if args.config else {}
            try:
                conf = _resolve(args)
            except ConfigError as exc:
                resolved = cfg.resolve(file_cfg)
                print(cfg.format_resolved(resolved))
                print(str(exc), file=sys.stderr)
                return 2
            return cmd_validate(conf)
        conf = _resolve(args)
        if args.command == "train":
            return cmd_train(conf)
        if args.command == "eval":
            return cmd_eval(conf)
        if args.command == "sweep":
            return cmd_sweep(conf)
        if args.command == "heatmap":
            return cmd_heatmap(conf)
        if args.command == "ablate":
            return cmd_ablate(conf)
        if args.command == "plot":
            return cmd_plot(conf, args)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (UsageError, DomainError, PerturbRLError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

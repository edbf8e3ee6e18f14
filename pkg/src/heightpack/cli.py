"""Command line for the heightpack tools.

Exit status: 0 on success, 1 on usage errors, 2 on runtime errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from . import rl
from .env import ConfigError, UsageError
from .heuristics import HEURISTICS, PackingResult, replay
from .neural import load_checkpoint
from .plots import svg_boards, svg_curves

EVAL_FIELDS = ("experiment", "episodes", "mean_reward", "mean_terminal_reward",
               "mean_episode_length", "placement_rate", "coverage_0", "coverage_1")


class CliUsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliUsageError(f"{self.prog}: error: {message}\n\n{self.format_help()}")


def _eval_csv(label: str, m: rl.EvalMetrics) -> str:
    row = [label, m.episodes, m.mean_reward, m.mean_terminal_reward, m.mean_episode_length,
           m.placement_rate, *m.coverage]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(EVAL_FIELDS[:len(row)])
    writer.writerow([f"{v:.6f}" if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_heuristic(args) -> int:
    config = ex.resolve_experiment(args.experiment)
    fn = HEURISTICS[args.heuristic]
    if args.heuristic == "maxrect-bl":
        result = fn(config.boards, config.catalogue, args.strategy)
    else:
        result = fn(config.boards, config.catalogue)
    env, _ = replay(config.boards, config.catalogue, result.placements)
    print(f"{config.label} {result.method}")
    print(env.render())
    print()
    print("coverage " + "/".join(f"{c:.2f}" for c in result.coverage))
    print(f"placement_rate {result.placement_rate:.6f}")
    skipped = {}
    for pid in result.skipped:
        label = config.catalogue[pid].label
        skipped[label] = skipped.get(label, 0) + 1
    print("skipped " + (" ".join(f"{k}x{v}" for k, v in skipped.items()) or "none"))
    print(f"total_reward {result.total_reward:g}")
    if args.out:
        out = _out_dir(args)
        stem = f"{config.label}_{result.method.replace('/', '_')}"
        (out / f"{stem}.json").write_text(result.to_json() + "\n")
        (out / f"{stem}.txt").write_text("\n".join(result.records()) + "\n")
        if args.plot:
            (out / f"{stem}.svg").write_text(svg_boards(env, title=f"{config.label} {result.method}"))
    return 0


def cmd_train(args) -> int:
    config = ex.resolve_experiment(args.experiment)
    seed = config.seed if args.seed is None else args.seed
    tc = ex.train_config_for(config, args.agent, seed, args.steps)
    out = _out_dir(args)
    stem = f"{config.label}_{args.agent}_seed{seed}"
    result = rl.train(config.env_factory(), tc, log_path=out / f"{stem}.jsonl",
                      checkpoint_path=out / f"{stem}.ckpt",
                      checkpoint_every=args.checkpoint_every)
    if args.plot:
        curve = {f"{args.agent}/seed{seed}": [(e["steps"], e["mean_reward"]) for e in result.evaluations]}
        (out / f"{stem}_reward.svg").write_text(svg_curves(curve, f"{config.label} evaluation reward", "reward"))
        curve = {f"{args.agent}/seed{seed}": [(e["steps"], e["mean_episode_length"]) for e in result.evaluations]}
        (out / f"{stem}_length.svg").write_text(svg_curves(curve, f"{config.label} episode length", "steps"))
    final = result.final
    print(f"trained {args.agent} on {config.label}: {result.steps} steps, {result.episodes} episodes")
    print(f"log {out / (stem + '.jsonl')}")
    print(f"checkpoint {out / (stem + '.ckpt')}")
    if final:
        metrics = rl.EvalMetrics(**{k: final[k] for k in rl.EvalMetrics.__dataclass_fields__})
        print(_eval_csv(config.label, metrics), end="")
    return 0


def cmd_evaluate(args) -> int:
    config = ex.resolve_experiment(args.experiment)
    params = load_checkpoint(args.checkpoint)
    probe = config.make_env()
    if params.obs_size != probe.obs_size or params.head_sizes != probe.action_sizes:
        raise CliUsageError(f"checkpoint does not match experiment {config.label}")
    seed = config.seed if args.seed is None else args.seed
    metrics = rl.evaluate_policy(config.env_factory(), params, args.episodes,
                                 args.deterministic, np.random.default_rng(seed))
    text = _eval_csv(config.label, metrics)
    print(text, end="")
    if args.out:
        (_out_dir(args) / f"eval_{config.label}.csv").write_text(text)
    return 0


def cmd_replay(args) -> int:
    config = ex.resolve_experiment(args.experiment)
    result = PackingResult.from_json(Path(args.result).read_text())
    env, steps = replay(config.boards, config.catalogue, result.placements)
    invalid = 0
    for (piece, board, x, y), step in zip(result.placements, steps):
        invalid += step.reward == -8
        print(f"P{piece + 1} board={board} x={x} y={y} reward={step.reward:g} {step.info['event']}")
    print(env.render())
    print(f"invalid {invalid}")
    return 0


def cmd_report(args) -> int:
    ids = ["1", "2", "3", "4", "5", "6"] if args.experiment == ["all"] else args.experiment
    agents = args.agent or ["ppo", "a2c"]
    out = _out_dir(args)
    reports = []
    for exp in ids:
        config = ex.resolve_experiment(exp)
        seeds = list(range(args.seeds)) if args.seeds is not None else config.seeds
        report = ex.run_experiment(config, agents, seeds=seeds, steps=args.steps,
                                   out_dir=out, jobs=args.jobs)
        print(f"{config.label}: {report.wall_clock:.1f}s wall clock", file=sys.stderr)
        reports.append(report)
        if args.plot:
            for key, ylabel in (("mean_reward", "reward"), ("mean_episode_length", "episode length")):
                svg = svg_curves(ex.learning_curves(report, key), f"{config.label} {ylabel}", ylabel)
                (out / f"{config.label}_{key}.svg").write_text(svg)
    rows = ex.aggregate(reports)
    (out / "summary.csv").write_text(ex.rows_to_csv(rows))
    print(ex.format_table(rows))
    print(f"summary {out / 'summary.csv'}")
    return 0


def cmd_env_demo(args) -> int:
    config = ex.resolve_experiment(args.experiment)
    env = config.make_env()
    rng = np.random.default_rng(config.seed if args.seed is None else args.seed)
    env.reset()
    total, t = 0.0, 0
    while True:
        action = tuple(int(rng.integers(n)) for n in env.action_sizes)
        step = env.step(action)
        total += step.reward
        t += 1
        print(f"t={t} action={action} reward={step.reward:g} {step.info['event']}")
        if step.done or (args.steps and t >= args.steps):
            break
    print(env.render())
    print(f"return {total:g} placement_rate {env.placement_rate:.6f}")
    if args.out and args.plot:
        (_out_dir(args) / f"{config.label}_demo.svg").write_text(svg_boards(env, title="random policy"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="heightpack", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, experiment=True):
        if experiment:
            p.add_argument("--experiment", default="1",
                           help="experiment id 1-6, 'mini', or a YAML config path")
        p.add_argument("--seed", type=int, default=None, help="random seed")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--plot", action="store_true", help="also write SVG files")

    p = sub.add_parser("heuristic", help="run a packing heuristic")
    common(p)
    p.add_argument("--heuristic", choices=sorted(HEURISTICS), default="maxrect-bl")
    p.add_argument("--strategy", choices=["none", "desc-height", "asc-height"], default="none")
    p.set_defaults(func=cmd_heuristic)

    p = sub.add_parser("train", help="train a PPO or A2C agent")
    common(p)
    p.add_argument("--agent", choices=sorted(rl.AGENTS), default="ppo")
    p.add_argument("--steps", type=int, default=None, help="environment step budget")
    p.add_argument("--checkpoint-every", type=int, default=None, help="updates between checkpoints")
    p.set_defaults(func=cmd_train, out="runs")

    p = sub.add_parser("evaluate", help="evaluate a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--deterministic", action="store_true", help="argmax actions instead of sampling")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("replay", help="replay a saved heuristic result through the environment")
    common(p)
    p.add_argument("--result", required=True, help="PackingResult JSON written by 'heuristic --out'")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("report", help="multi-seed runs and the comparison table")
    common(p, experiment=False)
    p.add_argument("--experiment", nargs="+", default=["all"], help="ids, 'mini', config paths or 'all'")
    p.add_argument("--agent", nargs="+", choices=sorted(rl.AGENTS), default=None)
    p.add_argument("--seeds", type=int, default=None, help="number of seeds (0..N-1)")
    p.add_argument("--steps", type=int, default=None, help="environment steps per seed")
    p.add_argument("--jobs", type=int, default=1, help="parallel seed workers")
    p.set_defaults(func=cmd_report, out="reports")

    p = sub.add_parser("env-demo", help="play one random-policy episode")
    common(p)
    p.add_argument("--steps", type=int, default=None, help="stop after this many steps")
    p.set_defaults(func=cmd_env_demo)
    return parser


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CliUsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (ConfigError, UsageError, ValueError, FileNotFoundError) as exc:
        print(f"heightpack: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - top-level boundary
        print(f"heightpack: runtime error: {exc!r}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()

"""The six benchmark setups, multi-seed runs and comparison reports.

Config files are YAML with this schema (all keys except ``boards`` and
``pieces`` optional)::

    name: exp2
    boards:
      - {width: 8, length: 8, height_limit: 120}
      - {width: 8, length: 8, height_limit: 80}
    pieces:                       # footprint length x width cells, height in cm
      - {name: P1, length: 2, width: 2, height: 115, quantity: 8}
      - ...
    max_steps: null               # default: 4 x total pieces
    seed: 0                       # base seed for single runs
    seeds: [0, 1, 2]              # seeds for multi-seed runs
    train: {total_steps: 500000}  # TrainConfig overrides
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Sequence

import yaml

from . import rl
from .env import (CATALOGUE_FOOTPRINTS, CATALOGUE_HEIGHTS, BoardSpec, ConfigError, PackingEnv,
                  PieceType, make_catalogue)
from .heuristics import OrderingStrategy, PackingResult, run_bfdh, run_maxrect_bl, run_nfdh

# id -> (width, length, height board 0, height board 1)
BOARD_TABLE = {
    1: (8, 8, 100, 100),
    2: (8, 8, 120, 80),
    3: (8, 8, 80, 120),
    4: (7, 7, 100, 100),
    5: (7, 7, 120, 80),
    6: (7, 7, 80, 120),
}
# id -> quantities of P1..P4
PIECE_TABLE = {
    1: (8, 8, 16, 16),
    2: (8, 8, 16, 16),
    3: (8, 8, 16, 16),
    4: (6, 6, 9, 9),
    5: (6, 6, 9, 9),
    6: (6, 6, 9, 9),
}
UNIFORM_HEIGHT = 100.0
UNIFORM_EXPERIMENTS = (1, 4)

# full-scale reference fill rates (mean %, std %) per (experiment, agent)
REFERENCE_FILL_RATES = {
    (1, "ppo"): (96.0, 3.0), (1, "a2c"): (88.0, 6.0),
    (2, "ppo"): (96.0, 5.0), (2, "a2c"): (34.0, 23.0),
    (3, "ppo"): (94.0, 5.0), (3, "a2c"): (74.0, 5.0),
    (4, "ppo"): (97.0, 3.0), (4, "a2c"): (82.0, 8.0),
    (5, "ppo"): (97.0, 3.0), (5, "a2c"): (88.0, 4.0),
    (6, "ppo"): (97.0, 4.0), (6, "a2c"): (81.0, 8.0),
}

DESK_STEPS = 500_000


@dataclass
class ExperimentConfig:
    id: int | str
    boards: tuple[BoardSpec, ...]
    catalogue: tuple[PieceType, ...]
    max_steps: int | None = None
    train: dict = field(default_factory=dict)
    seeds: list[int] = field(default_factory=lambda: list(range(10)))
    seed: int = 0
    uniform_height: bool = False
    name: str = ""

    def make_env(self) -> PackingEnv:
        return PackingEnv(self.boards, self.catalogue, self.max_steps)

    def env_factory(self):
        # partial objects pickle, so factories can cross process boundaries
        return partial(PackingEnv, self.boards, self.catalogue, self.max_steps)

    @property
    def label(self) -> str:
        return self.name or f"exp{self.id}"

    def to_dict(self) -> dict:
        return {
            "name": self.label,
            "id": self.id,
            "boards": [{"width": b.width, "length": b.length, "height_limit": b.height_limit}
                       for b in self.boards],
            "pieces": [{**({"name": p.name} if p.name else {}), "length": p.length,
                        "width": p.width, "height": p.height, "quantity": p.initial_qty}
                       for p in self.catalogue],
            "max_steps": self.max_steps,
            "seed": self.seed,
            "seeds": list(self.seeds),
            "train": dict(self.train),
            "uniform_height": self.uniform_height,
        }

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def builtin_experiment(exp_id: int) -> ExperimentConfig:
    try:
        width, length, h0, h1 = BOARD_TABLE[int(exp_id)]
    except (KeyError, ValueError):
        raise ConfigError(f"unknown experiment id {exp_id!r}; expected 1..6") from None
    exp_id = int(exp_id)
    uniform = exp_id in UNIFORM_EXPERIMENTS
    heights = [UNIFORM_HEIGHT] * 4 if uniform else CATALOGUE_HEIGHTS
    return ExperimentConfig(
        id=exp_id,
        boards=(BoardSpec(width, length, h0), BoardSpec(width, length, h1)),
        catalogue=make_catalogue(CATALOGUE_FOOTPRINTS, heights, PIECE_TABLE[exp_id]),
        uniform_height=uniform,
    )


def mini_experiment() -> ExperimentConfig:
    """4x4 boards, uniform heights, quantities 2/2/4/4: a desk-scale learning check."""
    return ExperimentConfig(
        id="mini",
        boards=(BoardSpec(4, 4, UNIFORM_HEIGHT), BoardSpec(4, 4, UNIFORM_HEIGHT)),
        catalogue=make_catalogue(CATALOGUE_FOOTPRINTS, [UNIFORM_HEIGHT] * 4, (2, 2, 4, 4)),
        uniform_height=True,
        name="mini",
    )


def config_from_dict(data: dict) -> ExperimentConfig:
    try:
        boards = tuple(BoardSpec(int(b["width"]), int(b["length"]), float(b["height_limit"]))
                       for b in data["boards"])
        catalogue = tuple(
            PieceType(id=i, length=int(p["length"]), width=int(p["width"]),
                      height=float(p["height"]), initial_qty=int(p["quantity"]),
                      name=str(p.get("name", "")))
            for i, p in enumerate(data["pieces"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    train = dict(data.get("train") or {})
    unknown = set(train) - set(rl.TrainConfig.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown train keys: {sorted(unknown)}")
    return ExperimentConfig(
        id=data.get("id", data.get("name", "custom")),
        boards=boards,
        catalogue=catalogue,
        max_steps=data.get("max_steps"),
        train=train,
        seeds=list(data.get("seeds", range(10))),
        seed=int(data.get("seed", 0)),
        uniform_height=bool(data.get("uniform_height", False)),
        name=str(data.get("name", "")),
    )


def load_config(path) -> ExperimentConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return config_from_dict(data)


def resolve_experiment(spec: str | int) -> ExperimentConfig:
    """Experiment by id (1..6), ``mini``, or a YAML config path."""
    text = str(spec)
    if text == "mini":
        return mini_experiment()
    if text.isdigit():
        return builtin_experiment(int(text))
    if os.path.exists(text):
        return load_config(text)
    raise ConfigError(f"unknown experiment {spec!r}: use 1..6, 'mini' or a config path")


def train_config_for(config: ExperimentConfig, agent: str, seed: int,
                     steps: int | None = None, **extra) -> rl.TrainConfig:
    if agent not in rl.AGENTS:
        raise ConfigError(f"unknown agent {agent!r}; expected one of {sorted(rl.AGENTS)}")
    overrides = {"total_steps": DESK_STEPS, **config.train, "seed": seed, **extra}
    if steps is not None:
        overrides["total_steps"] = steps
    return rl.AGENTS[agent](**overrides)


def run_heuristics(config: ExperimentConfig, strategies: Sequence = tuple(OrderingStrategy),
                   level_heuristics: bool = True) -> dict[str, PackingResult]:
    results = {}
    for strategy in strategies:
        r = run_maxrect_bl(config.boards, config.catalogue, strategy)
        results[r.method] = r
    if level_heuristics:
        for fn in (run_bfdh, run_nfdh):
            r = fn(config.boards, config.catalogue)
            results[r.method] = r
    return results


def _seed_task(args):
    config, agent, seed, steps, out_dir = args
    summary_path = log_path = ckpt_path = None
    if out_dir is not None:
        run_dir = Path(out_dir) / config.label / agent
        run_dir.mkdir(parents=True, exist_ok=True)
        summary_path = run_dir / f"seed{seed}.json"
        if summary_path.exists():
            return json.loads(summary_path.read_text())
        log_path = run_dir / f"seed{seed}.jsonl"
        ckpt_path = run_dir / f"seed{seed}.ckpt"
    tc = train_config_for(config, agent, seed, steps)
    result = rl.train(config.env_factory(), tc, log_path=log_path, checkpoint_path=ckpt_path)
    summary = {
        "agent": agent,
        "seed": seed,
        "steps": result.steps,
        "episodes": result.episodes,
        "final": result.final,
        "best_placement_rate": result.best_placement_rate,
        "curve": [{k: e[k] for k in ("steps", "mean_reward", "mean_episode_length", "placement_rate")}
                  for e in result.evaluations],
    }
    if summary_path is not None:
        summary_path.write_text(json.dumps(summary, sort_keys=True))
    return summary


@dataclass
class RunReport:
    experiment: str
    exp_id: int | str
    agents: dict[str, list[dict]]
    heuristics: dict[str, PackingResult]
    uniform_height: bool = False
    wall_clock: float = 0.0

    def summary(self, agent: str, metric: str = "placement_rate") -> tuple[float, float | None, int]:
        values = [_seed_metric(s, metric) for s in self.agents.get(agent, [])]
        return _mean_std(values)


def _seed_metric(seed_summary: dict, metric: str) -> float:
    if metric == "best_placement_rate":
        return seed_summary["best_placement_rate"]
    final = seed_summary["final"]
    if metric.startswith("coverage_"):
        return final["coverage"][int(metric.rsplit("_", 1)[1])]
    return final[metric]


def _mean_std(values) -> tuple[float, float | None, int]:
    values = sorted(float(v) for v in values)
    n = len(values)
    if n == 0:
        return math.nan, None, 0
    mean = math.fsum(values) / n
    std = math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (n - 1)) if n >= 2 else None
    return mean, std, n


def run_experiment(config: ExperimentConfig, agents: Sequence[str] = ("ppo", "a2c"),
                   strategies: Sequence = tuple(OrderingStrategy), seeds: Sequence[int] | None = None,
                   steps: int | None = None, out_dir=None, jobs: int = 1) -> RunReport:
    """Train every agent on every seed and run the heuristics once.

    With ``out_dir`` each finished seed leaves a summary file; rerunning picks
    those up instead of training again.
    """
    seeds = list(config.seeds if seeds is None else seeds)
    if agents and not seeds:
        raise ConfigError("at least one seed is required")
    start = time.perf_counter()
    tasks = [(config, agent, seed, steps, out_dir) for agent in agents for seed in seeds]
    if jobs > 1 and len(tasks) > 1:
        import multiprocessing as mp
        with mp.get_context("spawn").Pool(jobs) as pool:
            summaries = pool.map(_seed_task, tasks)
    else:
        summaries = [_seed_task(t) for t in tasks]
    by_agent: dict[str, list[dict]] = {a: [] for a in agents}
    for s in summaries:
        by_agent[s["agent"]].append(s)
    return RunReport(
        experiment=config.label,
        exp_id=config.id,
        agents=by_agent,
        heuristics=run_heuristics(config, strategies),
        uniform_height=config.uniform_height,
        wall_clock=time.perf_counter() - start,
    )


AGENT_METRICS = ("placement_rate", "best_placement_rate", "coverage_0", "coverage_1")
SUMMARY_FIELDS = ("experiment", "method", "metric", "mean", "std", "n",
                  "reference_mean", "reference_std", "note")


def aggregate(reports: Sequence[RunReport]) -> list[dict]:
    """One row per experiment x method x metric; std left empty below two seeds."""
    if not reports:
        raise ValueError("aggregate needs at least one report")
    rows = []
    for rep in reports:
        note = "uniform heights set to 100" if rep.uniform_height else ""
        for agent, seeds in rep.agents.items():
            ref = REFERENCE_FILL_RATES.get((rep.exp_id, agent), (None, None))
            for metric in AGENT_METRICS:
                mean, std, n = _mean_std(_seed_metric(s, metric) for s in seeds)
                if metric == "placement_rate":
                    pm, ps = ref
                else:
                    pm = ps = None
                rows.append(dict(experiment=rep.experiment, method=agent, metric=metric,
                                 mean=mean, std=std, n=n, reference_mean=pm, reference_std=ps, note=note))
        for name, result in rep.heuristics.items():
            values = {"placement_rate": result.placement_rate, "skipped": len(result.skipped)}
            values.update({f"coverage_{i}": c for i, c in enumerate(result.coverage)})
            for metric, value in values.items():
                rows.append(dict(experiment=rep.experiment, method=name, metric=metric,
                                 mean=float(value), std=None, n=1, reference_mean=None,
                                 reference_std=None, note=note))
    return rows


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "nan" if math.isnan(value) else f"{value:.6f}"
    return str(value)


def rows_to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_FIELDS)
    for row in rows:
        writer.writerow([_fmt(row.get(k)) for k in SUMMARY_FIELDS])
    return buf.getvalue()


def format_table(rows: Sequence[dict]) -> str:
    """Human-readable comparison of placement rates, with published reference fill rates where known."""
    lines = [f"{'experiment':<10} {'method':<24} {'placement':>10} {'std':>8} {'n':>3}  reference (full scale)"]
    for row in rows:
        if row["metric"] != "placement_rate":
            continue
        std = f"{row['std']:.3f}" if row["std"] is not None else "-"
        ref = (f"{row['reference_mean']:.0f}% +/- {row['reference_std']:.0f}%"
               if row["reference_mean"] is not None else "")
        lines.append(f"{row['experiment']:<10} {row['method']:<24} {row['mean']:>10.3f} "
                     f"{std:>8} {row['n']:>3}  {ref}")
    return "\n".join(lines)


def learning_curves(report: RunReport, key: str) -> dict[str, list[tuple[float, float]]]:
    """``{"agent/seedN": [(steps, value), ...]}`` from the evaluation history."""
    return {
        f"{agent}/seed{s['seed']}": [(float(p["steps"]), float(p[key])) for p in s["curve"]]
        for agent, seeds in report.agents.items() for s in seeds
    }

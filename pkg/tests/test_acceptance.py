"""Acceptance criteria, one test each.

Every check records a PASS/FAIL line; the lines are printed in the pytest
terminal summary and when this file is run as a script.
"""

from __future__ import annotations

import io
import math
import time
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path

import numpy as np
import pytest

from heightpack.cli import dispatch
from heightpack.experiments import builtin_experiment, mini_experiment
from heightpack.heuristics import run_maxrect_bl
from heightpack.rl import a2c_config, compute_gae, evaluate_policy, ppo_config, train

from gradcheck import make_problem, relative_errors
from oracles import OracleEnv, compare_sequences, discounted_returns, gae_bruteforce
from rlcheck import exp1_scripted_policy, max_trajectory_gap, update_trajectory
from test_env import ORACLE_CASES, oracle_case_env

RESULTS: list[str] = []


def record(number: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


# 1 -----------------------------------------------------------------------------

def test_criterion_1_heuristic_exactness():
    cases = [(1, s) for s in ("none", "desc-height", "asc-height")]
    cases += [(2, "desc-height"), (3, "asc-height"), (4, "none"), (4, "desc-height"),
              (4, "asc-height"), (5, "desc-height"), (6, "asc-height")]
    failures, slowest = [], 0.0
    for exp_id, strategy in cases:
        config = builtin_experiment(exp_id)
        start = time.perf_counter()
        r = run_maxrect_bl(config.boards, config.catalogue, strategy)
        slowest = max(slowest, time.perf_counter() - start)
        if exp_id <= 3:
            ok = r.coverage == [100.0, 100.0] and r.placement_rate == 1.0
        else:
            ok = (r.placement_rate == 1.0 and r.skipped == []
                  and r.coverage == [100.0 * 84 / 98] * 2)
        if not ok:
            failures.append(f"exp{exp_id}/{strategy}: coverage {r.coverage}, rate {r.placement_rate}")
    ok = not failures and slowest < 1.0
    record(1, ok, f"{len(cases)} runs exact, slowest {slowest * 1000:.1f} ms"
           if ok else "; ".join(failures) or f"too slow ({slowest:.2f} s)")


# 2 -----------------------------------------------------------------------------

def test_criterion_2_unordered_failures():
    c2, c3 = builtin_experiment(2), builtin_experiment(3)
    r2 = run_maxrect_bl(c2.boards, c2.catalogue, "none")
    r3 = run_maxrect_bl(c3.boards, c3.catalogue, "none")
    ok2 = r2.coverage == [100.0, 50.0] and r2.skipped == [2] * 16
    ok3 = sorted(r3.skipped) == [0] * 8 + [2] * 16
    record(2, ok2 and ok3,
           f"exp2 coverage {r2.coverage}, skipped {len(r2.skipped)} P3; "
           f"exp3 skipped {r3.skipped.count(0)} P1 + {r3.skipped.count(2)} P3")


# 3 -----------------------------------------------------------------------------

def test_criterion_3_environment_oracle():
    total, mismatches = 0, []
    for boards, pieces, max_steps in ORACLE_CASES:
        checked, bad = compare_sequences(oracle_case_env(boards, pieces, max_steps),
                                         OracleEnv(boards, pieces, max_steps), 4)
        total += checked
        mismatches += bad
    record(3, not mismatches and total > 0,
           f"{total} step results over {len(ORACLE_CASES)} 3x3 instances, {len(mismatches)} mismatches")


# 4 -----------------------------------------------------------------------------

def test_criterion_4_gradient_check():
    env = builtin_experiment(1).make_env()
    params, obs, objective = make_problem(0, obs_size=env.obs_size, head_sizes=env.action_sizes,
                                          hidden=128, batch=64)
    errors = relative_errors(params, obs, objective, n_coords=50, h=1e-5)
    worst = float(errors.max())
    record(4, worst <= 1e-4, f"max relative error {worst:.2e} over 50 parameters (limit 1e-4)")


# 5 -----------------------------------------------------------------------------

def test_criterion_5_gae_oracle():
    rng = np.random.default_rng(0)
    worst, worst_lambda1 = 0.0, 0.0
    for trial in range(400):
        T = int(rng.integers(1, 65))
        lam = (0.0, 0.5, 0.95, 1.0)[trial % 4]
        rewards, values = rng.normal(0, 10, T), rng.normal(0, 10, T)
        dones = (rng.random(T) < 0.1).astype(float)
        bootstrap = float(rng.normal(0, 10))
        adv, _ = compute_gae(rewards, values, dones, bootstrap, 0.95, lam)
        worst = max(worst, float(np.abs(adv - gae_bruteforce(rewards, values, dones, bootstrap,
                                                             0.95, lam)).max()))
        if lam == 1.0:
            target = discounted_returns(rewards, dones, bootstrap, 0.95) - values
            worst_lambda1 = max(worst_lambda1, float(np.abs(adv - target).max()))
    ok = worst <= 1e-8 and worst_lambda1 <= 1e-8
    record(5, ok, f"max abs error {worst:.1e}; lambda=1 vs discounted return {worst_lambda1:.1e}")


# 6 -----------------------------------------------------------------------------

def test_criterion_6_a2c_special_case():
    make_env = mini_experiment().env_factory()
    steps = 16 * 25
    a2c = update_trajectory(make_env, a2c_config(total_steps=steps, seed=5, eval_every_episodes=0))
    ppo = update_trajectory(make_env, ppo_config(total_steps=steps, seed=5, eval_every_episodes=0,
                                                 rollout_length=16, epochs=1, minibatch_size=16,
                                                 clip_epsilon=math.inf))
    gap = max_trajectory_gap(a2c, ppo)
    moved = float(np.abs(a2c[-1] - a2c[0]).max())
    record(6, gap <= 1e-10 and moved > 0,
           f"{len(a2c)} updates, max coordinate gap {gap:.1e} (limit 1e-10)")


# 7 -----------------------------------------------------------------------------

LEARNING_SEEDS = 10
LEARNING_BUDGET = 500_000


@pytest.mark.slow
def test_criterion_7_desk_learning():
    make_env = mini_experiment().env_factory()
    reached, lines = 0, []
    start = time.perf_counter()
    for seed in range(LEARNING_SEEDS):
        # training stops at the first evaluation that meets the target
        result = train(make_env, ppo_config(total_steps=LEARNING_BUDGET, seed=seed,
                                            target_placement_rate=0.9))
        hit = next((e for e in result.evaluations if e["placement_rate"] >= 0.9), None)
        reached += hit is not None
        lines.append(f"seed {seed}: " + (f"{hit['steps']} steps" if hit else
                                         f"best {result.best_placement_rate:.3f}"))
    minutes = (time.perf_counter() - start) / 60
    record(7, reached >= 7, f"{reached}/{LEARNING_SEEDS} seeds reached placement rate 0.9 "
           f"({minutes:.1f} min; {', '.join(lines)})")


# 8 -----------------------------------------------------------------------------

def _cli(argv):
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = dispatch(argv)
    return code, out.getvalue()


def _tree_bytes(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_8_determinism(tmp_path):
    commands = [
        ["heuristic", "--experiment", "2", "--strategy", "none", "--plot"],
        ["heuristic", "--experiment", "5", "--heuristic", "bfdh"],
        ["train", "--experiment", "mini", "--agent", "ppo", "--steps", "3000", "--seed", "7", "--plot"],
        ["train", "--experiment", "1", "--agent", "a2c", "--steps", "800", "--seed", "2"],
        ["report", "--experiment", "mini", "--seeds", "2", "--steps", "600", "--plot"],
        ["env-demo", "--experiment", "3", "--seed", "4", "--steps", "30"],
    ]
    differing = []
    for i, cmd in enumerate(commands):
        runs = []
        for rep in ("a", "b"):
            out_dir = tmp_path / f"{i}{rep}"
            code, stdout = _cli(cmd + ["--out", str(out_dir)])
            assert code == 0, cmd
            runs.append((stdout.replace(str(out_dir), "<out>"), _tree_bytes(out_dir)
                         if out_dir.exists() else {}))
        if runs[0] != runs[1]:
            differing.append(" ".join(cmd))
    ckpt = tmp_path / "2a" / "mini_ppo_seed7.ckpt"
    evals = [_cli(["evaluate", "--checkpoint", str(ckpt), "--experiment", "mini",
                   "--episodes", "5", "--seed", "1"])[1] for _ in range(2)]
    if evals[0] != evals[1]:
        differing.append("evaluate")
    record(8, not differing, f"{len(commands) + 1} commands repeated byte-identically"
           if not differing else f"differences in: {differing}")


# 9 -----------------------------------------------------------------------------

def test_criterion_9_episode_length():
    config, policy = exp1_scripted_policy()
    m = evaluate_policy(config.env_factory(), policy, episodes=3)
    total = sum(p.initial_qty for p in config.catalogue)
    ok = m.mean_episode_length == total + 1 and m.placement_rate == 1.0
    record(9, ok, f"mean episode length {m.mean_episode_length:g} = {total} placements + terminal")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))

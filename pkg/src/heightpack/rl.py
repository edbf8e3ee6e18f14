"""On-policy training: rollouts, GAE, clipped PPO updates and evaluation.

A2C is not a separate algorithm here: it is :class:`TrainConfig` with one
epoch, a single full batch and clipping disabled (see :func:`a2c_config`).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Iterable

import numpy as np

from .env import PackingEnv
from .neural import (Actor, AdamState, Objective, PolicyParams, adam_step, backward,
                     clip_by_global_norm, global_norm, init_params, loss_value,
                     save_checkpoint)

EnvFactory = Callable[[], PackingEnv]


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int = 500_000
    rollout_length: int = 2048
    epochs: int = 10
    minibatch_size: int = 256
    clip_epsilon: float = 0.2
    gamma: float = 0.95
    gae_lambda: float = 0.95
    lr0: float = 5e-4
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    # multiplies environment rewards before GAE; keeps value targets O(1)
    reward_scale: float = 0.1
    normalize_advantages: bool = True
    eval_every_episodes: int = 50
    eval_episodes: int = 1
    seed: int = 0
    # stop once a deterministic evaluation reaches this placement rate
    target_placement_rate: float | None = None

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.clip_epsilon < 0:
            raise ValueError("clip_epsilon must be nonnegative")
        if self.epochs < 1 or self.rollout_length < 1 or self.minibatch_size < 1:
            raise ValueError("epochs, rollout_length and minibatch_size must be >= 1")
        if self.total_steps < 0:
            raise ValueError("total_steps must be nonnegative")


def ppo_config(**overrides) -> TrainConfig:
    return TrainConfig(**overrides)


def a2c_config(**overrides) -> TrainConfig:
    base = dict(rollout_length=16, epochs=1, minibatch_size=16, clip_epsilon=math.inf)
    base.update(overrides)
    if "rollout_length" in overrides and "minibatch_size" not in overrides:
        base["minibatch_size"] = base["rollout_length"]
    return TrainConfig(**base)


AGENTS = {"ppo": ppo_config, "a2c": a2c_config}


@dataclass
class RolloutBuffer:
    observations: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    bootstrap_value: float
    episodes: list = field(default_factory=list)

    def __len__(self):
        return len(self.rewards)


@dataclass
class EvalMetrics:
    mean_reward: float
    mean_terminal_reward: float
    mean_episode_length: float
    placement_rate: float
    coverage: list
    episodes: int

    def as_dict(self) -> dict:
        return asdict(self)


def _episode_summary(env: PackingEnv, ret: float, length: int, terminal: float) -> dict:
    return {
        "return": ret,
        "length": length,
        "terminal_reward": terminal,
        "placement_rate": env.placement_rate,
        "coverage": env.coverages(),
    }


class Sampler:
    """Keeps one environment running across successive rollouts."""

    def __init__(self, make_env: EnvFactory):
        self.env = make_env()
        self.obs = self.env.reset()
        self.ep_return = 0.0
        self.ep_length = 0
        self.episodes_done = 0

    def collect(self, params: PolicyParams, n_steps: int, rng: np.random.Generator) -> RolloutBuffer:
        if n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        obs_buf = np.empty((n_steps, self.env.obs_size), dtype=np.float32)
        act_buf = np.empty((n_steps, 4), dtype=np.int64)
        logp_buf = np.empty(n_steps)
        rew_buf = np.empty(n_steps)
        val_buf = np.empty(n_steps)
        done_buf = np.zeros(n_steps)
        episodes = []
        actor = Actor(params)
        for t in range(n_steps):
            action, logp, value = actor.act(self.obs, rng)
            result = self.env.step(action)
            obs_buf[t] = self.obs
            act_buf[t] = action
            logp_buf[t] = logp
            val_buf[t] = value
            rew_buf[t] = result.reward
            self.ep_return += result.reward
            self.ep_length += 1
            if result.done:
                done_buf[t] = 1.0
                episodes.append(_episode_summary(self.env, self.ep_return, self.ep_length, result.reward))
                self.episodes_done += 1
                self.ep_return, self.ep_length = 0.0, 0
                self.obs = self.env.reset()
            else:
                self.obs = result.observation
        if done_buf[-1]:
            bootstrap = 0.0
        else:
            bootstrap = actor.value(self.obs)
        return RolloutBuffer(obs_buf, act_buf, logp_buf, rew_buf, val_buf, done_buf, bootstrap, episodes)


def collect_rollout(make_env: EnvFactory, params: PolicyParams, n_steps: int,
                    rng: np.random.Generator, sampler: Sampler | None = None) -> RolloutBuffer:
    """Sample ``n_steps`` transitions, resetting the environment at episode ends."""
    sampler = sampler or Sampler(make_env)
    return sampler.collect(params, n_steps, rng)


def compute_gae(rewards, values, dones, bootstrap: float, gamma: float, lam: float):
    """Generalized advantage estimates and the matching value targets."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    n = len(rewards)
    advantages = np.zeros(n)
    last = 0.0
    next_value = float(bootstrap)
    for t in reversed(range(n)):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * live - values[t]
        last = delta + gamma * lam * live * last
        advantages[t] = last
        next_value = values[t]
    return advantages, advantages + values


def normalize_advantages(advantages: np.ndarray) -> np.ndarray:
    return (advantages - advantages.mean()) / (advantages.std() + 1e-8)


def linear_lr(lr0: float, step: int, total_steps: int) -> float:
    if total_steps <= 0:
        return lr0
    return lr0 * (1.0 - step / total_steps)


def ppo_loss(params: PolicyParams, minibatch: dict, clip_epsilon: float, entropy_coef: float,
             value_coef: float) -> tuple[float, Objective]:
    """Scalar clipped-surrogate loss and the objective object handed to ``backward``.

    ``minibatch`` needs ``obs``, ``actions``, ``log_probs``, ``advantages``
    (already normalized) and ``returns``.
    """
    objective = Objective(
        actions=minibatch["actions"],
        advantages=minibatch["advantages"],
        old_log_probs=minibatch["log_probs"],
        returns=minibatch["returns"],
        clip_epsilon=clip_epsilon,
        value_coef=value_coef,
        entropy_coef=entropy_coef,
    )
    return loss_value(params, minibatch["obs"], objective), objective


def update_policy(params: PolicyParams, adam: AdamState, buffer: RolloutBuffer,
                  advantages: np.ndarray, returns: np.ndarray, config: TrainConfig, lr: float,
                  rng: np.random.Generator):
    """Epochs of minibatched gradient steps over one rollout."""
    n = len(buffer)
    if config.normalize_advantages:
        advantages = normalize_advantages(advantages)
    stats = []
    for _ in range(config.epochs):
        order = rng.permutation(n) if config.minibatch_size < n else np.arange(n)
        for start in range(0, n, config.minibatch_size):
            idx = order[start:start + config.minibatch_size]
            batch = {
                "obs": buffer.observations[idx],
                "actions": buffer.actions[idx],
                "log_probs": buffer.log_probs[idx],
                "advantages": advantages[idx],
                "returns": returns[idx],
            }
            _, objective = ppo_loss(params, batch, config.clip_epsilon,
                                    config.entropy_coef, config.value_coef)
            step_stats, grads = backward(params, batch["obs"], objective)
            step_stats["grad_norm"] = global_norm(grads)
            grads = clip_by_global_norm(grads, config.max_grad_norm)
            params, adam = adam_step(params, grads, adam, lr)
            stats.append(step_stats)
    summary = {k: float(np.mean([s[k] for s in stats])) for k in stats[0]}
    return params, adam, summary


class NetworkPolicy:
    """Adapter giving network parameters the scripted-policy call signature."""

    def __init__(self, params: PolicyParams, deterministic: bool = True,
                 rng: np.random.Generator | None = None):
        self.params = params
        self.deterministic = deterministic
        self.rng = rng or np.random.default_rng(0)

        self.actor = Actor(params)

    def __call__(self, obs, t):
        if self.deterministic:
            return self.actor.mode(obs)
        return self.actor.act(obs, self.rng)[0]


class ScriptedPolicy:
    """Replays a fixed action list; step ``t`` beyond the list repeats the last action."""

    def __init__(self, actions):
        self.actions = [tuple(a) for a in actions]

    def __call__(self, obs, t):
        if not self.actions:
            return (0, 0, 0, 0)
        return self.actions[min(t, len(self.actions) - 1)]


def evaluate_policy(make_env: EnvFactory, policy, episodes: int = 1, deterministic: bool = True,
                    rng: np.random.Generator | None = None) -> EvalMetrics:
    """Run full episodes; ``policy`` is PolicyParams or a callable ``(obs, t) -> action``."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    if isinstance(policy, PolicyParams):
        policy = NetworkPolicy(policy, deterministic, rng)
    env = make_env()
    summaries = []
    for _ in range(episodes):
        obs = env.reset()
        ret, t = 0.0, 0
        while True:
            result = env.step(policy(obs, t))
            ret += result.reward
            t += 1
            obs = result.observation
            if result.done:
                break
        summaries.append(_episode_summary(env, ret, t, result.reward))
    return EvalMetrics(
        mean_reward=float(np.mean([s["return"] for s in summaries])),
        mean_terminal_reward=float(np.mean([s["terminal_reward"] for s in summaries])),
        mean_episode_length=float(np.mean([s["length"] for s in summaries])),
        placement_rate=float(np.mean([s["placement_rate"] for s in summaries])),
        coverage=[float(c) for c in np.mean([s["coverage"] for s in summaries], axis=0)],
        episodes=episodes,
    )


def _record(kind: str, **fields) -> str:
    return json.dumps({"type": kind, **fields}, sort_keys=True)


@dataclass
class TrainResult:
    params: PolicyParams
    log: list[str]
    evaluations: list[dict]
    steps: int
    episodes: int

    @property
    def best_placement_rate(self) -> float:
        return max((e["placement_rate"] for e in self.evaluations), default=0.0)

    @property
    def final(self) -> dict | None:
        return self.evaluations[-1] if self.evaluations else None


def train(make_env: EnvFactory, config: TrainConfig, log_path=None, checkpoint_path=None,
          checkpoint_every: int | None = None, sink: Callable[[str], None] | None = None,
          on_update: Callable[[int, PolicyParams], None] | None = None) -> TrainResult:
    """Alternate rollouts and policy updates under a linearly decaying learning rate.

    Every log record is one JSON line; with ``log_path`` the lines are also
    written to disk. Checkpoints go to ``checkpoint_path`` every
    ``checkpoint_every`` updates and at the end of training. ``on_update`` is
    called with the update index and the new parameters after every update.
    """
    init_seq, sample_seq, shuffle_seq, eval_seq = np.random.SeedSequence(config.seed).spawn(4)
    probe = make_env()
    params = init_params(probe.obs_size, probe.action_sizes, np.random.default_rng(init_seq))
    log: list[str] = []
    evaluations: list[dict] = []
    log_file = open(log_path, "w") if log_path else None

    def emit(line: str):
        log.append(line)
        if log_file:
            log_file.write(line + "\n")
        if sink:
            sink(line)

    try:
        if config.total_steps == 0:
            return TrainResult(params, log, evaluations, 0, 0)
        emit(_record("config", **{k: (v if not (isinstance(v, float) and math.isinf(v)) else "inf")
                                  for k, v in asdict(config).items()}))
        sample_rng = np.random.default_rng(sample_seq)
        shuffle_rng = np.random.default_rng(shuffle_seq)
        eval_rng = np.random.default_rng(eval_seq)
        adam = AdamState.like(params)
        sampler = Sampler(make_env)
        steps, update = 0, 0
        next_eval = config.eval_every_episodes

        def run_eval(kind: str):
            m = evaluate_policy(make_env, params, config.eval_episodes, True, eval_rng)
            entry = {"steps": steps, "train_episodes": sampler.episodes_done, **m.as_dict()}
            evaluations.append(entry)
            emit(_record(kind, update=update, **entry))
            return m

        while steps < config.total_steps:
            n = min(config.rollout_length, config.total_steps - steps)
            lr = linear_lr(config.lr0, steps, config.total_steps)
            buffer = sampler.collect(params, n, sample_rng)
            advantages, returns = compute_gae(buffer.rewards * config.reward_scale, buffer.values, buffer.dones,
                                              buffer.bootstrap_value, config.gamma, config.gae_lambda)
            params, adam, stats = update_policy(params, adam, buffer, advantages, returns,
                                                config, lr, shuffle_rng)
            steps += n
            update += 1
            if on_update:
                on_update(update, params)
            record = {"update": update, "steps": steps, "lr": lr,
                      "episodes": sampler.episodes_done, **stats}
            if buffer.episodes:
                record["ep_return_mean"] = float(np.mean([e["return"] for e in buffer.episodes]))
                record["ep_length_mean"] = float(np.mean([e["length"] for e in buffer.episodes]))
                record["ep_terminal_mean"] = float(np.mean([e["terminal_reward"] for e in buffer.episodes]))
                record["ep_placement_rate"] = float(np.mean([e["placement_rate"] for e in buffer.episodes]))
            emit(_record("update", **record))
            if checkpoint_path and checkpoint_every and update % checkpoint_every == 0:
                save_checkpoint(checkpoint_path, params)
            if config.eval_every_episodes and sampler.episodes_done >= next_eval:
                m = run_eval("eval")
                next_eval = (sampler.episodes_done // config.eval_every_episodes + 1) * config.eval_every_episodes
                target = config.target_placement_rate
                if target is not None and m.placement_rate >= target:
                    emit(_record("early_stop", steps=steps, placement_rate=m.placement_rate))
                    break
        run_eval("final")
        if checkpoint_path:
            save_checkpoint(checkpoint_path, params)
        return TrainResult(params, log, evaluations, steps, sampler.episodes_done)
    finally:
        if log_file:
            log_file.close()


def with_overrides(config: TrainConfig, overrides: dict | None) -> TrainConfig:
    if not overrides:
        return config
    return replace(config, **overrides)


def iter_log(path) -> Iterable[dict]:
    with open(path) as fh:
        for line in fh:
            if line.strip():
                yield json.loads(line)

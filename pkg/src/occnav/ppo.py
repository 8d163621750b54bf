"""On-policy training: rollout buffer, generalized advantage estimation,
the clipped-surrogate update, and the stage-based trainer.

The trainer collects fixed-length rollouts from a single environment
instance, computes advantages with GAE, and runs several epochs of
minibatch updates per rollout. Single-collector operation is strictly
deterministic for a given seed; that is the only mode implemented here
(parallel collection would trade the bit-for-bit reproducibility away).
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .nets import (Adam, NetworkSpec, PolicyValueNet, clip_grad_norm, entropy,
                   expected_layouts, log_softmax, sample_action)


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    lr: float = 3e-4
    epochs: int = 10
    minibatch: int = 64
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    rollout: int = 2048
    total_steps: int = 100_000

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must be in [0, 1]")
        if self.clip_eps <= 0.0:
            raise ValueError("clip_eps must be > 0")
        if min(self.epochs, self.minibatch, self.rollout, self.total_steps) < 1:
            raise ValueError("epochs, minibatch, rollout, total_steps must be >= 1")


class RolloutBuffer:
    """Fixed-capacity on-policy store for one collector."""

    def __init__(self, capacity: int, n_stack: int, frame_len: int,
                 n_aux: int = 4):
        self.capacity = capacity
        self.blocks = np.zeros((capacity, n_stack, frame_len), dtype=np.float32)
        self.aux = np.zeros((capacity, n_aux), dtype=np.float32)
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.log_probs = np.zeros(capacity, dtype=np.float64)
        self.rewards = np.zeros(capacity, dtype=np.float64)
        self.values = np.zeros(capacity, dtype=np.float64)
        self.dones = np.zeros(capacity, dtype=np.float64)
        self.pos = 0

    @property
    def full(self) -> bool:
        return self.pos >= self.capacity

    def add(self, block: np.ndarray, aux: np.ndarray, action: int,
            log_prob: float, reward: float, value: float, done: bool) -> None:
        i = self.pos
        self.blocks[i] = block
        self.aux[i] = aux
        self.actions[i] = action
        self.log_probs[i] = log_prob
        self.rewards[i] = reward
        self.values[i] = value
        self.dones[i] = float(done)
        self.pos += 1

    def clear(self) -> None:
        self.pos = 0


def compute_gae(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
                gamma: float, lam: float,
                bootstrap_value: float) -> tuple[np.ndarray, np.ndarray]:
    """Backward-recursive advantages and returns over one rollout.

    delta_t = r_t + gamma*V_{t+1}*(1-done_t) - V_t and
    A_t = delta_t + gamma*lam*(1-done_t)*A_{t+1}; episode boundaries cut both
    the value bootstrap and the advantage recursion. Returns are A + V.
    """
    n = len(rewards)
    adv = np.zeros(n, dtype=np.float64)
    last = 0.0
    for t in reversed(range(n)):
        next_value = bootstrap_value if t == n - 1 else values[t + 1]
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        last = delta + gamma * lam * nonterminal * last
        adv[t] = last
    return adv, adv + values


def clipped_surrogate(ratio: np.ndarray, adv: np.ndarray,
                      clip_eps: float) -> np.ndarray:
    """Elementwise min of the unclipped and ratio-clipped policy objectives."""
    return np.minimum(ratio * adv,
                      np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv)


def ppo_loss_and_grad(net: PolicyValueNet, blocks: np.ndarray, aux: np.ndarray,
                      actions: np.ndarray, logp_old: np.ndarray,
                      adv: np.ndarray, returns: np.ndarray,
                      cfg: PpoConfig) -> tuple[float, np.ndarray, dict]:
    """Total minibatch loss (clipped surrogate + value - entropy bonus) and
    its analytic parameter gradient."""
    logits, values, cache = net.forward(blocks, aux, need_cache=True)
    logp_all = log_softmax(logits.astype(np.float64))
    p = np.exp(logp_all)
    m = len(actions)
    rows = np.arange(m)
    logp = logp_all[rows, actions]
    ratio = np.exp(logp - logp_old)

    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv
    unclipped = surr1 <= surr2
    policy_loss = -np.minimum(surr1, surr2).mean()

    v_err = values.astype(np.float64) - returns
    value_loss = np.mean(v_err ** 2)
    ent = -(p * logp_all).sum(axis=1)
    loss = (policy_loss + cfg.value_coef * value_loss
            - cfg.entropy_coef * ent.mean())
    if not np.isfinite(loss):
        raise FloatingPointError(
            f"non-finite PPO loss (policy={policy_loss}, value={value_loss})")

    # d(loss)/dlogits: surrogate term for the sampled actions ...
    dlogp = -(unclipped * adv * ratio) / m
    dlogits = dlogp[:, None] * (-p)
    dlogits[rows, actions] += dlogp
    # ... plus the entropy bonus
    dlogits += (cfg.entropy_coef / m) * p * (logp_all + ent[:, None])
    dvalues = cfg.value_coef * 2.0 * v_err / m

    grads = net.backward(cache, dlogits, dvalues)
    stats = {
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(ent.mean()),
        "approx_kl": float((logp_old - logp).mean()),
        "clip_frac": float((~unclipped).mean()),
    }
    return float(loss), grads, stats


def ppo_update(net: PolicyValueNet, adam: Adam, buf: RolloutBuffer,
               cfg: PpoConfig, rng: np.random.Generator,
               bootstrap_value: float) -> dict:
    """One full update (all epochs/minibatches) from a complete buffer."""
    if not buf.full:
        raise ValueError("ppo_update needs a full rollout buffer")
    adv, returns = compute_gae(buf.rewards, buf.values, buf.dones,
                               cfg.gamma, cfg.lam, bootstrap_value)
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)

    n = buf.capacity
    totals = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0,
              "approx_kl": 0.0, "clip_frac": 0.0, "grad_norm": 0.0}
    n_batches = 0
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            mb = perm[start:start + cfg.minibatch]
            _, grads, stats = ppo_loss_and_grad(
                net, buf.blocks[mb], buf.aux[mb], buf.actions[mb],
                buf.log_probs[mb], adv[mb], returns[mb], cfg)
            norm = clip_grad_norm(grads, cfg.max_grad_norm)
            adam.step(net.params, grads)
            for k, v in stats.items():
                totals[k] += v
            totals["grad_norm"] += norm
            n_batches += 1
    return {k: v / n_batches for k, v in totals.items()}


@dataclass
class CurveRow:
    step: int
    stage: str
    mean_reward: float
    success_rate: float
    policy_loss: float
    value_loss: float
    entropy: float

    @staticmethod
    def header() -> list[str]:
        return ["step", "stage", "mean_reward", "success_rate", "policy_loss",
                "value_loss", "entropy"]

    def row(self) -> list:
        return [self.step, self.stage, repr(self.mean_reward),
                repr(self.success_rate), repr(self.policy_loss),
                repr(self.value_loss), repr(self.entropy)]


class PpoTrainer:
    """Single-collector PPO over one environment at a time.

    ``env_builder(wmap)`` constructs the stage's environment; the network and
    optimizer persist across train_stage calls, which is what makes the
    hierarchical curriculum carry parameters forward.
    """

    def __init__(self, net: PolicyValueNet, cfg: PpoConfig, env_builder,
                 seed: int = 0, checkpoint_path: str | None = None,
                 checkpoint_every: int = 25, log=None):
        self.net = net
        self.cfg = cfg
        self.env_builder = env_builder
        self.adam = Adam(net.n_params, cfg.lr)
        ss = np.random.SeedSequence(seed)
        kids = ss.spawn(2)
        self.sample_rng = np.random.default_rng(kids[0])
        self.shuffle_rng = np.random.default_rng(kids[1])
        self.global_step = 0
        self.stage_index = 0
        self.curve: list[CurveRow] = []
        self.checkpoint_path = checkpoint_path
        self.checkpoint_every = checkpoint_every
        self.log = log

    def train_stage(self, wmap, n_steps: int) -> None:
        env = self.env_builder(wmap)
        if env.layout not in expected_layouts(self.net.spec.variant):
            raise ValueError(f"env layout {env.layout!r} does not fit network "
                             f"variant {self.net.spec.variant!r}")
        stage_name = getattr(wmap, "name", f"stage{self.stage_index}")
        buf = RolloutBuffer(self.cfg.rollout, env.stack.n_stack, env.frame_len)
        obs = env.reset()
        ep_return = 0.0
        ep_returns: list[float] = []
        ep_successes: list[bool] = []
        done_steps = 0
        updates = 0
        while done_steps < n_steps:
            buf.clear()
            while not buf.full:
                logits, value = self.net.forward_obs(obs)
                action, logp = sample_action(logits, self.sample_rng)
                res = env.step(action)
                buf.add(obs.stacked, obs.aux, action, logp, res.reward, value,
                        res.done)
                ep_return += res.reward
                if res.done:
                    ep_returns.append(ep_return)
                    ep_successes.append(res.outcome == "goal")
                    ep_return = 0.0
                    obs = env.reset()
                else:
                    obs = res.observation
            done_steps += buf.capacity
            bootstrap = 0.0
            if not buf.dones[-1]:
                _, bootstrap = self.net.forward_obs(obs)
            stats = ppo_update(self.net, self.adam, buf, self.cfg,
                               self.shuffle_rng, bootstrap)
            self.global_step += buf.capacity
            updates += 1
            mean_r = float(np.mean(ep_returns)) if ep_returns else math.nan
            succ = float(np.mean(ep_successes)) if ep_successes else math.nan
            self.curve.append(CurveRow(self.global_step, stage_name, mean_r,
                                       succ, stats["policy_loss"],
                                       stats["value_loss"], stats["entropy"]))
            if self.log is not None:
                self.log(f"step {self.global_step}  stage {stage_name}  "
                         f"reward {mean_r:.2f}  success {succ:.2f}  "
                         f"entropy {stats['entropy']:.3f}")
            ep_returns.clear()
            ep_successes.clear()
            if (self.checkpoint_path
                    and (updates % self.checkpoint_every == 0
                         or done_steps >= n_steps)):
                save_checkpoint(self.checkpoint_path, self)
        self.stage_index += 1

    def write_curve(self, path: str) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(CurveRow.header())
            for row in self.curve:
                writer.writerow(row.row())


def train(env_builder, net: PolicyValueNet, cfg: PpoConfig, wmap,
          seed: int = 0, log=None) -> tuple[PolicyValueNet, list[CurveRow]]:
    """Plain single-map training; equivalent to a one-stage curriculum."""
    trainer = PpoTrainer(net, cfg, env_builder, seed=seed, log=log)
    trainer.train_stage(wmap, cfg.total_steps)
    return trainer.net, trainer.curve


def greedy_action(net: PolicyValueNet, obs) -> int:
    logits, _ = net.forward_obs(obs)
    return int(np.argmax(logits))


def run_episodes(env, net: PolicyValueNet, n_episodes: int, seed: int,
                 greedy: bool = True,
                 rng: np.random.Generator | None = None) -> list[tuple[str, int]]:
    """Roll policy episodes, returning (outcome, steps) per episode.

    Episode i resets the environment with seed+i, so different policies see
    the same scenario sequence.
    """
    out = []
    rng = rng or np.random.default_rng(seed)
    for ep in range(n_episodes):
        obs = env.reset(seed=seed + ep)
        steps = 0
        while True:
            if greedy:
                action = greedy_action(net, obs)
            else:
                logits, _ = net.forward_obs(obs)
                action, _ = sample_action(logits, rng)
            res = env.step(action)
            steps += 1
            if res.done:
                out.append((res.outcome, steps))
                break
            obs = res.observation
    return out


# ---------------------------------------------------------------------------
# Checkpoints

CHECKPOINT_FORMAT = "occnav-checkpoint/1"


def save_checkpoint(path: str, trainer: PpoTrainer) -> None:
    net = trainer.net
    meta = {
        "format": CHECKPOINT_FORMAT,
        "net_spec": asdict(net.spec),
        "shape_table": [(n, list(s), o) for n, s, o in net.shape_table],
        "ppo": asdict(trainer.cfg),
        "global_step": trainer.global_step,
        "stage_index": trainer.stage_index,
        "sample_rng": trainer.sample_rng.bit_generator.state,
        "shuffle_rng": trainer.shuffle_rng.bit_generator.state,
    }
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        np.savez(f, meta=json.dumps(meta), params=net.params,
                 adam_m=trainer.adam.m, adam_v=trainer.adam.v,
                 adam_t=np.array([trainer.adam.t]))
    os.replace(tmp, path)


def load_net(path: str) -> tuple[PolicyValueNet, dict]:
    """Rebuild the network (and return checkpoint metadata) from a file."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: not an occnav checkpoint")
        spec_d = meta["net_spec"]
        for key in ("fc_widths", "conv_channels", "conv_kernels",
                    "conv_strides"):
            spec_d[key] = tuple(spec_d[key])
        spec = NetworkSpec(**spec_d)
        net = PolicyValueNet(spec, np.random.default_rng(0))
        net.params = data["params"].copy()
        meta["adam_m"] = data["adam_m"].copy()
        meta["adam_v"] = data["adam_v"].copy()
        meta["adam_t"] = int(data["adam_t"][0])
    return net, meta


def restore_trainer(path: str, env_builder, log=None) -> PpoTrainer:
    net, meta = load_net(path)
    cfg = PpoConfig(**meta["ppo"])
    trainer = PpoTrainer(net, cfg, env_builder, checkpoint_path=path, log=log)
    trainer.adam.load_state({"t": meta["adam_t"], "m": meta["adam_m"],
                             "v": meta["adam_v"]})
    trainer.global_step = meta["global_step"]
    trainer.stage_index = meta["stage_index"]
    trainer.sample_rng.bit_generator.state = meta["sample_rng"]
    trainer.shuffle_rng.bit_generator.state = meta["shuffle_rng"]
    return trainer

"""Learning the assistant policy from analyst trajectories.

Behavior cloning fits expert actions directly; GAIL alternates between an
actor-critic generator driven by the discriminator's imitation reward and
discriminator updates on balanced expert/generator batches. The discriminator
uses the shaped form D(s,a,s') = sigmoid(g(s,a) + gamma*h(s') - h(s)).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .analysts import AnalystConfig, TrainingDivergedError, Trajectory
from .env import InvestigationEnv
from .nets import (
    Network,
    NetworkSpec,
    OptimizerState,
    backprop,
    forward,
    forward_batch,
    init_network,
    load_network,
    optimizer_step,
    sample_categorical,
    save_network,
    softmax,
)

__all__ = [
    "Discriminator",
    "GailConfig",
    "BCConfig",
    "AssistantPolicy",
    "behavior_clone",
    "train_gail",
    "imitation_reward",
    "merge_multi_source",
]

REWARD_CLAMP = 20.0


@dataclass
class AssistantPolicy:
    """Actor over the K+1 investigation actions, with provenance."""

    policy: Network
    provenance: str  # bc | gail
    source_analyst_ids: tuple[str, ...]
    n_actions: int
    budget_consumed: int = 0
    # mean imitation reward the discriminator assigns to the expert
    # transitions, logged once per adversarial round
    expert_reward_log: list[float] = field(default_factory=list)

    def action_probs(self, obs_vec: np.ndarray) -> np.ndarray:
        return softmax(forward(self.policy, obs_vec)[: self.n_actions])[0]

    def greedy_action(self, obs_vec: np.ndarray) -> int:
        return int(np.argmax(forward(self.policy, obs_vec)[: self.n_actions]))

    def save(self, directory: str | Path, name: str = "assistant") -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        save_network(self.policy, directory / f"{name}.net.json")
        meta = {
            "provenance": self.provenance,
            "source_analyst_ids": list(self.source_analyst_ids),
            "n_actions": self.n_actions,
            "budget_consumed": self.budget_consumed,
        }
        (directory / f"{name}.json").write_text(json.dumps(meta, sort_keys=True))

    @staticmethod
    def load(directory: str | Path, name: str = "assistant") -> "AssistantPolicy":
        directory = Path(directory)
        meta = json.loads((directory / f"{name}.json").read_text())
        return AssistantPolicy(
            policy=load_network(directory / f"{name}.net.json"),
            provenance=meta["provenance"],
            source_analyst_ids=tuple(meta["source_analyst_ids"]),
            n_actions=meta["n_actions"],
            budget_consumed=meta["budget_consumed"],
        )


@dataclass(frozen=True)
class BCConfig:
    epochs: int = 40
    batch_size: int = 64
    learning_rate: float = 1e-3
    hidden: tuple[int, int] = (64, 64)
    seed: int = 0
    full_batch: bool = False  # full-batch plain gradient descent (monotone loss)

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass(frozen=True)
class GailConfig:
    buffer_capacity: int = 3_000
    disc_updates_per_round: int = 10
    total_transition_budget: int = 40_000  # desk-scale default; 200k in full runs
    generator: AnalystConfig = field(default_factory=lambda: AnalystConfig.a2c(reward_stop_threshold=None))
    disc_hidden: tuple[int, int] = (32, 32)
    disc_learning_rate: float = 3e-4
    disc_batch_size: int = 128
    seed: int = 0

    def __post_init__(self) -> None:
        if self.total_transition_budget <= self.buffer_capacity:
            raise ValueError("transition budget must exceed the buffer capacity")


@dataclass
class Discriminator:
    """Shaped reward network: a transition head g(s,a) plus a potential head
    h(s); D(s,a,s') = sigmoid(g(s,a) + gamma*h(s') - h(s)) stays in (0,1)."""

    g: Network
    h: Network
    gamma: float
    n_actions: int

    def logit(self, s: np.ndarray, a: np.ndarray, s2: np.ndarray) -> np.ndarray:
        """f for a batch; ``a`` holds integer action ids."""
        a_onehot = np.zeros((len(a), self.n_actions))
        a_onehot[np.arange(len(a)), a] = 1.0
        g_in = np.concatenate([s, a_onehot], axis=1)
        return (forward_batch(self.g, g_in)[:, 0]
                + self.gamma * forward_batch(self.h, s2)[:, 0]
                - forward_batch(self.h, s)[:, 0])

    def prob_expert(self, s: np.ndarray, a: np.ndarray, s2: np.ndarray) -> np.ndarray:
        f = self.logit(s, a, s2)
        return 1.0 / (1.0 + np.exp(-f))


def make_discriminator(obs_size: int, n_actions: int, gamma: float,
                       hidden: tuple[int, int], rng: np.random.Generator) -> Discriminator:
    g = init_network(NetworkSpec((obs_size + n_actions, *hidden, 1), output_head="linear"), rng)
    h = init_network(NetworkSpec((obs_size, *hidden, 1), output_head="linear"), rng)
    return Discriminator(g=g, h=h, gamma=gamma, n_actions=n_actions)


def _softplus(f: np.ndarray | float) -> np.ndarray | float:
    return np.logaddexp(0.0, f)


def imitation_reward(disc: Discriminator, s: np.ndarray, a: int, s2: np.ndarray) -> float:
    """-log(1 - D(s,a,s')) = softplus(f), clamped to [-20, 20]."""
    f = disc.logit(np.atleast_2d(s), np.asarray([a]), np.atleast_2d(s2))[0]
    return float(np.clip(_softplus(f), -REWARD_CLAMP, REWARD_CLAMP))


@dataclass
class _Transitions:
    s: list[np.ndarray] = field(default_factory=list)
    a: list[int] = field(default_factory=list)
    s2: list[np.ndarray] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.a)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.stack(self.s), np.asarray(self.a, dtype=int), np.stack(self.s2)


def _expert_transitions(traces: Sequence[Trajectory]) -> _Transitions:
    out = _Transitions()
    for traj in traces:
        vecs = [step.observation.to_vector() for step in traj.steps]
        for i, step in enumerate(traj.steps):
            s2 = vecs[i + 1] if i + 1 < len(vecs) else vecs[i]  # terminal self-loop
            out.s.append(vecs[i])
            out.a.append(step.action)
            out.s2.append(s2)
    return out


def behavior_clone(traces: Sequence[Trajectory], config: BCConfig,
                   source_ids: Sequence[str] = ()) -> AssistantPolicy:
    """Supervised fit of expert actions: cross-entropy over observations."""
    if not traces:
        raise ValueError("no traces to clone from")
    expert = _expert_transitions(traces)
    X = np.stack(expert.s)
    y = np.asarray(expert.a, dtype=int)
    n_actions = traces[0].steps[-1].observation.n_categories + 1

    rng = np.random.default_rng(config.seed)
    net = init_network(
        NetworkSpec((X.shape[1], *config.hidden, n_actions), output_head="linear"), rng
    )
    opt = (OptimizerState.sgd(net, step_size=config.learning_rate) if config.full_batch
           else OptimizerState.adam(net, step_size=config.learning_rate))

    n = len(X)
    batch = n if config.full_batch else config.batch_size
    for _ in range(config.epochs):
        order = np.arange(n) if config.full_batch else rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            probs = softmax(forward_batch(net, X[idx]))
            d_out = probs
            d_out[np.arange(len(idx)), y[idx]] -= 1.0
            d_out /= len(idx)
            if not np.all(np.isfinite(d_out)):
                raise TrainingDivergedError("non-finite behavior-cloning gradient")
            optimizer_step(opt, net, backprop(net, X[idx], d_out))
    return AssistantPolicy(policy=net, provenance="bc",
                           source_analyst_ids=tuple(source_ids), n_actions=n_actions)


def bc_dataset_loss(policy: AssistantPolicy, traces: Sequence[Trajectory]) -> float:
    """Mean cross-entropy of the policy on the expert (obs, action) pairs."""
    expert = _expert_transitions(traces)
    X = np.stack(expert.s)
    y = np.asarray(expert.a, dtype=int)
    probs = softmax(forward_batch(policy.policy, X)[:, : policy.n_actions])
    return float(np.mean(-np.log(probs[np.arange(len(y)), y])))


def _disc_update(disc: Discriminator, opt_g: OptimizerState, opt_h: OptimizerState,
                 s: np.ndarray, a: np.ndarray, s2: np.ndarray, labels: np.ndarray) -> float:
    """One BCE step classifying expert (1) vs generator (0) transitions."""
    B = len(a)
    a_onehot = np.zeros((B, disc.n_actions))
    a_onehot[np.arange(B), a] = 1.0
    g_in = np.concatenate([s, a_onehot], axis=1)
    f = (forward_batch(disc.g, g_in)[:, 0]
         + disc.gamma * forward_batch(disc.h, s2)[:, 0]
         - forward_batch(disc.h, s)[:, 0])
    d = 1.0 / (1.0 + np.exp(-f))
    loss = float(np.mean(np.where(labels > 0.5, _softplus(-f), _softplus(f))))
    if not np.isfinite(loss):
        raise TrainingDivergedError("non-finite discriminator loss")
    df = ((d - labels) / B)[:, None]

    g_grads = backprop(disc.g, g_in, df)
    h_grads = backprop(disc.h, s2, disc.gamma * df)
    h_grads.add_scaled(backprop(disc.h, s, -df))
    optimizer_step(opt_g, disc.g, g_grads)
    optimizer_step(opt_h, disc.h, h_grads)
    return loss


def train_gail(traces: Sequence[Trajectory], env_factory: Callable[[], InvestigationEnv],
               config: GailConfig,
               source_ids: Sequence[str] = ()) -> tuple[AssistantPolicy, Discriminator]:
    """Adversarial imitation: rounds of generator rollouts on the imitation
    reward followed by discriminator updates, until the sampled-transition
    budget is exhausted."""
    if not traces:
        raise ValueError("no expert traces")
    expert = _expert_transitions(traces)
    exp_s, exp_a, exp_s2 = expert.arrays()

    env = env_factory()
    n_actions = env.n_actions
    obs_size = exp_s.shape[1]
    gen_cfg = config.generator
    rng = np.random.default_rng(config.seed)

    disc = make_discriminator(obs_size, n_actions, gen_cfg.gamma, config.disc_hidden, rng)
    opt_g = OptimizerState.adam(disc.g, step_size=config.disc_learning_rate)
    opt_h = OptimizerState.adam(disc.h, step_size=config.disc_learning_rate)

    policy = init_network(
        NetworkSpec((obs_size, *gen_cfg.hidden, n_actions + 1), output_head="linear"), rng
    )
    policy_opt = OptimizerState.rmsprop(policy, step_size=gen_cfg.learning_rate)

    # Episode alerts are drawn from the expert's own alerts via the env factory
    # caller; here we only need reset targets, supplied by the factory's env.
    sampled_total = 0
    round_idx = 0
    expert_reward_log: list[float] = []
    while True:
        round_idx += 1
        buffer = _Transitions()
        # rounds collect whole episodes, so they may overshoot the capacity
        # by up to one episode before the discriminator updates
        while len(buffer) < config.buffer_capacity:
            alert = env_factory_alert(env, rng)
            obs_vec = env.reset(alert).to_vector()
            while not env.done:
                chunk_s, chunk_a, chunk_s2 = [], [], []
                while len(chunk_s) < gen_cfg.n_step and not env.done:
                    out = forward(policy, obs_vec)
                    probs = softmax(out[:n_actions])[0]
                    action = sample_categorical(probs, rng)
                    outcome = env.step(action)
                    next_vec = outcome.observation.to_vector()
                    buffer.s.append(obs_vec)
                    buffer.a.append(action)
                    buffer.s2.append(next_vec)
                    chunk_s.append(obs_vec)
                    chunk_a.append(action)
                    chunk_s2.append(next_vec)
                    obs_vec = next_vec
                    sampled_total += 1
                f = disc.logit(np.stack(chunk_s), np.asarray(chunk_a, dtype=int),
                               np.stack(chunk_s2))
                chunk_r = np.clip(_softplus(f), -REWARD_CLAMP, REWARD_CLAMP).tolist()
                bootstrap = 0.0 if env.done else float(forward(policy, obs_vec)[n_actions])
                _generator_update(policy, policy_opt, gen_cfg, n_actions,
                                  chunk_s, chunk_a, chunk_r, bootstrap, round_idx)
        gen_s, gen_a, gen_s2 = buffer.arrays()
        half = config.disc_batch_size // 2
        for _ in range(config.disc_updates_per_round):
            ei = rng.integers(len(exp_a), size=half)
            gi = rng.integers(len(gen_a), size=half)
            s = np.concatenate([exp_s[ei], gen_s[gi]])
            a = np.concatenate([exp_a[ei], gen_a[gi]])
            s2 = np.concatenate([exp_s2[ei], gen_s2[gi]])
            labels = np.concatenate([np.ones(half), np.zeros(half)])
            _disc_update(disc, opt_g, opt_h, s, a, s2, labels)
        f_expert = disc.logit(exp_s, exp_a, exp_s2)
        expert_reward_log.append(
            float(np.mean(np.clip(_softplus(f_expert), -REWARD_CLAMP, REWARD_CLAMP))))
        if sampled_total > config.total_transition_budget:
            break
    assistant = AssistantPolicy(policy=policy, provenance="gail",
                                source_analyst_ids=tuple(source_ids),
                                n_actions=n_actions, budget_consumed=sampled_total,
                                expert_reward_log=expert_reward_log)
    return assistant, disc


def _generator_update(policy, opt, gen_cfg: AnalystConfig, n_actions: int,
                      chunk_s, chunk_a, chunk_r, bootstrap: float, round_idx: int) -> None:
    if not chunk_s:
        return
    X = np.stack(chunk_s)
    B = len(chunk_s)
    out = forward_batch(policy, X)
    logits = out[:, :n_actions]
    values = out[:, n_actions]
    probs = softmax(logits)

    returns = np.empty(B)
    running = bootstrap
    for i in range(B - 1, -1, -1):
        running = chunk_r[i] + gen_cfg.gamma * running
        returns[i] = running
    adv = returns - values

    d_logits = probs.copy()
    d_logits[np.arange(B), chunk_a] -= 1.0
    d_logits *= adv[:, None]
    log_probs = np.log(probs)
    entropy = -np.sum(probs * log_probs, axis=1, keepdims=True)
    d_logits += gen_cfg.ent_coef * probs * (log_probs + entropy)
    d_logits /= B
    d_value = gen_cfg.value_coef * (values - returns) / B
    d_out = np.concatenate([d_logits, d_value[:, None]], axis=1)
    if not np.all(np.isfinite(d_out)):
        raise TrainingDivergedError(f"generator diverged in round {round_idx}")
    grads = backprop(policy, X, d_out)
    grads.clip_global_norm(gen_cfg.grad_clip)
    optimizer_step(opt, policy, grads)


def env_factory_alert(env: InvestigationEnv, rng: np.random.Generator):
    """Draws the next episode's alert from the env's bound alert pool."""
    if not env.alert_pool:
        raise ValueError("GAIL needs an env constructed with an alert_pool")
    return env.alert_pool[int(rng.integers(len(env.alert_pool)))]


def merge_multi_source(traces_by_analyst: dict[str, list[Trajectory]],
                       per_source: int, seed: int) -> list[Trajectory]:
    """Uniform per-analyst subsample (original order preserved), concatenated
    in analyst-id order."""
    rng = np.random.default_rng(seed)
    merged: list[Trajectory] = []
    for analyst_id in sorted(traces_by_analyst):
        traces = traces_by_analyst[analyst_id]
        if len(traces) < per_source:
            raise ValueError(
                f"analyst {analyst_id!r} has {len(traces)} traces, need {per_source}"
            )
        if len(traces) == per_source:
            chosen = list(traces)
        else:
            idx = sorted(rng.choice(len(traces), size=per_source, replace=False).tolist())
            chosen = [traces[i] for i in idx]
        merged.extend(chosen)
    return merged

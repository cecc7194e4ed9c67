"""Simulated analysts: an advantage actor-critic learner and a Q-learner
trained on the investigation environment, plus greedy/stochastic rollouts and
trace collection.

Both learners share one network trunk shape (two hidden layers of 64, ReLU).
The actor-critic head emits K+1 policy logits plus a value; the Q head emits
K+1 action values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .catalog import AlertRecord
from .classifiers import Prediction
from .env import InvestigationEnv, Observation
from .nets import (
    Gradients,
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
    "AnalystConfig",
    "TrainedAnalyst",
    "TrajStep",
    "Trajectory",
    "TrainingDivergedError",
    "train_analyst",
    "rollout",
    "collect_traces",
]


class TrainingDivergedError(RuntimeError):
    """Raised when a learner produces non-finite losses or gradients."""


@dataclass(frozen=True)
class AnalystConfig:
    algorithm: str  # a2c | dqn
    gamma: float = 0.99
    ent_coef: float = 0.001
    hidden: tuple[int, int] = (64, 64)
    max_timesteps: int = 60_000
    reward_stop_threshold: float | None = 12.0
    learning_rate: float = 7e-4
    seed: int = 0
    # a2c
    n_step: int = 5
    value_coef: float = 0.5
    grad_clip: float = 0.5
    # dqn
    replay_capacity: int = 10_000
    batch_size: int = 64
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_fraction: float = 0.3
    target_sync: int = 1_000
    train_freq: int = 4

    @staticmethod
    def a2c(**kwargs) -> "AnalystConfig":
        return AnalystConfig(algorithm="a2c", ent_coef=kwargs.pop("ent_coef", 0.001),
                             learning_rate=kwargs.pop("learning_rate", 7e-4), **kwargs)

    @staticmethod
    def dqn(**kwargs) -> "AnalystConfig":
        return AnalystConfig(algorithm="dqn", ent_coef=kwargs.pop("ent_coef", 0.12),
                             learning_rate=kwargs.pop("learning_rate", 1e-3), **kwargs)

    def to_json_dict(self) -> dict:
        doc = {k: getattr(self, k) for k in self.__dataclass_fields__}
        doc["hidden"] = list(self.hidden)
        return doc

    @staticmethod
    def from_json_dict(doc: dict) -> "AnalystConfig":
        doc = dict(doc)
        doc["hidden"] = tuple(doc.get("hidden", (64, 64)))
        return AnalystConfig(**doc)


@dataclass
class EpisodeLog:
    episode: int
    ret: float
    length: int


@dataclass
class TrainedAnalyst:
    id: str
    algorithm: str
    policy: Network
    config: AnalystConfig
    n_actions: int
    training_log: list[EpisodeLog] = field(default_factory=list)

    def _head(self, obs_vec: np.ndarray) -> np.ndarray:
        out = forward(self.policy, obs_vec)
        return out[: self.n_actions]

    def greedy_action(self, obs_vec: np.ndarray) -> int:
        return int(np.argmax(self._head(obs_vec)))

    def action_probs(self, obs_vec: np.ndarray) -> np.ndarray:
        return softmax(self._head(obs_vec))[0]

    def value(self, obs_vec: np.ndarray) -> float:
        if self.algorithm != "a2c":
            raise ValueError("value head only exists for a2c")
        return float(forward(self.policy, obs_vec)[self.n_actions])


@dataclass
class TrajStep:
    observation: Observation
    action: int
    reward: float


@dataclass
class Trajectory:
    alert_id: int
    steps: list[TrajStep]
    final_prediction: Prediction
    truth: int

    def __post_init__(self) -> None:
        if not self.steps:
            raise ValueError("a trajectory needs at least the classify step")
        n_cats = self.steps[-1].observation.n_categories
        if self.steps[-1].action != n_cats:
            raise ValueError("trajectory must end with the classify action")
        if not all(np.isfinite(s.reward) for s in self.steps):
            raise ValueError("non-finite reward in trajectory")

    def request_actions(self) -> list[int]:
        return [s.action for s in self.steps[:-1]]

    def total_reward(self) -> float:
        return float(sum(s.reward for s in self.steps))


def _policy_spec(obs_size: int, n_actions: int, hidden: tuple[int, int], extra: int) -> NetworkSpec:
    return NetworkSpec(layer_sizes=(obs_size, *hidden, n_actions + extra), output_head="linear")


STOP_WINDOW = 100


def _rolling_mean(values: list[float], window: int = STOP_WINDOW) -> float:
    """Mean of the last `window` episode returns; -inf until the window is
    full so a lucky early episode cannot stop training."""
    if len(values) < window:
        return -np.inf
    return float(np.mean(values[-window:]))


def _effective_threshold(config: AnalystConfig) -> float:
    """None or -inf disables early stopping entirely."""
    t = config.reward_stop_threshold
    if t is None or not np.isfinite(t):
        return np.inf
    return t


def train_analyst(env_factory: Callable[[], InvestigationEnv],
                  alerts: Sequence[AlertRecord],
                  config: AnalystConfig,
                  analyst_id: str = "analyst") -> TrainedAnalyst:
    """Trains one analyst over randomly drawn alerts until the timestep budget
    runs out or the rolling 100-episode mean return reaches the stop
    threshold."""
    if not alerts:
        raise ValueError("no training alerts")
    if config.algorithm == "a2c":
        return _train_a2c(env_factory, alerts, config, analyst_id)
    if config.algorithm == "dqn":
        return _train_dqn(env_factory, alerts, config, analyst_id)
    raise ValueError(f"unknown algorithm {config.algorithm!r}")


def _train_a2c(env_factory, alerts, config: AnalystConfig, analyst_id: str) -> TrainedAnalyst:
    env = env_factory()
    n_actions = env.n_actions
    rng = np.random.default_rng(config.seed)
    obs_size = len(env.reset(alerts[0]).to_vector())
    net = init_network(_policy_spec(obs_size, n_actions, config.hidden, extra=1), rng)
    opt = OptimizerState.rmsprop(net, step_size=config.learning_rate)
    threshold = _effective_threshold(config)

    timesteps = 0
    returns: list[float] = []
    log: list[EpisodeLog] = []
    while timesteps < config.max_timesteps:
        alert = alerts[int(rng.integers(len(alerts)))]
        obs_vec = env.reset(alert).to_vector()
        ep_ret, ep_len = 0.0, 0
        while not env.done and timesteps < config.max_timesteps:
            chunk_obs: list[np.ndarray] = []
            chunk_act: list[int] = []
            chunk_rew: list[float] = []
            while len(chunk_obs) < config.n_step and not env.done and timesteps < config.max_timesteps:
                out = forward(net, obs_vec)
                probs = softmax(out[:n_actions])[0]
                action = sample_categorical(probs, rng)
                outcome = env.step(action)
                chunk_obs.append(obs_vec)
                chunk_act.append(action)
                chunk_rew.append(outcome.reward)
                obs_vec = outcome.observation.to_vector()
                ep_ret += outcome.reward
                ep_len += 1
                timesteps += 1
            bootstrap = 0.0 if env.done else float(forward(net, obs_vec)[n_actions])
            _a2c_update(net, opt, config, n_actions, chunk_obs, chunk_act, chunk_rew,
                        bootstrap, timesteps)
        if env.done:
            returns.append(ep_ret)
            log.append(EpisodeLog(len(log), ep_ret, ep_len))
            if _rolling_mean(returns) >= threshold:
                break
    return TrainedAnalyst(id=analyst_id, algorithm="a2c", policy=net, config=config,
                          n_actions=n_actions, training_log=log)


def _a2c_update(net: Network, opt: OptimizerState, config: AnalystConfig, n_actions: int,
                chunk_obs: list[np.ndarray], chunk_act: list[int], chunk_rew: list[float],
                bootstrap: float, timesteps: int) -> None:
    if not chunk_obs:
        return
    X = np.stack(chunk_obs)
    B = len(chunk_obs)
    out = forward_batch(net, X)
    logits = out[:, :n_actions]
    values = out[:, n_actions]
    probs = softmax(logits)

    returns = np.empty(B)
    running = bootstrap
    for i in range(B - 1, -1, -1):
        running = chunk_rew[i] + config.gamma * running
        returns[i] = running
    adv = returns - values

    d_logits = probs.copy()
    d_logits[np.arange(B), chunk_act] -= 1.0
    d_logits *= adv[:, None]
    log_probs = np.log(probs)
    entropy = -np.sum(probs * log_probs, axis=1, keepdims=True)
    d_logits += config.ent_coef * probs * (log_probs + entropy)
    d_logits /= B

    d_value = config.value_coef * (values - returns) / B

    d_out = np.concatenate([d_logits, d_value[:, None]], axis=1)
    if not np.all(np.isfinite(d_out)):
        raise TrainingDivergedError(f"non-finite a2c loss gradient at timestep {timesteps}")
    grads = backprop(net, X, d_out)
    grads.clip_global_norm(config.grad_clip)
    optimizer_step(opt, net, grads)


def _train_dqn(env_factory, alerts, config: AnalystConfig, analyst_id: str) -> TrainedAnalyst:
    env = env_factory()
    n_actions = env.n_actions
    rng = np.random.default_rng(config.seed)
    obs_size = len(env.reset(alerts[0]).to_vector())
    net = init_network(_policy_spec(obs_size, n_actions, config.hidden, extra=0), rng)
    target = net.copy()
    opt = OptimizerState.adam(net, step_size=config.learning_rate)
    threshold = _effective_threshold(config)

    capacity = config.replay_capacity
    buf_s = np.zeros((capacity, obs_size))
    buf_a = np.zeros(capacity, dtype=int)
    buf_r = np.zeros(capacity)
    buf_s2 = np.zeros((capacity, obs_size))
    buf_done = np.zeros(capacity)
    buf_len, buf_pos = 0, 0

    eps_steps = max(1, int(config.epsilon_fraction * config.max_timesteps))

    timesteps = 0
    returns: list[float] = []
    log: list[EpisodeLog] = []
    while timesteps < config.max_timesteps:
        alert = alerts[int(rng.integers(len(alerts)))]
        obs_vec = env.reset(alert).to_vector()
        ep_ret, ep_len = 0.0, 0
        while not env.done and timesteps < config.max_timesteps:
            frac = min(1.0, timesteps / eps_steps)
            epsilon = config.epsilon_start + frac * (config.epsilon_end - config.epsilon_start)
            if rng.random() < epsilon:
                action = int(rng.integers(n_actions))
            else:
                action = int(np.argmax(forward(net, obs_vec)))
            outcome = env.step(action)
            next_vec = outcome.observation.to_vector()

            buf_s[buf_pos] = obs_vec
            buf_a[buf_pos] = action
            buf_r[buf_pos] = outcome.reward
            buf_s2[buf_pos] = next_vec
            buf_done[buf_pos] = float(outcome.done)
            buf_pos = (buf_pos + 1) % capacity
            buf_len = min(buf_len + 1, capacity)

            obs_vec = next_vec
            ep_ret += outcome.reward
            ep_len += 1
            timesteps += 1

            if buf_len >= config.batch_size and timesteps % config.train_freq == 0:
                idx = rng.integers(buf_len, size=config.batch_size)
                _dqn_update(net, target, opt, config, buf_s[idx], buf_a[idx], buf_r[idx],
                            buf_s2[idx], buf_done[idx], timesteps)
            if timesteps % config.target_sync == 0:
                target = net.copy()
        if env.done:
            returns.append(ep_ret)
            log.append(EpisodeLog(len(log), ep_ret, ep_len))
            if _rolling_mean(returns) >= threshold:
                break
    return TrainedAnalyst(id=analyst_id, algorithm="dqn", policy=net, config=config,
                          n_actions=n_actions, training_log=log)


def dqn_td_update(net: Network, target: Network, gamma: float,
                  s: np.ndarray, a: np.ndarray, r: np.ndarray,
                  s2: np.ndarray, done: np.ndarray) -> tuple[Gradients, np.ndarray]:
    """Gradients of the 0.5*MSE TD loss and the Bellman targets used.

    Exposed so the one-step equivalence with vanilla Q-learning can be checked
    directly: applying these gradients with plain SGD of rate alpha moves
    Q(s,a) by alpha*(target - Q(s,a))/batch.
    """
    q = forward_batch(net, s)
    q_next = forward_batch(target, s2)
    targets = r + gamma * q_next.max(axis=1) * (1.0 - done)
    B = len(s)
    d_out = np.zeros_like(q)
    d_out[np.arange(B), a] = (q[np.arange(B), a] - targets) / B
    return backprop(net, s, d_out), targets


def _dqn_update(net, target, opt, config: AnalystConfig, s, a, r, s2, done, timesteps) -> None:
    grads, targets = dqn_td_update(net, target, config.gamma, s, a, r, s2, done)
    if not np.all(np.isfinite(targets)):
        raise TrainingDivergedError(f"non-finite Bellman target at timestep {timesteps}")
    optimizer_step(opt, net, grads)


def rollout(analyst: TrainedAnalyst, env: InvestigationEnv, alert: AlertRecord,
            mode: str = "greedy", rng: np.random.Generator | None = None) -> Trajectory:
    """Runs one investigation; the classify action is forced at the step cap
    so every trajectory terminates in a classification."""
    if mode not in ("greedy", "stochastic"):
        raise ValueError(f"unknown rollout mode {mode!r}")
    if mode == "stochastic" and rng is None:
        rng = np.random.default_rng(0)
    obs = env.reset(alert)
    steps: list[TrajStep] = []
    final_pred: Prediction | None = None
    step_count = 0
    while not env.done:
        obs_vec = obs.to_vector()
        if step_count >= env.max_steps - 1:
            action = env.classify_action
        elif mode == "greedy":
            action = analyst.greedy_action(obs_vec)
        else:
            action = sample_categorical(analyst.action_probs(obs_vec), rng)
        outcome = env.step(action)
        steps.append(TrajStep(observation=obs, action=action, reward=outcome.reward))
        final_pred = outcome.info.get("prediction", final_pred)
        obs = outcome.observation
        step_count += 1
    assert final_pred is not None
    return Trajectory(alert_id=alert.alert_id, steps=steps,
                      final_prediction=final_pred, truth=alert.label)


def collect_traces(analysts: Sequence[TrainedAnalyst], env: InvestigationEnv,
                   alerts: Sequence[AlertRecord], per_alert: int = 1,
                   limit_per_analyst: int | None = None) -> list[Trajectory]:
    """Greedy trajectories per (analyst, alert); ``limit_per_analyst`` caps
    each analyst's contribution."""
    traces: list[Trajectory] = []
    for analyst in analysts:
        count = 0
        for alert in alerts:
            for _ in range(per_alert):
                if limit_per_analyst is not None and count >= limit_per_analyst:
                    break
                traces.append(rollout(analyst, env, alert, mode="greedy"))
                count += 1
    return traces


def save_analyst(analyst: TrainedAnalyst, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_network(analyst.policy, directory / f"{analyst.id}.net.json")
    meta = {
        "id": analyst.id,
        "algorithm": analyst.algorithm,
        "n_actions": analyst.n_actions,
        "config": analyst.config.to_json_dict(),
    }
    (directory / f"{analyst.id}.json").write_text(json.dumps(meta, sort_keys=True))
    with open(directory / f"{analyst.id}.log.csv", "w") as fh:
        fh.write("episode,return,length\n")
        for row in analyst.training_log:
            fh.write(f"{row.episode},{row.ret!r},{row.length}\n")


def load_analyst(directory: str | Path, analyst_id: str) -> TrainedAnalyst:
    directory = Path(directory)
    meta = json.loads((directory / f"{analyst_id}.json").read_text())
    net = load_network(directory / f"{analyst_id}.net.json")
    log: list[EpisodeLog] = []
    log_path = directory / f"{analyst_id}.log.csv"
    if log_path.exists():
        for line in log_path.read_text().splitlines()[1:]:
            ep, ret, length = line.split(",")
            log.append(EpisodeLog(int(ep), float(ret), int(length)))
    return TrainedAnalyst(
        id=meta["id"], algorithm=meta["algorithm"], policy=net,
        config=AnalystConfig.from_json_dict(meta["config"]),
        n_actions=meta["n_actions"], training_log=log,
    )

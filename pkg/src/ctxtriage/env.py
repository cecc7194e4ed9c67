"""The alert-investigation MDP.

An episode investigates one alert: actions 0..K-1 request a context category
(revealing its feature values and re-querying the masked classifier), action K
classifies and ends the episode. Request steps earn shaped rewards; the
classify step earns the correctness/confidence reward.

Sign convention: the per-request cost, repeat penalty and no-context penalty
always reduce reward, the novelty and confidence-gain bonuses always increase
it, whatever the sign the coefficients are stored with.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .catalog import AlertRecord, ContextCatalog
from .classifiers import ContextMask, FeatureScaler, Prediction, mask_from_categories

__all__ = [
    "EnvConfig",
    "Observation",
    "StepOutcome",
    "InvestigationEnv",
    "classify_reward",
    "MaskPredictorLike",
]


class MaskPredictorLike(Protocol):
    n_classes: int

    def predict(self, mask: ContextMask, alert: AlertRecord) -> Prediction: ...


@dataclass(frozen=True)
class EnvConfig:
    correct_reward: float = 10.0
    incorrect_penalty: float = -10.0
    phi: float = 10.0    # bonus for correct and confident classifications
    psi: float = 5.0     # bonus for correct but less confident ones
    omega: float = -5.0  # penalty for classifying without using any context
    lambda1: float = -0.02  # cost per context request
    lambda2: float = -0.5   # penalty for repeated requests
    eta1: float = 0.2    # bonus for novel context requests
    eta2: float = 1.0    # bonus per unit of confidence gained
    high_conf_threshold: float = 0.9
    max_steps_per_episode: int | None = None  # defaults to 3K at env construction
    gamma: float = 0.99

    def __post_init__(self) -> None:
        if not (0.0 < self.gamma <= 1.0):
            raise ValueError("gamma must be in (0, 1]")

    def to_json_dict(self) -> dict:
        return {
            "correct_reward": self.correct_reward,
            "incorrect_penalty": self.incorrect_penalty,
            "phi": self.phi,
            "psi": self.psi,
            "omega": self.omega,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "eta1": self.eta1,
            "eta2": self.eta2,
            "high_conf_threshold": self.high_conf_threshold,
            "max_steps_per_episode": self.max_steps_per_episode,
            "gamma": self.gamma,
        }

    @staticmethod
    def from_json_dict(doc: dict) -> "EnvConfig":
        return EnvConfig(**doc)


def classify_reward(predicted: int, truth: int, conf: float, used_context: bool,
                    config: EnvConfig) -> float:
    """End-of-episode reward for a classification."""
    if predicted == truth:
        reward = config.correct_reward + conf
        reward += config.phi if conf >= config.high_conf_threshold else config.psi
    else:
        reward = config.incorrect_penalty - conf
    if not used_context:
        reward -= abs(config.omega)
    return reward


@dataclass
class Observation:
    """What the analyst sees: feature slots (uncollected features stay 0),
    per-category request counters capped at 2, current prediction confidence
    and the repeated-request ratio."""

    feature_slots: np.ndarray
    request_counters: np.ndarray
    confidence: float
    repeat_ratio: float

    def to_vector(self) -> np.ndarray:
        return np.concatenate([
            self.feature_slots,
            self.request_counters.astype(float),
            [self.confidence, self.repeat_ratio],
        ])

    def copy(self) -> "Observation":
        return Observation(self.feature_slots.copy(), self.request_counters.copy(),
                           self.confidence, self.repeat_ratio)

    @property
    def n_categories(self) -> int:
        return len(self.request_counters)

    def mask(self) -> ContextMask:
        return mask_from_categories(np.nonzero(self.request_counters)[0].tolist())


@dataclass
class StepOutcome:
    observation: Observation
    reward: float
    done: bool
    info: dict = field(default_factory=dict)


def obs_dim(n_features: int, n_categories: int) -> int:
    return n_features + n_categories + 2


class InvestigationEnv:
    """One instance serves one episode at a time; run many instances in
    parallel across episodes if needed."""

    def __init__(self, catalog: ContextCatalog, predictor: MaskPredictorLike,
                 config: EnvConfig, scaler: FeatureScaler | None = None,
                 alert_pool: list[AlertRecord] | None = None) -> None:
        self.catalog = catalog
        self.predictor = predictor
        self.alert_pool = alert_pool or []
        self.K = catalog.n_categories
        max_steps = config.max_steps_per_episode or 3 * self.K
        if max_steps < self.K + 1:
            raise ValueError("max_steps_per_episode must be at least K+1")
        self.config = config
        self.max_steps = max_steps
        self.scaler = scaler
        self._alert: AlertRecord | None = None
        self._obs: Observation | None = None
        self._done = True
        self._steps = 0
        self._repeats = 0
        self._scaled: np.ndarray | None = None

    @property
    def n_actions(self) -> int:
        return self.K + 1

    @property
    def classify_action(self) -> int:
        return self.K

    @property
    def done(self) -> bool:
        return self._done

    @property
    def alert(self) -> AlertRecord:
        assert self._alert is not None, "env not reset"
        return self._alert

    def reset(self, alert: AlertRecord) -> Observation:
        self._alert = alert
        self._scaled = self.scaler.transform(alert.values) if self.scaler else alert.values
        n = len(alert.values)
        slots = np.zeros(n)
        init = sorted(self.catalog.initial_indices)
        slots[init] = self._scaled[init]
        self._obs = Observation(
            feature_slots=slots,
            request_counters=np.zeros(self.K, dtype=int),
            confidence=1.0 / self.predictor.n_classes,
            repeat_ratio=0.0,
        )
        self._done = False
        self._steps = 0
        self._repeats = 0
        return self._obs.copy()

    def step(self, action: int) -> StepOutcome:
        if self._done or self._obs is None:
            raise RuntimeError("step called on a finished episode; call reset first")
        if not (0 <= action <= self.K):
            raise ValueError(f"action {action} out of range 0..{self.K}")
        obs = self._obs
        self._steps += 1

        if action == self.classify_action:
            pred = self.predictor.predict(obs.mask(), self.alert)
            used_context = bool(np.any(obs.request_counters > 0))
            reward = classify_reward(pred.predicted_class, self.alert.label,
                                     pred.confidence, used_context, self.config)
            self._done = True
            return StepOutcome(obs.copy(), reward, True,
                               info={"prediction": pred, "novel": False, "repeat": False})

        repeat = bool(obs.request_counters[action] > 0)
        novel = not repeat
        obs.request_counters[action] = min(obs.request_counters[action] + 1, 2)
        idx = sorted(self.catalog.categories[action].feature_indices)
        obs.feature_slots[idx] = self._scaled[idx]
        self._repeats += int(repeat)

        pred = self.predictor.predict(obs.mask(), self.alert)
        delta_conf = pred.confidence - obs.confidence
        obs.confidence = pred.confidence
        obs.repeat_ratio = self._repeats / self._steps

        reward = -abs(self.config.lambda1)
        if repeat:
            reward -= abs(self.config.lambda2)
        else:
            reward += self.config.eta1
        reward += self.config.eta2 * max(0.0, delta_conf)

        if self._steps >= self.max_steps:
            self._done = True
        return StepOutcome(obs.copy(), reward, self._done,
                           info={"novel": novel, "repeat": repeat})

"""Analyst-assistant teaming: upfront plans, iterative suggestions, adoption
strategies with the two-stage acceptance rule, and team experiments.

Stage 1: the analyst investigates on its own and keeps its prediction.
Stage 2: under the active strategy it may evaluate the assistant's additional
context; the extended prediction is adopted only on a strict confidence
improvement (collected context can't be unseen, but the original decision can
be retained).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .analysts import TrainedAnalyst, Trajectory, rollout
from .catalog import AlertRecord
from .classifiers import ContextMask, Prediction, StorePredictor, mask_from_categories
from .env import InvestigationEnv
from .imitation import AssistantPolicy
from .stats import binary_outcome, weighted_f1

__all__ = [
    "Plan",
    "SuggestionHistory",
    "AdoptionStrategy",
    "TeamDecision",
    "DecisionRecord",
    "TeamRow",
    "TeamingReport",
    "one_time_plan",
    "iterative_suggest",
    "iterative_plan",
    "adopt_decision",
    "run_team_experiment",
]


@dataclass(frozen=True)
class Plan:
    """Ordered category suggestions (no duplicates, never the classify
    action); found=False when the policy never chose to classify in time."""

    actions: tuple[int, ...]
    found: bool

    def __post_init__(self) -> None:
        if len(set(self.actions)) != len(self.actions):
            raise ValueError("plan contains duplicate categories")


@dataclass
class SuggestionHistory:
    requested: list[int] = field(default_factory=list)

    def add(self, category: int) -> None:
        self.requested.append(category)


@dataclass
class AdoptionStrategy:
    """When the analyst evaluates the assistant's suggestion: never (alone),
    always, with probability p (random), or when its own confidence is below
    t (threshold). Random gating draws from a fixed-seed stream."""

    kind: str  # alone | always | random | threshold
    p: float = 0.5
    t: float | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("alone", "always", "random", "threshold"):
            raise ValueError(f"unknown strategy kind {self.kind!r}")
        if self.kind == "threshold":
            if self.t is None or not (0.0 < self.t < 1.0):
                raise ValueError("threshold strategy needs t in (0, 1)")
        if not (0.0 <= self.p <= 1.0):
            raise ValueError("p must be in [0, 1]")
        self._rng = np.random.default_rng(self.seed)

    def reseed(self, seed: int) -> "AdoptionStrategy":
        return AdoptionStrategy(kind=self.kind, p=self.p, t=self.t, seed=seed)

    def considers(self, analyst_confidence: float) -> bool:
        if self.kind == "alone":
            return False
        if self.kind == "always":
            return True
        if self.kind == "random":
            return bool(self._rng.random() < self.p)
        return analyst_confidence < self.t

    @property
    def label(self) -> str:
        if self.kind == "threshold":
            return f"threshold:{self.t}"
        if self.kind == "random":
            return f"random:{self.p}"
        return self.kind

    @staticmethod
    def parse(label: str, seed: int = 0) -> "AdoptionStrategy":
        if label == "alone" or label == "always":
            return AdoptionStrategy(kind=label, seed=seed)
        kind, _, value = label.partition(":")
        if kind == "random":
            return AdoptionStrategy(kind="random", p=float(value) if value else 0.5, seed=seed)
        if kind == "threshold":
            return AdoptionStrategy(kind="threshold", t=float(value), seed=seed)
        raise ValueError(f"cannot parse strategy {label!r}")


@dataclass
class TeamDecision:
    analyst_mask: ContextMask
    analyst_pred: Prediction
    suggested: frozenset[int]
    considered: bool
    extended_pred: Prediction | None
    adopted: bool
    final_pred: Prediction


def one_time_plan(assistant: AssistantPolicy, env: InvestigationEnv,
                  alert: AlertRecord, max_steps: int | None = None) -> Plan:
    """Greedy decode of the assistant policy from the initial observation;
    the request actions it takes, first occurrences only, form the plan."""
    max_steps = max_steps or env.max_steps
    obs = env.reset(alert)
    actions: list[int] = []
    found = False
    for _ in range(max_steps):
        action = assistant.greedy_action(obs.to_vector())
        if action == env.classify_action:
            found = True
            break
        if action not in actions:
            actions.append(action)
        outcome = env.step(action)
        obs = outcome.observation
        if outcome.done:
            break
    return Plan(actions=tuple(actions), found=found)


def iterative_suggest(assistant: AssistantPolicy, env: InvestigationEnv,
                      history: SuggestionHistory, alert: AlertRecord) -> int | None:
    """Next-best category at the observation reached by replaying the joint
    request history; None when every category is used or the policy prefers
    classifying."""
    used = set(history.requested)
    candidates = [k for k in range(env.catalog.n_categories) if k not in used]
    if not candidates:
        return None
    obs = env.reset(alert)
    for category in history.requested:
        obs = env.step(category).observation
    probs = assistant.action_probs(obs.to_vector())
    best = max(candidates, key=lambda k: (probs[k], -k))
    if probs[env.classify_action] > probs[best]:
        return None
    return best


def iterative_plan(assistant: AssistantPolicy, env: InvestigationEnv,
                   analyst_traj: Trajectory, alert: AlertRecord, rounds: int) -> Plan:
    """Round-by-round suggestions conditioned on the joint request history:
    the analyst's own requests seed the history, then up to ``rounds``
    suggestions are appended (stopping early when the assistant would
    classify)."""
    history = SuggestionHistory(requested=list(dict.fromkeys(analyst_traj.request_actions())))
    suggested: list[int] = []
    for _ in range(rounds):
        nxt = iterative_suggest(assistant, env, history, alert)
        if nxt is None:
            break
        suggested.append(nxt)
        history.add(nxt)
    return Plan(actions=tuple(suggested), found=True)


def adopt_decision(strategy: AdoptionStrategy, analyst_traj: Trajectory, plan: Plan,
                   predictor: StorePredictor, alert: AlertRecord) -> TeamDecision:
    """Two-stage acceptance for one alert."""
    analyst_mask = mask_from_categories(analyst_traj.request_actions())
    analyst_pred = analyst_traj.final_prediction
    suggested = frozenset(plan.actions)

    considered = strategy.considers(analyst_pred.confidence)
    extended_pred = None
    adopted = False
    final_pred = analyst_pred
    if considered:
        extended_mask = analyst_mask | mask_from_categories(sorted(suggested))
        extended_pred = predictor.predict(extended_mask, alert)
        if extended_pred.confidence > analyst_pred.confidence:
            adopted = True
            final_pred = extended_pred
    return TeamDecision(
        analyst_mask=analyst_mask,
        analyst_pred=analyst_pred,
        suggested=suggested,
        considered=considered,
        extended_pred=extended_pred,
        adopted=adopted,
        final_pred=final_pred,
    )


@dataclass
class DecisionRecord:
    analyst_id: str
    strategy: str
    seed: int
    subset_id: int
    alert_id: int
    truth: int
    analyst_mask: int
    final_mask: int
    analyst_class: int
    final_class: int
    analyst_confidence: float
    final_confidence: float
    considered: bool
    adopted: bool
    analyst_outcome: str
    final_outcome: str


@dataclass
class TeamRow:
    analyst_id: str
    strategy: str
    seed: int
    subset_id: int
    weighted_f1: float
    fp: int
    fn: int
    mean_confidence: float
    median_confidence: float
    n_alerts: int
    flips_good_to_bad: int
    flips_bad_to_good: int
    adopted_count: int
    considered_count: int


@dataclass
class TeamingReport:
    rows: list[TeamRow]
    decisions: list[DecisionRecord]

    def correctness_pairs(self, strategy: str) -> tuple[int, int]:
        """(b, c) discordant counts vs the analyst's own decision: b = analyst
        right but team wrong, c = analyst wrong but team right."""
        b = c = 0
        for d in self.decisions:
            if d.strategy != strategy:
                continue
            analyst_ok = d.analyst_class == d.truth
            final_ok = d.final_class == d.truth
            if analyst_ok and not final_ok:
                b += 1
            elif final_ok and not analyst_ok:
                c += 1
        return b, c


def run_team_experiment(
    analysts: Sequence[TrainedAnalyst],
    assistant: AssistantPolicy,
    env: InvestigationEnv,
    alerts: Sequence[AlertRecord],
    strategies: Sequence[AdoptionStrategy],
    seeds: Sequence[int] = (0,),
    negative_classes: set[int] = frozenset({0}),
    subset_id: int = 0,
    mode: str = "one-time",
    rounds: int = 3,
) -> TeamingReport:
    """Evaluates every (analyst, strategy, seed) triple over the alert batch.

    ``mode`` selects one-time plans or iterative suggestions built over the
    analyst's own request history (``rounds`` caps the exchanges). Analyst
    rollouts and assistant plans are deterministic, so they are computed once
    per (analyst, alert) and reused across strategies/seeds."""
    if mode not in ("one-time", "iterative"):
        raise ValueError(f"unknown assistance mode {mode!r}")
    trajs = {
        (an.id, a.alert_id): rollout(an, env, a, mode="greedy")
        for an in analysts for a in alerts
    }
    if mode == "one-time":
        shared_plans = {a.alert_id: one_time_plan(assistant, env, a) for a in alerts}
        plans = {(an.id, a.alert_id): shared_plans[a.alert_id]
                 for an in analysts for a in alerts}
    else:
        plans = {
            (an.id, a.alert_id): iterative_plan(assistant, env,
                                                trajs[(an.id, a.alert_id)], a, rounds)
            for an in analysts for a in alerts
        }

    rows: list[TeamRow] = []
    decisions: list[DecisionRecord] = []
    for analyst in analysts:
        for strategy in strategies:
            for seed in seeds:
                strat = strategy.reseed(seed * 10_007 + strategy_offset(strategy))
                batch: list[DecisionRecord] = []
                for alert in alerts:
                    traj = trajs[(analyst.id, alert.alert_id)]
                    decision = adopt_decision(strat, traj,
                                              plans[(analyst.id, alert.alert_id)],
                                              env.predictor, alert)
                    extended_mask = decision.analyst_mask | mask_from_categories(sorted(decision.suggested))
                    batch.append(DecisionRecord(
                        analyst_id=analyst.id,
                        strategy=strat.label,
                        seed=seed,
                        subset_id=subset_id,
                        alert_id=alert.alert_id,
                        truth=alert.label,
                        analyst_mask=decision.analyst_mask,
                        final_mask=extended_mask if decision.adopted else decision.analyst_mask,
                        analyst_class=decision.analyst_pred.predicted_class,
                        final_class=decision.final_pred.predicted_class,
                        analyst_confidence=decision.analyst_pred.confidence,
                        final_confidence=decision.final_pred.confidence,
                        considered=decision.considered,
                        adopted=decision.adopted,
                        analyst_outcome=binary_outcome(
                            decision.analyst_pred.predicted_class, alert.label, negative_classes),
                        final_outcome=binary_outcome(
                            decision.final_pred.predicted_class, alert.label, negative_classes),
                    ))
                decisions.extend(batch)
                rows.append(_summarize(analyst.id, strat.label, seed, subset_id, batch))
    return TeamingReport(rows=rows, decisions=decisions)


def strategy_offset(strategy: AdoptionStrategy) -> int:
    return abs(hash_stable(strategy.label)) % 10_007


def hash_stable(text: str) -> int:
    value = 0
    for ch in text:
        value = (value * 131 + ord(ch)) % (1 << 31)
    return value


def _summarize(analyst_id: str, strategy: str, seed: int, subset_id: int,
               batch: list[DecisionRecord]) -> TeamRow:
    preds = [d.final_class for d in batch]
    truths = [d.truth for d in batch]
    confs = np.array([d.final_confidence for d in batch])
    good = {"TP", "TN"}
    flips_gb = sum(1 for d in batch
                   if d.analyst_outcome in good and d.final_outcome not in good)
    flips_bg = sum(1 for d in batch
                   if d.analyst_outcome not in good and d.final_outcome in good)
    fp = sum(1 for d in batch if d.final_outcome == "FP")
    fn = sum(1 for d in batch if d.final_outcome == "FN")
    return TeamRow(
        analyst_id=analyst_id,
        strategy=strategy,
        seed=seed,
        subset_id=subset_id,
        weighted_f1=weighted_f1(preds, truths),
        fp=fp,
        fn=fn,
        mean_confidence=float(confs.mean()),
        median_confidence=float(np.median(confs)),
        n_alerts=len(batch),
        flips_good_to_bad=flips_gb,
        flips_bad_to_good=flips_bg,
        adopted_count=sum(1 for d in batch if d.adopted),
        considered_count=sum(1 for d in batch if d.considered),
    )

import numpy as np
import pytest

from ctxtriage.analysts import TrainedAnalyst, Trajectory, TrajStep, rollout
from ctxtriage.catalog import AlertRecord
from ctxtriage.classifiers import mask_from_categories, prediction_from_probs
from ctxtriage.env import Observation
from ctxtriage.imitation import AssistantPolicy
from ctxtriage.nets import NetworkSpec, zero_network
from ctxtriage.teaming import (
    AdoptionStrategy,
    Plan,
    SuggestionHistory,
    TeamingReport,
    adopt_decision,
    iterative_suggest,
    one_time_plan,
    run_team_experiment,
)


class StubPolicy:
    """Assistant with a fixed action script or fixed probabilities."""

    def __init__(self, script=None, probs=None, n_actions=4):
        self.script = list(script) if script else None
        self.probs = probs
        self.n_actions = n_actions
        self._i = 0

    def greedy_action(self, vec):
        if self.script is not None:
            action = self.script[min(self._i, len(self.script) - 1)]
            self._i += 1
            return action
        return int(np.argmax(self.probs))

    def action_probs(self, vec):
        if self.probs is not None:
            return np.asarray(self.probs)
        p = np.zeros(self.n_actions)
        p[self.greedy_action(vec)] = 1.0
        return p


class MapPredictor:
    """Scripted confidences per mask (class 0 always argmax)."""

    def __init__(self, conf_by_mask, n_classes=3, winner_by_mask=None):
        self.conf_by_mask = conf_by_mask
        self.n_classes = n_classes
        self.winner_by_mask = winner_by_mask or {}

    def predict(self, mask, alert):
        conf = self.conf_by_mask.get(mask, 1.0 / self.n_classes)
        winner = self.winner_by_mask.get(mask, 0)
        probs = np.full(self.n_classes, (1.0 - conf) / (self.n_classes - 1))
        probs[winner] = conf
        return prediction_from_probs(probs)


def make_traj(request_actions, final_conf, truth=0, winner=0, n_categories=3):
    obs = Observation(np.zeros(4), np.zeros(n_categories, dtype=int), 0.3, 0.0)
    steps = [TrajStep(obs, a, 0.1) for a in request_actions]
    steps.append(TrajStep(obs, n_categories, 1.0))
    probs = np.full(3, (1 - final_conf) / 2)
    probs[winner] = final_conf
    return Trajectory(alert_id=1, steps=steps,
                      final_prediction=prediction_from_probs(probs), truth=truth)


ALERT = AlertRecord(1, np.zeros(4), 0)


# ------------------------------------------------------------------- plans

def test_plan_rejects_duplicates():
    with pytest.raises(ValueError):
        Plan(actions=(1, 1), found=True)


def test_one_time_plan_immediate_classify(toy_world):
    env = toy_world.make_env()
    assistant = StubPolicy(script=[3])
    plan = one_time_plan(assistant, env, toy_world.train[0])
    assert plan.actions == ()
    assert plan.found


def test_one_time_plan_cycling_policy_not_found(toy_world):
    env = toy_world.make_env()
    assistant = StubPolicy(script=[1] * 50)
    plan = one_time_plan(assistant, env, toy_world.train[0])
    assert plan.actions == (1,)
    assert not plan.found


def test_one_time_plan_collects_in_order(toy_world):
    env = toy_world.make_env()
    assistant = StubPolicy(script=[2, 0, 3])
    plan = one_time_plan(assistant, env, toy_world.train[0])
    assert plan.actions == (2, 0)
    assert plan.found


def test_iterative_suggest_exhausted(toy_world):
    env = toy_world.make_env()
    assistant = StubPolicy(probs=[0.2, 0.3, 0.4, 0.1])
    history = SuggestionHistory(requested=[0, 1, 2])
    assert iterative_suggest(assistant, env, history, toy_world.train[0]) is None


def test_iterative_suggest_empty_history_matches_plan_head(toy_world):
    env = toy_world.make_env()
    assistant = StubPolicy(probs=[0.1, 0.5, 0.3, 0.1])
    suggestion = iterative_suggest(assistant, env, SuggestionHistory(), toy_world.train[0])
    plan_head = StubPolicy(probs=[0.1, 0.5, 0.3, 0.1]).greedy_action(None)
    assert suggestion == plan_head == 1


def test_iterative_suggest_second_ranked_when_top_used(toy_world):
    env = toy_world.make_env()
    assistant = StubPolicy(probs=[0.25, 0.5, 0.24, 0.01])
    suggestion = iterative_suggest(assistant, env, SuggestionHistory(requested=[1]),
                                   toy_world.train[0])
    assert suggestion == 0


def test_iterative_suggest_none_when_classify_dominates(toy_world):
    env = toy_world.make_env()
    assistant = StubPolicy(probs=[0.1, 0.2, 0.1, 0.6])
    assert iterative_suggest(assistant, env, SuggestionHistory(), toy_world.train[0]) is None


# ---------------------------------------------------------------- adoption

def test_threshold_gate_closed():
    strategy = AdoptionStrategy(kind="threshold", t=0.9)
    traj = make_traj([0], final_conf=0.92)
    decision = adopt_decision(strategy, traj, Plan((1,), True), MapPredictor({}), ALERT)
    assert not decision.considered
    assert decision.final_pred is decision.analyst_pred


def test_adoption_on_strict_improvement():
    strategy = AdoptionStrategy(kind="threshold", t=0.9)
    traj = make_traj([0], final_conf=0.85)
    predictor = MapPredictor({mask_from_categories([0, 1]): 0.95})
    decision = adopt_decision(strategy, traj, Plan((1,), True), predictor, ALERT)
    assert decision.considered and decision.adopted
    assert decision.final_pred.confidence == pytest.approx(0.95)


def test_no_adoption_when_plan_subset_of_mask():
    strategy = AdoptionStrategy(kind="always")
    traj = make_traj([0, 1], final_conf=0.85)
    predictor = MapPredictor({mask_from_categories([0, 1]): 0.85})
    decision = adopt_decision(strategy, traj, Plan((1,), True), predictor, ALERT)
    assert decision.considered
    assert not decision.adopted  # equal confidence is not strict improvement
    assert decision.final_pred is decision.analyst_pred


def test_alone_never_considers():
    strategy = AdoptionStrategy(kind="alone")
    traj = make_traj([0], final_conf=0.2)
    decision = adopt_decision(strategy, traj, Plan((1, 2), True), MapPredictor({}), ALERT)
    assert not decision.considered and not decision.adopted


def test_random_strategy_reproducible():
    outcomes = []
    for _ in range(2):
        strategy = AdoptionStrategy(kind="random", p=0.5, seed=42)
        outcomes.append([strategy.considers(0.5) for _ in range(20)])
    assert outcomes[0] == outcomes[1]
    assert any(outcomes[0]) and not all(outcomes[0])


def test_strategy_validation_and_labels():
    with pytest.raises(ValueError):
        AdoptionStrategy(kind="threshold", t=1.5)
    with pytest.raises(ValueError):
        AdoptionStrategy(kind="nope")
    assert AdoptionStrategy.parse("threshold:0.8").label == "threshold:0.8"
    assert AdoptionStrategy.parse("random:0.25").p == 0.25
    assert AdoptionStrategy.parse("alone").kind == "alone"


def test_threshold_monotone_gating():
    confs = np.linspace(0.05, 0.99, 25)
    considered = {}
    for t in (0.6, 0.7, 0.8, 0.9):
        strategy = AdoptionStrategy(kind="threshold", t=t)
        considered[t] = {i for i, c in enumerate(confs) if strategy.considers(c)}
    assert considered[0.6] <= considered[0.7] <= considered[0.8] <= considered[0.9]


def test_adoption_never_reduces_confidence():
    rng = np.random.default_rng(0)
    for _ in range(50):
        conf = float(rng.uniform(0.34, 0.99))
        ext = float(rng.uniform(0.34, 0.99))
        traj = make_traj([0], final_conf=conf)
        predictor = MapPredictor({mask_from_categories([0, 1]): ext})
        decision = adopt_decision(AdoptionStrategy(kind="always"), traj,
                                  Plan((1,), True), predictor, ALERT)
        assert decision.final_pred.confidence >= traj.final_prediction.confidence - 1e-12


# ------------------------------------------------------------- experiments

@pytest.fixture(scope="module")
def team_setup(toy_world):
    env = toy_world.make_env()
    from ctxtriage.analysts import AnalystConfig, train_analyst

    analyst = train_analyst(lambda: env, toy_world.train,
                            AnalystConfig.a2c(max_timesteps=6000, seed=4,
                                              reward_stop_threshold=21.0),
                            analyst_id="an0")
    assistant = StubPolicy(script=[2, 3], n_actions=4)

    class FrozenAssistant:
        n_actions = 4

        def greedy_action(self, vec):
            counters = vec[8:11]
            return 2 if counters[2] == 0 else 3

        def action_probs(self, vec):
            p = np.zeros(4)
            p[self.greedy_action(vec)] = 1.0
            return p

    return env, analyst, FrozenAssistant()


def test_alone_equals_baseline(toy_world, team_setup):
    env, analyst, assistant = team_setup
    alerts = toy_world.holdout[:20]
    report = run_team_experiment([analyst], assistant, env, alerts,
                                 [AdoptionStrategy(kind="alone")], seeds=(0,))
    for d in report.decisions:
        traj = rollout(analyst, env, next(a for a in alerts if a.alert_id == d.alert_id))
        assert d.final_class == traj.final_prediction.predicted_class
        assert d.final_confidence == traj.final_prediction.confidence


def test_alone_vs_always_differ_only_when_considered(toy_world, team_setup):
    env, analyst, assistant = team_setup
    alerts = toy_world.holdout[:20]
    strategies = [AdoptionStrategy(kind="alone"), AdoptionStrategy(kind="always")]
    report = run_team_experiment([analyst], assistant, env, alerts, strategies, seeds=(0,))
    alone = {d.alert_id: d for d in report.decisions if d.strategy == "alone"}
    always = {d.alert_id: d for d in report.decisions if d.strategy == "always"}
    for alert_id, d in always.items():
        if not d.adopted:
            assert d.final_class == alone[alert_id].final_class


def test_report_cardinality(toy_world, team_setup):
    env, analyst, assistant = team_setup
    alerts = toy_world.holdout[:10]
    strategies = [AdoptionStrategy(kind="alone"), AdoptionStrategy(kind="always"),
                  AdoptionStrategy(kind="threshold", t=0.9)]
    report = run_team_experiment([analyst, analyst], assistant, env, alerts,
                                 strategies, seeds=(0, 1))
    assert len(report.rows) == 2 * 3 * 2
    assert len(report.decisions) == 2 * 3 * 2 * 10


def test_experiment_deterministic(toy_world, team_setup):
    env, analyst, assistant = team_setup
    alerts = toy_world.holdout[:10]
    strategies = [AdoptionStrategy(kind="random", p=0.5)]

    def run():
        report = run_team_experiment([analyst], assistant, env, alerts, strategies,
                                     seeds=(3,))
        return [(d.alert_id, d.considered, d.adopted, d.final_class)
                for d in report.decisions]

    assert run() == run()


def test_flip_counts_hand_fixture():
    """10 alerts with scripted analyst/team outcomes; flips counted by hand."""
    decisions = []
    script = [
        # (analyst_outcome, final_outcome)
        ("TP", "TP"), ("TN", "FP"), ("TN", "TN"), ("FN", "TP"), ("FP", "FP"),
        ("TP", "TN"), ("FN", "FN"), ("TN", "FN"), ("FP", "TP"), ("FN", "TN"),
    ]
    from ctxtriage.teaming import DecisionRecord, _summarize

    for i, (a_out, f_out) in enumerate(script):
        decisions.append(DecisionRecord(
            analyst_id="x", strategy="always", seed=0, subset_id=0, alert_id=i,
            truth=0, analyst_mask=0, final_mask=0, analyst_class=0, final_class=0,
            analyst_confidence=0.5, final_confidence=0.6, considered=True,
            adopted=True, analyst_outcome=a_out, final_outcome=f_out,
        ))
    row = _summarize("x", "always", 0, 0, decisions)
    # good->bad: TN->FP, TN->FN  (TP->TN stays within the good set)
    assert row.flips_good_to_bad == 2
    # bad->good: FN->TP, FP->TP, FN->TN
    assert row.flips_bad_to_good == 3


def test_iterative_plan_builds_on_analyst_history(toy_world):
    from ctxtriage.teaming import iterative_plan

    env = toy_world.make_env()
    # assistant prefers 0 > 1 > 2 > classify; analyst already fetched 0
    assistant = StubPolicy(probs=[0.5, 0.3, 0.15, 0.05])
    traj = make_traj([0], final_conf=0.5)
    plan = iterative_plan(assistant, env, traj, toy_world.train[0], rounds=2)
    assert plan.actions == (1, 2)
    one_round = iterative_plan(assistant, env, traj, toy_world.train[0], rounds=1)
    assert one_round.actions == (1,)


def test_iterative_plan_stops_when_classify_dominates(toy_world):
    from ctxtriage.teaming import iterative_plan

    env = toy_world.make_env()
    assistant = StubPolicy(probs=[0.1, 0.1, 0.1, 0.7])
    traj = make_traj([0], final_conf=0.5)
    plan = iterative_plan(assistant, env, traj, toy_world.train[0], rounds=3)
    assert plan.actions == ()
    assert plan.found


def test_run_experiment_iterative_mode(toy_world, team_setup):
    env, analyst, assistant = team_setup
    alerts = toy_world.holdout[:10]
    report = run_team_experiment([analyst], assistant, env, alerts,
                                 [AdoptionStrategy(kind="always")], seeds=(0,),
                                 mode="iterative", rounds=2)
    assert len(report.decisions) == 10
    with pytest.raises(ValueError, match="mode"):
        run_team_experiment([analyst], assistant, env, alerts,
                            [AdoptionStrategy(kind="always")], mode="psychic")


def test_correctness_pairs():
    report = TeamingReport(rows=[], decisions=[])
    from ctxtriage.teaming import DecisionRecord

    data = [(0, 0, 0), (0, 1, 0), (1, 0, 0), (2, 2, 2), (1, 1, 0)]
    for i, (a_cls, f_cls, truth) in enumerate(data):
        report.decisions.append(DecisionRecord(
            analyst_id="x", strategy="s", seed=0, subset_id=0, alert_id=i, truth=truth,
            analyst_mask=0, final_mask=0, analyst_class=a_cls, final_class=f_cls,
            analyst_confidence=0.5, final_confidence=0.5, considered=True, adopted=False,
            analyst_outcome="TP", final_outcome="TP",
        ))
    b, c = report.correctness_pairs("s")
    assert (b, c) == (1, 1)

import numpy as np
import pytest

from ctxtriage.catalog import AlertRecord, ContextCatalog, ContextCategory
from ctxtriage.classifiers import prediction_from_probs
from ctxtriage.env import EnvConfig, InvestigationEnv, classify_reward


class ScriptedPredictor:
    """Returns a fixed confidence per mask; class 0 always wins."""

    def __init__(self, conf_by_mask, n_classes=4):
        self.conf_by_mask = conf_by_mask
        self.n_classes = n_classes

    def predict(self, mask, alert):
        conf = self.conf_by_mask.get(mask, 1.0 / self.n_classes)
        probs = np.full(self.n_classes, (1.0 - conf) / (self.n_classes - 1))
        probs[0] = conf
        return prediction_from_probs(probs)


def small_catalog(n_features=8, n_categories=3):
    per = (n_features - 2) // n_categories
    cats = tuple(
        ContextCategory(k, f"cat{k}", frozenset(range(2 + k * per, 2 + (k + 1) * per)))
        for k in range(n_categories)
    )
    return ContextCatalog(initial_indices=frozenset({0, 1}), categories=cats)


def make_env(conf_by_mask=None, **config_kwargs):
    catalog = small_catalog()
    predictor = ScriptedPredictor(conf_by_mask or {})
    env = InvestigationEnv(catalog, predictor, EnvConfig(**config_kwargs))
    alert = AlertRecord(7, np.arange(8, dtype=float) + 1.0, label=0)
    return env, alert


# ---------------------------------------------------------------- Eq (1)

CFG = EnvConfig()


def test_classify_reward_correct_high_confidence():
    assert classify_reward(1, 1, 0.95, True, CFG) == pytest.approx(20.95, abs=1e-12)


def test_classify_reward_correct_low_confidence():
    assert classify_reward(1, 1, 0.70, True, CFG) == pytest.approx(15.70, abs=1e-12)


def test_classify_reward_no_context_penalty():
    assert classify_reward(1, 1, 0.95, False, CFG) == pytest.approx(15.95, abs=1e-12)


def test_classify_reward_incorrect():
    assert classify_reward(0, 1, 0.95, True, CFG) == pytest.approx(-10.95, abs=1e-12)


# ---------------------------------------------------------------- reset

def test_reset_counters_zero_and_uniform_confidence():
    env, alert = make_env()
    obs = env.reset(alert)
    assert np.array_equal(obs.request_counters, np.zeros(3, dtype=int))
    assert obs.confidence == pytest.approx(0.25)
    assert obs.repeat_ratio == 0.0


def test_reset_populates_only_initial_slots():
    env, alert = make_env()
    obs = env.reset(alert)
    assert np.array_equal(obs.feature_slots[:2], alert.values[:2])
    assert np.all(obs.feature_slots[2:] == 0.0)


# ---------------------------------------------------------------- Eq (2)

def test_first_request_flat_confidence_reward():
    env, alert = make_env(conf_by_mask={0b001: 0.25})
    env.reset(alert)
    outcome = env.step(0)
    assert outcome.reward == pytest.approx(0.18, abs=1e-12)
    assert outcome.info["novel"] and not outcome.info["repeat"]


def test_repeat_request_penalty():
    env, alert = make_env(conf_by_mask={0b001: 0.25})
    env.reset(alert)
    env.step(0)
    outcome = env.step(0)
    assert outcome.reward == pytest.approx(-0.52, abs=1e-12)
    assert outcome.info["repeat"] and not outcome.info["novel"]


def test_first_request_with_confidence_gain():
    env, alert = make_env(conf_by_mask={0b001: 0.35})
    env.reset(alert)
    outcome = env.step(0)
    assert outcome.reward == pytest.approx(0.28, abs=1e-12)


def test_confidence_drop_not_rewarded_or_penalized():
    env, alert = make_env(conf_by_mask={0b001: 0.80, 0b011: 0.40})
    env.reset(alert)
    env.step(0)
    outcome = env.step(1)  # confidence falls 0.80 -> 0.40; delta term clips at 0
    assert outcome.reward == pytest.approx(0.18, abs=1e-12)
    assert outcome.observation.confidence == pytest.approx(0.40)


def test_counter_caps_at_two():
    env, alert = make_env()
    env.reset(alert)
    for _ in range(3):
        outcome = env.step(1)
    assert outcome.observation.request_counters[1] == 2


def test_request_populates_category_slots():
    env, alert = make_env()
    env.reset(alert)
    outcome = env.step(0)
    cat0 = sorted(env.catalog.categories[0].feature_indices)
    assert np.array_equal(outcome.observation.feature_slots[cat0], alert.values[cat0])


def test_repeat_ratio_tracks_repeats():
    env, alert = make_env()
    env.reset(alert)
    env.step(0)
    outcome = env.step(0)
    assert outcome.observation.repeat_ratio == pytest.approx(0.5)
    outcome = env.step(1)
    assert outcome.observation.repeat_ratio == pytest.approx(1 / 3)


def test_classify_ends_episode_with_prediction():
    env, alert = make_env(conf_by_mask={0b001: 0.9})
    env.reset(alert)
    env.step(0)
    outcome = env.step(env.classify_action)
    assert outcome.done
    pred = outcome.info["prediction"]
    # correct class, conf 0.9 >= threshold, context used: 10 + 0.9 + 10
    assert outcome.reward == pytest.approx(20.9, abs=1e-12)
    assert pred.predicted_class == 0


def test_classify_without_context_applies_omega():
    env, alert = make_env(conf_by_mask={0: 0.95})
    env.reset(alert)
    outcome = env.step(env.classify_action)
    assert outcome.reward == pytest.approx(20.95 - 5.0, abs=1e-12)


def test_step_after_done_rejected():
    env, alert = make_env()
    env.reset(alert)
    env.step(env.classify_action)
    with pytest.raises(RuntimeError):
        env.step(0)


def test_max_steps_truncates():
    env, alert = make_env(max_steps_per_episode=4)
    env.reset(alert)
    outcomes = [env.step(k % 3) for k in range(4)]
    assert outcomes[-1].done
    assert "prediction" not in outcomes[-1].info


def test_deterministic_transitions():
    def run():
        env, alert = make_env(conf_by_mask={0b001: 0.4, 0b011: 0.8})
        env.reset(alert)
        rewards = [env.step(a).reward for a in (0, 1, 0, env.classify_action)]
        return rewards

    assert run() == run()


def test_observation_vector_layout():
    env, alert = make_env()
    obs = env.reset(alert)
    vec = obs.to_vector()
    assert len(vec) == 8 + 3 + 2
    assert vec[-2] == pytest.approx(0.25)  # confidence
    assert vec[-1] == 0.0  # repeat ratio


def test_invalid_action_rejected():
    env, alert = make_env()
    env.reset(alert)
    with pytest.raises(ValueError):
        env.step(4)


def test_gamma_validation():
    with pytest.raises(ValueError):
        EnvConfig(gamma=0.0)


def test_env_config_json_roundtrip():
    cfg = EnvConfig(max_steps_per_episode=9)
    assert EnvConfig.from_json_dict(cfg.to_json_dict()) == cfg

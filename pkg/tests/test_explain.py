import numpy as np
import pytest

from ctxtriage.catalog import (
    AlertRecord,
    SyntheticConfig,
    balance_oversample,
    feature_stats,
    generate_synthetic_alerts,
)
from ctxtriage.classifiers import ClassifierConfig, ClassifierStore, FeatureScaler, StorePredictor
from ctxtriage.explain import (
    characteristic_value,
    evidence_view,
    shapley_exact,
    shapley_sampled,
    shapley_values_exact,
    shapley_values_sampled,
)


def brute_force_shapley(values, n):
    """Independent oracle: average marginal contribution over all n! orderings."""
    import itertools
    import math

    phi = np.zeros(n)
    for order in itertools.permutations(range(n)):
        mask = 0
        for k in order:
            phi[k] += values[mask | (1 << k)] - values[mask]
            mask |= 1 << k
    return phi / math.factorial(n)


@pytest.fixture(scope="module")
def predictor():
    config = SyntheticConfig.default(n_classes=3, n_categories=4, cats_per_class=2,
                                     n_alerts=700, noise_scale=0.4)
    schema, catalog, alerts = generate_synthetic_alerts(config, seed=6)
    train = balance_oversample(alerts[:500], 450, seed=0)
    store = ClassifierStore(catalog, schema, 3, FeatureScaler.fit(alerts[:500]))
    return StorePredictor(store, train, ClassifierConfig(epochs=25, learning_rate=0.05)), alerts


# ----------------------------------------------------------- game-level tests

def test_two_player_symmetric_game():
    values = {0b00: 0.0, 0b01: 0.5, 0b10: 0.5, 0b11: 1.0}
    phi = shapley_values_exact(lambda m: values[m], 2)
    assert np.allclose(phi, [0.5, 0.5])


def test_dummy_player_gets_zero():
    rng = np.random.default_rng(1)
    base = {m: float(rng.random()) for m in range(8)}
    # player 2 contributes nothing: v(S | {2}) = v(S)
    values = {m: base[m & 0b011] for m in range(8)}
    phi = shapley_values_exact(lambda m: values[m], 3)
    assert phi[2] == 0.0


def test_efficiency_on_random_games():
    rng = np.random.default_rng(2)
    for _ in range(20):
        values = {m: float(rng.normal()) for m in range(16)}
        phi = shapley_values_exact(lambda m: values[m], 4)
        assert phi.sum() == pytest.approx(values[0b1111] - values[0b0000], abs=1e-12)


def test_symmetry_on_symmetric_players():
    # v depends only on |S| -> all players equal
    rng = np.random.default_rng(3)
    by_size = rng.normal(size=5)
    phi = shapley_values_exact(lambda m: float(by_size[bin(m).count('1')]), 4)
    assert np.max(np.abs(phi - phi[0])) <= 1e-12


def test_exact_matches_permutation_oracle():
    rng = np.random.default_rng(4)
    values = {m: float(rng.normal()) for m in range(16)}
    phi = shapley_values_exact(lambda m: values[m], 4)
    oracle = brute_force_shapley(values, 4)
    assert np.max(np.abs(phi - oracle)) <= 1e-12


def test_sampled_close_to_exact():
    # probability-valued games, like the classifier-backed characteristic value
    rng = np.random.default_rng(0)
    values = {m: float(rng.random()) for m in range(16)}
    exact = shapley_values_exact(lambda m: values[m], 4)
    sampled = shapley_values_sampled(lambda m: values[m], 4, n_permutations=2000, seed=0)
    assert np.max(np.abs(sampled - exact)) <= 0.02


def test_sampled_single_player_exact():
    values = {0: 0.2, 1: 0.9}
    sampled = shapley_values_sampled(lambda m: values[m], 1, n_permutations=1, seed=3)
    assert sampled[0] == pytest.approx(0.7)


def test_sampled_deterministic_per_seed():
    rng = np.random.default_rng(6)
    values = {m: float(rng.normal()) for m in range(16)}
    a = shapley_values_sampled(lambda m: values[m], 4, 50, seed=11)
    b = shapley_values_sampled(lambda m: values[m], 4, 50, seed=11)
    assert np.array_equal(a, b)


def test_sampled_error_shrinks_with_more_permutations():
    rng = np.random.default_rng(7)
    errors = {16: [], 64: [], 256: []}
    for trial in range(20):
        values = {m: float(rng.normal()) for m in range(32)}
        exact = shapley_values_exact(lambda m: values[m], 5)
        for n_perm in errors:
            sampled = shapley_values_sampled(lambda m: values[m], 5, n_perm, seed=trial)
            errors[n_perm].append(np.max(np.abs(sampled - exact)))
    means = [np.mean(errors[n]) for n in (16, 64, 256)]
    assert means[0] > means[1] > means[2]


def test_too_many_players_rejected():
    with pytest.raises(ValueError, match="sampled"):
        shapley_values_exact(lambda m: 0.0, 17)


# ---------------------------------------------------------- alert-level tests

def test_characteristic_value_bounds(predictor):
    pred, alerts = predictor
    rng = np.random.default_rng(0)
    for _ in range(6):
        mask = int(rng.integers(16))
        v = characteristic_value(mask, alerts[0], 1, pred)
        assert 0.0 <= v <= 1.0


def test_alert_attribution_efficiency(predictor):
    pred, alerts = predictor
    attribution = shapley_exact(alerts[0], pred)
    for c in range(3):
        total = attribution.values[c].sum()
        assert total == pytest.approx(attribution.full[c] - attribution.baseline[c],
                                      abs=1e-9)


def test_alert_attribution_single_class(predictor):
    pred, alerts = predictor
    attribution = shapley_exact(alerts[1], pred, class_id=2)
    assert set(attribution.values) == {2}


def test_attribution_json_shape(predictor):
    pred, alerts = predictor
    attribution = shapley_exact(alerts[0], pred, class_id=0)
    doc = attribution.to_json_dict(["a", "b", "c"], ["c0", "c1", "c2", "c3"])
    assert set(doc["attributions"]["a"]) == {"c0", "c1", "c2", "c3"}
    assert "baseline" in doc and "full" in doc


# ---------------------------------------------------------------- evidence

def test_evidence_masked_out_feature_zero(predictor):
    pred, alerts = predictor
    stats = feature_stats(alerts[:500])
    view = evidence_view(alerts[0], 0b0001, pred, stats)
    catalog = pred.store.catalog
    outside = sorted(catalog.categories[2].feature_indices)
    for c, contrib in view.contributions.items():
        assert np.all(contrib[outside] == 0.0)


def test_evidence_constant_model_all_zero(predictor):
    pred, alerts = predictor
    stats = feature_stats(alerts[:500])
    handle = pred.handle(0b0011)
    saved = [w.copy() for w in handle.model.weights]
    try:
        for w in handle.model.weights:
            w[:] = 0.0
        view = evidence_view(alerts[0], 0b0011, pred, stats)
        for contrib in view.contributions.values():
            assert np.all(contrib == 0.0)
    finally:
        for w, s in zip(handle.model.weights, saved):
            w[:] = s


def test_evidence_linear_model_closed_form(predictor):
    pred, alerts = predictor
    stats = feature_stats(alerts[:500])
    mask = 0b0101
    handle = pred.handle(mask)
    assert len(handle.model.weights) == 1  # hidden=0 -> linear logits
    alert = alerts[3]
    view = evidence_view(alert, mask, pred, stats)
    W = handle.model.weights[0]
    scaler = handle.scaler
    for pos, i in enumerate(handle.feature_indices):
        x_scaled = (alert.values[i] - scaler.mean[i]) / scaler.std[i]
        b_scaled = (stats.mean[i] - scaler.mean[i]) / scaler.std[i]
        for c in range(3):
            expected = W[pos, c] * (x_scaled - b_scaled)
            assert view.contributions[c][i] == pytest.approx(expected, abs=1e-10)


def test_evidence_summaries_additive(predictor):
    pred, alerts = predictor
    stats = feature_stats(alerts[:500])
    view = evidence_view(alerts[2], 0b0110, pred, stats)
    for c, contrib in view.contributions.items():
        assert view.summaries[c] == pytest.approx(contrib.sum(), abs=1e-12)

"""Shapley attributions over context categories and per-feature evidence
views.

The coalition game treats each context category as a player; the value of a
coalition is the class probability produced by the classifier trained on that
mask. Exact enumeration covers every coalition (K <= 16); a permutation
sampler handles anything larger. Evidence views attribute within one mask by
occluding single features against their historical mean, measured on the
pre-softmax logits so per-class summaries stay additive.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .catalog import AlertRecord, FeatureStats
from .classifiers import ContextMask, StorePredictor, mask_feature_indices

__all__ = [
    "ShapleyAttribution",
    "EvidenceView",
    "characteristic_value",
    "shapley_exact",
    "shapley_sampled",
    "shapley_values_exact",
    "shapley_values_sampled",
    "evidence_view",
]

MAX_EXACT_CATEGORIES = 16


@dataclass
class ShapleyAttribution:
    """Per (category, class) attribution with the empty- and full-coalition
    values; for each class the attributions sum to full - baseline."""

    values: dict[int, np.ndarray]  # class id -> K-vector of category values
    baseline: dict[int, float]     # class id -> v(empty mask)
    full: dict[int, float]         # class id -> v(full mask)
    method: str

    def to_json_dict(self, class_names: Sequence[str], category_names: Sequence[str]) -> dict:
        return {
            "method": self.method,
            "attributions": {
                class_names[c]: {
                    category_names[k]: float(v[k]) for k in range(len(category_names))
                }
                for c, v in sorted(self.values.items())
            },
            "baseline": {class_names[c]: v for c, v in sorted(self.baseline.items())},
            "full": {class_names[c]: v for c, v in sorted(self.full.items())},
        }


def characteristic_value(mask: ContextMask, alert: AlertRecord, class_id: int,
                         predictor: StorePredictor) -> float:
    """Coalition value: probability of ``class_id`` under the mask's model."""
    return float(predictor.predict(mask, alert).probs[class_id])


def shapley_values_exact(value_fn: Callable[[int], float], n_players: int) -> np.ndarray:
    """Classical Shapley values of a game given ``value_fn(mask) -> value``."""
    if n_players > MAX_EXACT_CATEGORIES:
        raise ValueError(
            f"{n_players} players need 2^{n_players} evaluations; use the sampled estimator"
        )
    values = {mask: value_fn(mask) for mask in range(1 << n_players)}
    fact = [math.factorial(i) for i in range(n_players + 1)]
    phi = np.zeros(n_players)
    players = range(n_players)
    for size in range(n_players):
        weight = fact[size] * fact[n_players - size - 1] / fact[n_players]
        for coalition in itertools.combinations(players, size):
            mask = sum(1 << k for k in coalition)
            for k in players:
                if not mask >> k & 1:
                    phi[k] += weight * (values[mask | (1 << k)] - values[mask])
    return phi


def shapley_values_sampled(value_fn: Callable[[int], float], n_players: int,
                           n_permutations: int, seed: int) -> np.ndarray:
    """Permutation-sampling estimate: average marginal contribution of each
    player over random orderings. Coalition values are memoized."""
    if n_permutations < 1:
        raise ValueError("n_permutations must be >= 1")
    rng = np.random.default_rng(seed)
    cache: dict[int, float] = {}

    def v(mask: int) -> float:
        if mask not in cache:
            cache[mask] = value_fn(mask)
        return cache[mask]

    phi = np.zeros(n_players)
    for _ in range(n_permutations):
        order = rng.permutation(n_players)
        mask = 0
        prev = v(0)
        for k in order:
            mask |= 1 << int(k)
            cur = v(mask)
            phi[int(k)] += cur - prev
            prev = cur
    return phi / n_permutations


def _attribution_for_classes(
    alert: AlertRecord,
    predictor: StorePredictor,
    class_ids: Sequence[int],
    solver: Callable[[Callable[[int], float]], np.ndarray],
    method: str,
) -> ShapleyAttribution:
    probs_cache: dict[int, np.ndarray] = {}

    def probs(mask: int) -> np.ndarray:
        if mask not in probs_cache:
            probs_cache[mask] = predictor.predict(mask, alert).probs
        return probs_cache[mask]

    K = predictor.store.catalog.n_categories
    full_mask = (1 << K) - 1
    values, baseline, full = {}, {}, {}
    for c in class_ids:
        values[c] = solver(lambda mask: float(probs(mask)[c]))
        baseline[c] = float(probs(0)[c])
        full[c] = float(probs(full_mask)[c])
    return ShapleyAttribution(values=values, baseline=baseline, full=full, method=method)


def shapley_exact(alert: AlertRecord, predictor: StorePredictor,
                  class_id: int | None = None) -> ShapleyAttribution:
    """Exact category-level Shapley attribution for one class (or all classes
    when ``class_id`` is None)."""
    K = predictor.store.catalog.n_categories
    if K > MAX_EXACT_CATEGORIES:
        raise ValueError("too many categories for exact enumeration; use shapley_sampled")
    class_ids = range(predictor.n_classes) if class_id is None else [class_id]
    return _attribution_for_classes(
        alert, predictor, list(class_ids),
        solver=lambda fn: shapley_values_exact(fn, K),
        method="exact",
    )


def shapley_sampled(alert: AlertRecord, predictor: StorePredictor,
                    n_permutations: int, seed: int,
                    class_id: int | None = None) -> ShapleyAttribution:
    K = predictor.store.catalog.n_categories
    class_ids = range(predictor.n_classes) if class_id is None else [class_id]
    return _attribution_for_classes(
        alert, predictor, list(class_ids),
        solver=lambda fn: shapley_values_sampled(fn, K, n_permutations, seed),
        method=f"sampled-{n_permutations}",
    )


@dataclass
class EvidenceView:
    """Per-feature signed logit contributions per class, with additive
    per-class summaries and the historical statistics for display."""

    contributions: dict[int, np.ndarray]  # class id -> N-vector (0 outside mask)
    summaries: dict[int, float]
    stats: FeatureStats
    mask: ContextMask

    def to_json_dict(self, class_names: Sequence[str], feature_names: Sequence[str]) -> dict:
        return {
            "mask": self.mask,
            "contributions": {
                class_names[c]: {feature_names[i]: float(v[i]) for i in range(len(v)) if v[i] != 0.0}
                for c, v in sorted(self.contributions.items())
            },
            "summaries": {class_names[c]: s for c, s in sorted(self.summaries.items())},
            "stats": {
                feature_names[i]: {
                    "mean": float(self.stats.mean[i]),
                    "median": float(self.stats.median[i]),
                    "mode": float(self.stats.mode[i]),
                }
                for i in range(len(feature_names))
            },
        }


def evidence_view(alert: AlertRecord, mask: ContextMask, predictor: StorePredictor,
                  historical_stats: FeatureStats) -> EvidenceView:
    """Single-feature occlusion deltas within the masked model: each visible
    feature is replaced by its historical mean and the change in each class
    logit is the feature's contribution."""
    handle = predictor.handle(mask)
    store = predictor.store
    idx = mask_feature_indices(store.catalog, mask)
    n_classes = predictor.n_classes
    n_features = store.schema.size

    base_logits = store.predict_logits(handle, alert)
    contributions = {c: np.zeros(n_features) for c in range(n_classes)}
    for i in idx:
        occluded = alert.values.copy()
        occluded[i] = historical_stats.mean[i]
        occ_logits = store.predict_logits(
            handle, AlertRecord(alert.alert_id, occluded, alert.label)
        )
        delta = base_logits - occ_logits
        for c in range(n_classes):
            contributions[c][i] = delta[c]
    summaries = {c: float(v.sum()) for c, v in contributions.items()}
    return EvidenceView(contributions=contributions, summaries=summaries,
                        stats=historical_stats, mask=mask)


def attribution_to_json(attribution: ShapleyAttribution, class_names: Sequence[str],
                        category_names: Sequence[str]) -> str:
    return json.dumps(attribution.to_json_dict(class_names, category_names), sort_keys=True)

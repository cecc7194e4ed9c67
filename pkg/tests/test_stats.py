import itertools
import math

import numpy as np
import pytest
from scipy import stats as spstats

from ctxtriage.stats import (
    ConfusionMatrix,
    binary_outcome,
    bonferroni,
    cohen_d,
    cohen_g,
    mcnemar,
    weighted_f1,
    wilcoxon_signed_rank,
)

# ------------------------------------------------------------------- oracles


def mcnemar_exact_oracle(b, c):
    """Two-sided exact p by enumerating all outcomes of n fair coin flips."""
    n = b + c
    k = min(b, c)
    tail = sum(math.comb(n, i) for i in range(k + 1))
    return min(1.0, 2.0 * tail / 2.0**n)


def wilcoxon_exact_oracle(deltas):
    """Enumerates every sign assignment of the ranked |deltas|."""
    deltas = np.asarray([d for d in deltas if d != 0.0], dtype=float)
    n = len(deltas)
    ranks = spstats.rankdata(np.abs(deltas))
    w_plus = ranks[deltas > 0].sum()
    total = ranks.sum()
    w_min = min(w_plus, total - w_plus)
    hits = 0
    for signs in itertools.product((0, 1), repeat=n):
        w = sum(r for r, s in zip(ranks, signs) if s)
        if w <= w_min or w >= total - w_min:
            hits += 1
    return min(1.0, hits / 2.0**n)


# --------------------------------------------------------------- weighted F1


def test_weighted_f1_perfect():
    assert weighted_f1([0, 1, 2], [0, 1, 2]) == 1.0


def test_weighted_f1_hand_computed():
    # truths [A,A,B,B], preds [A,A,A,A]: F1_A = 2/3, F1_B = 0 -> 1/3
    assert weighted_f1([0, 0, 0, 0], [0, 0, 1, 1]) == pytest.approx(1 / 3)


def test_weighted_f1_single_class():
    assert weighted_f1([2, 2, 2], [2, 2, 2]) == 1.0


def test_weighted_f1_relabel_invariant():
    rng = np.random.default_rng(0)
    truths = rng.integers(4, size=60)
    preds = rng.integers(4, size=60)
    base = weighted_f1(preds, truths)
    perm = np.array([2, 0, 3, 1])
    assert weighted_f1(perm[preds], perm[truths]) == pytest.approx(base, abs=1e-12)


def test_weighted_f1_length_mismatch():
    with pytest.raises(ValueError):
        weighted_f1([0], [0, 1])


def test_per_class_f1_components():
    from ctxtriage.stats import per_class_f1

    scores = per_class_f1([0, 0, 0, 0], [0, 0, 1, 1])
    assert scores[0] == pytest.approx(2 / 3)
    assert scores[1] == 0.0
    assert 2 not in scores  # absent from truth


# ------------------------------------------------------------------- McNemar


def test_mcnemar_exact_example():
    result = mcnemar(1, 9)
    assert result.statistic == pytest.approx(4.9)
    assert result.p_value == pytest.approx(22 / 1024, abs=1e-12)
    assert result.effect_size == pytest.approx(0.4)
    assert result.method == "mcnemar-exact-binomial"


def test_mcnemar_symmetric():
    result = mcnemar(6, 6)
    assert result.p_value == 1.0
    assert result.effect_size == 0.0


def test_mcnemar_one_sided_counts():
    assert mcnemar(0, 5).p_value == pytest.approx(0.0625, abs=1e-15)


def test_mcnemar_matches_oracle_small():
    for b in range(0, 8):
        for c in range(0, 8):
            if b + c == 0:
                continue
            assert mcnemar(b, c).p_value == pytest.approx(
                mcnemar_exact_oracle(b, c), abs=1e-12), (b, c)


def test_mcnemar_chi_square_path():
    result = mcnemar(40, 20)
    expected_chi2 = (abs(40 - 20) - 1) ** 2 / 60
    assert result.statistic == pytest.approx(expected_chi2)
    assert result.p_value == pytest.approx(float(spstats.chi2.sf(expected_chi2, 1)))
    assert result.method == "mcnemar-chi2-corrected"


def test_mcnemar_rejects_empty():
    with pytest.raises(ValueError):
        mcnemar(0, 0)


def test_cohen_g_definition():
    assert cohen_g(1, 9) == pytest.approx(0.4)
    assert cohen_g(5, 5) == 0.0


# ------------------------------------------------------------------ Wilcoxon


def test_wilcoxon_all_positive():
    result = wilcoxon_signed_rank([1.0, 2.0, 0.5, 3.0, 1.5, 2.5])
    assert result.statistic == 0.0
    assert result.p_value == pytest.approx(2 / 64, abs=1e-15)


def test_wilcoxon_antisymmetric():
    result = wilcoxon_signed_rank([1.0, -1.0, 2.0, -2.0, 3.0, -3.0])
    assert result.p_value == 1.0


def test_wilcoxon_textbook_pairs_matches_oracle():
    deltas = [1.3, -0.3, 0.7, 2.1, -0.8, 1.9, 0.4, 1.1]
    result = wilcoxon_signed_rank(deltas)
    assert result.p_value == pytest.approx(wilcoxon_exact_oracle(deltas), abs=1e-12)


def test_wilcoxon_random_fixtures_match_oracle():
    rng = np.random.default_rng(8)
    for trial in range(20):
        n = int(rng.integers(5, 11))
        deltas = np.round(rng.normal(size=n), 2)
        deltas[deltas == 0.0] = 0.5
        result = wilcoxon_signed_rank(deltas)
        assert result.p_value == pytest.approx(
            wilcoxon_exact_oracle(deltas), abs=1e-12), (trial, deltas)


def test_wilcoxon_tied_magnitudes_match_oracle():
    deltas = [1.0, -1.0, 1.0, 2.0, 2.0, -2.0, 3.0]
    result = wilcoxon_signed_rank(deltas)
    assert result.p_value == pytest.approx(wilcoxon_exact_oracle(deltas), abs=1e-12)


def test_wilcoxon_zeros_dropped():
    with_zeros = [0.0, 1.0, 2.0, -0.5, 0.0, 0.7, 1.4]
    without = [1.0, 2.0, -0.5, 0.7, 1.4]
    assert wilcoxon_signed_rank(with_zeros).p_value == pytest.approx(
        wilcoxon_signed_rank(without).p_value)


def test_wilcoxon_rejects_degenerate():
    with pytest.raises(ValueError):
        wilcoxon_signed_rank([0.0, 0.0])
    with pytest.raises(ValueError):
        wilcoxon_signed_rank([1.0, 2.0, 3.0, 4.0])


def test_wilcoxon_normal_path_close_to_scipy():
    rng = np.random.default_rng(5)
    deltas = rng.normal(loc=0.3, size=40)
    ours = wilcoxon_signed_rank(deltas)
    assert ours.method == "wilcoxon-normal-tie-corrected"
    ref = spstats.wilcoxon(deltas, correction=False, mode="approx")
    assert ours.p_value == pytest.approx(ref.pvalue, abs=1e-9)


# -------------------------------------------------------- Bonferroni/Cohen d


def test_bonferroni_basic():
    assert bonferroni([0.01, 0.2], 2) == [0.02, 0.4]


def test_bonferroni_clips_at_one():
    assert bonferroni([0.7], 2) == [1.0]


def test_bonferroni_identity():
    assert bonferroni([0.33], 1) == [0.33]


def test_bonferroni_family_size_check():
    with pytest.raises(ValueError):
        bonferroni([0.1, 0.2], 1)


def test_cohen_d_identical_samples():
    assert cohen_d([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0


def test_cohen_d_unit_effect():
    rng = np.random.default_rng(2)
    x = rng.normal(loc=1.0, scale=1.0, size=5000)
    y = rng.normal(loc=0.0, scale=1.0, size=5000)
    assert cohen_d(x, y) == pytest.approx(1.0, abs=0.06)


def test_cohen_d_hand_formula():
    x = [0.0, 2.0]  # mean 1, sd sqrt(2)
    y = [-1.0, 1.0]  # mean 0, sd sqrt(2)
    assert cohen_d(x, y) == pytest.approx(1.0 / math.sqrt(2.0))


def test_cohen_d_antisymmetric():
    x = [1.0, 2.0, 4.0]
    y = [0.5, 0.2, 0.9]
    assert cohen_d(x, y) == pytest.approx(-cohen_d(y, x))


# ----------------------------------------------------------- confusion matrix


def test_confusion_matrix_marginals():
    preds = [0, 1, 1, 2, 0, 2, 1]
    truths = [0, 1, 2, 2, 1, 0, 1]
    cm = ConfusionMatrix.from_pairs(preds, truths, 3)
    assert cm.total == 7
    assert np.array_equal(cm.counts.sum(axis=0), np.bincount(preds, minlength=3))
    assert np.array_equal(cm.counts.sum(axis=1), np.bincount(truths, minlength=3))


def test_confusion_matrix_per_class():
    cm = ConfusionMatrix.from_pairs([0, 0, 1], [0, 1, 1], 2)
    stats0 = cm.per_class(0)
    assert stats0 == {"tp": 1, "fp": 1, "fn": 0, "tn": 1}


def test_binary_outcomes_and_fp_fn():
    negative = {0}
    assert binary_outcome(1, 2, negative) == "TP"
    assert binary_outcome(1, 0, negative) == "FP"
    assert binary_outcome(0, 1, negative) == "FN"
    assert binary_outcome(0, 0, negative) == "TN"
    cm = ConfusionMatrix.from_pairs([1, 1, 0, 0], [2, 0, 1, 0], 3)
    assert cm.binary_fp_fn({0}) == {"tp": 1, "fp": 1, "fn": 1, "tn": 1}

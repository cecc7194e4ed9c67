"""Classification metrics and the nonparametric tests used to compare
teaming strategies: weighted F1, McNemar, Wilcoxon signed-rank, Bonferroni
correction, and Cohen's d/g effect sizes.

Exact null distributions are used for small samples (threshold 25) so results
are deterministic; larger samples fall back to the usual approximations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats as spstats

EXACT_LIMIT = 25

__all__ = [
    "ConfusionMatrix",
    "TestResult",
    "weighted_f1",
    "per_class_f1",
    "mcnemar",
    "wilcoxon_signed_rank",
    "bonferroni",
    "cohen_d",
    "cohen_g",
    "binary_outcome",
]


@dataclass
class TestResult:
    statistic: float
    p_value: float
    effect_size: float
    method: str
    n: int
    extras: dict = field(default_factory=dict)


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # counts[truth, predicted]

    @staticmethod
    def from_pairs(preds: Sequence[int], truths: Sequence[int], n_classes: int) -> "ConfusionMatrix":
        if len(preds) != len(truths):
            raise ValueError("preds and truths differ in length")
        counts = np.zeros((n_classes, n_classes), dtype=int)
        for p, t in zip(preds, truths):
            counts[t, p] += 1
        return ConfusionMatrix(counts)

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def per_class(self, c: int) -> dict[str, int]:
        tp = int(self.counts[c, c])
        fp = int(self.counts[:, c].sum() - tp)
        fn = int(self.counts[c, :].sum() - tp)
        tn = self.total - tp - fp - fn
        return {"tp": tp, "fp": fp, "fn": fn, "tn": tn}

    def binary_fp_fn(self, negative_classes: set[int]) -> dict[str, int]:
        """FP/FN with 'positive' meaning any attack class: an alert counts as
        flagged when its predicted class is outside ``negative_classes``."""
        out = {"tp": 0, "tn": 0, "fp": 0, "fn": 0}
        for t in range(self.n_classes):
            for p in range(self.n_classes):
                n = int(self.counts[t, p])
                out[binary_outcome(p, t, negative_classes).lower()] += n
        return out


def binary_outcome(pred: int, truth: int, negative_classes: set[int]) -> str:
    """TP/TN/FP/FN of one decision under attack-vs-negative semantics."""
    pred_pos = pred not in negative_classes
    truth_pos = truth not in negative_classes
    if pred_pos and truth_pos:
        return "TP"
    if pred_pos and not truth_pos:
        return "FP"
    if not pred_pos and truth_pos:
        return "FN"
    return "TN"


def per_class_f1(preds: Sequence[int], truths: Sequence[int]) -> dict[int, float]:
    """F1 per class present in the truth vector."""
    preds = np.asarray(preds)
    truths = np.asarray(truths)
    out: dict[int, float] = {}
    for c in np.unique(truths):
        support = int((truths == c).sum())
        tp = int(((preds == c) & (truths == c)).sum())
        fp = int(((preds == c) & (truths != c)).sum())
        fn = support - tp
        out[int(c)] = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) > 0 else 0.0
    return out


def weighted_f1(preds: Sequence[int], truths: Sequence[int]) -> float:
    """Support-weighted mean of per-class F1; classes absent from the truth
    vector are excluded."""
    if len(preds) != len(truths):
        raise ValueError("preds and truths differ in length")
    if len(truths) == 0:
        raise ValueError("empty input")
    truths_arr = np.asarray(truths)
    scores = per_class_f1(preds, truths)
    total = sum(int((truths_arr == c).sum()) * f1 for c, f1 in scores.items())
    return total / len(truths)


def cohen_g(b: int, c: int) -> float:
    """|proportion of discordant pairs - 0.5|."""
    return abs(b / (b + c) - 0.5)


def mcnemar(b: int, c: int) -> TestResult:
    """McNemar test on discordant-pair counts. Exact binomial when b+c below
    the exact limit, else continuity-corrected chi-square. Effect size is
    Cohen's g."""
    if b < 0 or c < 0:
        raise ValueError("counts must be non-negative")
    n = b + c
    if n == 0:
        raise ValueError("both discordant counts are zero")
    chi2 = (abs(b - c) - 1) ** 2 / n if n > 0 else 0.0
    if n < EXACT_LIMIT:
        k = min(b, c)
        tail = sum(math.comb(n, i) for i in range(k + 1)) / 2.0**n
        p = min(1.0, 2.0 * tail)
        method = "mcnemar-exact-binomial"
    else:
        p = float(spstats.chi2.sf(chi2, df=1))
        method = "mcnemar-chi2-corrected"
    return TestResult(statistic=float(chi2), p_value=p, effect_size=cohen_g(b, c),
                      method=method, n=n, extras={"b": b, "c": c})


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    sorted_vals = values[order]
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _wilcoxon_exact_p(ranks: np.ndarray, w_plus: float) -> float:
    """Two-sided exact p over all 2^n equiprobable sign assignments, computed
    by convolving the doubled (integer) rank values."""
    doubled = np.round(ranks * 2).astype(int)
    total = int(doubled.sum())
    counts = np.zeros(total + 1, dtype=object)
    counts[0] = 1
    for r in doubled:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    w2 = int(round(w_plus * 2))
    w_min2 = min(w2, total - w2)
    lower = int(sum(counts[: w_min2 + 1]))
    upper = int(sum(counts[total - w_min2 :]))
    return min(1.0, (lower + upper) / 2.0 ** len(ranks))


def wilcoxon_signed_rank(deltas: Sequence[float]) -> TestResult:
    """Two-sided Wilcoxon signed-rank test on paired deltas. Zeros are
    dropped, ties get mid-ranks; exact distribution up to n=25, normal
    approximation with tie correction beyond."""
    deltas = np.asarray(deltas, dtype=float)
    nonzero = deltas[deltas != 0.0]
    if len(nonzero) == 0:
        raise ValueError("all deltas are zero")
    if len(nonzero) < 5:
        raise ValueError("need at least 5 non-zero deltas")
    n = len(nonzero)
    ranks = _midranks(np.abs(nonzero))
    w_plus = float(ranks[nonzero > 0].sum())
    w_minus = float(ranks[nonzero < 0].sum())
    w_min = min(w_plus, w_minus)

    # Tie-corrected normal approximation; reported as r = |Z|/sqrt(n) even on
    # the exact path (noted in extras)
    mu = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    tie_term = float(np.sum(tie_counts.astype(float) ** 3 - tie_counts)) / 48.0
    sigma2 = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
    z = (w_plus - mu) / math.sqrt(sigma2) if sigma2 > 0 else 0.0

    if n <= EXACT_LIMIT:
        p = _wilcoxon_exact_p(ranks, w_plus)
        method = "wilcoxon-exact"
    else:
        p = float(2.0 * spstats.norm.sf(abs(z)))
        method = "wilcoxon-normal-tie-corrected"
    return TestResult(statistic=w_min, p_value=p, effect_size=abs(z) / math.sqrt(n),
                      method=method, n=n,
                      extras={"w_plus": w_plus, "w_minus": w_minus, "z": z,
                              "r_from": "normal-approximation z"})


def bonferroni(p_values: Sequence[float], m: int) -> list[float]:
    """p' = min(1, p * m) per value; m must cover the whole family."""
    if m < len(p_values):
        raise ValueError(f"m={m} smaller than the number of p-values {len(p_values)}")
    return [min(1.0, p * m) for p in p_values]


def cohen_d(x: Sequence[float], y: Sequence[float]) -> float:
    """Pooled-standard-deviation effect size (positive when mean(x) larger)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2 or len(y) < 2:
        raise ValueError("each sample needs at least 2 observations")
    nx, ny = len(x), len(y)
    pooled_var = ((nx - 1) * x.var(ddof=1) + (ny - 1) * y.var(ddof=1)) / (nx + ny - 2)
    if pooled_var == 0.0:
        if x.mean() == y.mean():
            return 0.0
        raise ValueError("zero pooled variance with unequal means")
    return float((x.mean() - y.mean()) / math.sqrt(pooled_var))

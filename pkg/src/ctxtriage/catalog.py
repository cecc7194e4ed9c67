"""Feature schemas, context-category groupings, alert ingestion, dataset
splits, class balancing, historical statistics and the synthetic alert
generator.

A context catalog partitions a feature schema into an always-visible
initial set plus up to 16 named categories that are requested as units
during an investigation.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

MAX_CATEGORIES = 16


class CatalogError(ValueError):
    """Raised for grouping-manifest or schema violations."""


class IngestError(ValueError):
    """Raised for malformed alert CSV input."""


@dataclass(frozen=True)
class Feature:
    name: str
    index: int
    kind: str = "numeric"  # numeric | binary


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[Feature, ...]

    def __post_init__(self) -> None:
        indices = [f.index for f in self.features]
        if sorted(indices) != list(range(len(self.features))):
            raise CatalogError("feature indices must be 0..N-1 with no gaps or duplicates")
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise CatalogError("feature names must be unique")
        for f in self.features:
            if f.kind not in ("numeric", "binary"):
                raise CatalogError(f"unknown feature kind {f.kind!r}")

    @property
    def size(self) -> int:
        return len(self.features)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in sorted(self.features, key=lambda f: f.index))

    def index_of(self, name: str) -> int:
        for f in self.features:
            if f.name == name:
                return f.index
        raise CatalogError(f"unknown feature name {name!r}")

    @staticmethod
    def from_names(names: Sequence[str], kinds: Sequence[str] | None = None) -> "FeatureSchema":
        kinds = kinds or ["numeric"] * len(names)
        return FeatureSchema(tuple(Feature(n, i, k) for i, (n, k) in enumerate(zip(names, kinds))))


@dataclass(frozen=True)
class ContextCategory:
    id: int
    name: str
    feature_indices: frozenset[int]

    def __post_init__(self) -> None:
        if not self.feature_indices:
            raise CatalogError(f"category {self.name!r} has no features")


@dataclass(frozen=True)
class ContextCatalog:
    initial_indices: frozenset[int]
    categories: tuple[ContextCategory, ...]

    def __post_init__(self) -> None:
        if len(self.categories) > MAX_CATEGORIES:
            raise CatalogError(f"at most {MAX_CATEGORIES} categories supported, got {len(self.categories)}")
        seen: set[int] = set(self.initial_indices)
        for cat in self.categories:
            overlap = seen & cat.feature_indices
            if overlap:
                raise CatalogError(f"category {cat.name!r} overlaps already-assigned indices {sorted(overlap)}")
            seen |= cat.feature_indices

    @property
    def n_categories(self) -> int:
        return len(self.categories)

    def covered_indices(self) -> frozenset[int]:
        out = set(self.initial_indices)
        for cat in self.categories:
            out |= cat.feature_indices
        return frozenset(out)

    def validate_partition(self, schema: FeatureSchema) -> None:
        covered = self.covered_indices()
        missing = set(range(schema.size)) - covered
        if missing:
            names = [schema.names[i] for i in sorted(missing)]
            raise CatalogError(f"features not covered by initial set or any category: {names}")

    def category_by_name(self, name: str) -> ContextCategory:
        for cat in self.categories:
            if cat.name == name:
                return cat
        raise CatalogError(f"unknown category {name!r}")


@dataclass(frozen=True)
class AlertRecord:
    alert_id: int
    values: np.ndarray
    label: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))


@dataclass
class DatasetSplit:
    subset_id: int
    historical: list[AlertRecord]
    fresh: list[AlertRecord]

    def __post_init__(self) -> None:
        hist_ids = {a.alert_id for a in self.historical}
        fresh_ids = {a.alert_id for a in self.fresh}
        if hist_ids & fresh_ids:
            raise CatalogError("historical and fresh alerts overlap within a subset")


@dataclass(frozen=True)
class GroupingManifest:
    """Parsed grouping-manifest JSON: initial/category feature names plus the
    CSV-side contract (columns to drop, label column, class names)."""

    initial: tuple[str, ...]
    categories: tuple[tuple[str, tuple[str, ...]], ...]
    drop: tuple[str, ...] = ()
    label: str = "label"
    classes: tuple[str, ...] = ()


def parse_grouping_manifest(manifest_text: str) -> GroupingManifest:
    doc = json.loads(manifest_text)
    return GroupingManifest(
        initial=tuple(doc.get("initial", [])),
        categories=tuple((name, tuple(feats)) for name, feats in doc.get("categories", {}).items()),
        drop=tuple(doc.get("drop", [])),
        label=doc.get("label", "label"),
        classes=tuple(doc.get("classes", [])),
    )


def schema_from_manifest(manifest: GroupingManifest) -> FeatureSchema:
    """Schema whose columns are exactly the manifest's initial + category features."""
    names = list(manifest.initial)
    for _, feats in manifest.categories:
        names.extend(feats)
    return FeatureSchema.from_names(names)


def load_grouping_manifest(manifest_text: str, schema: FeatureSchema) -> ContextCatalog:
    """Builds a ContextCatalog from manifest JSON, enforcing that the schema is
    partitioned into the initial set plus pairwise-disjoint categories."""
    manifest = parse_grouping_manifest(manifest_text)
    assigned: dict[str, str] = {}

    def resolve(names: Iterable[str], owner: str) -> frozenset[int]:
        out = set()
        for name in names:
            if name in assigned:
                raise CatalogError(f"feature {name!r} assigned to both {assigned[name]!r} and {owner!r}")
            assigned[name] = owner
            out.add(schema.index_of(name))
        return frozenset(out)

    initial = resolve(manifest.initial, "initial")
    if len(manifest.categories) > MAX_CATEGORIES:
        raise CatalogError(f"at most {MAX_CATEGORIES} categories supported, got {len(manifest.categories)}")
    categories = tuple(
        ContextCategory(k, name, resolve(feats, name))
        for k, (name, feats) in enumerate(manifest.categories)
    )
    catalog = ContextCatalog(initial, categories)
    catalog.validate_partition(schema)
    return catalog


def ingest_alerts(
    csv_text: str,
    schema: FeatureSchema,
    label_column: str,
    classes: Sequence[str],
    drop: Sequence[str] = (),
) -> list[AlertRecord]:
    """Parses alert rows from CSV. Columns must be exactly the schema plus the
    label column; extras are rejected unless listed in ``drop``."""
    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = next(reader)
    except StopIteration:
        raise IngestError("empty CSV") from None
    header = [h.strip() for h in header]
    drop_set = set(drop)
    class_ids = {name: i for i, name in enumerate(classes)}

    missing = [n for n in list(schema.names) + [label_column] if n not in header]
    if missing:
        raise IngestError(f"missing columns: {missing}")
    extras = [h for h in header if h not in schema.names and h != label_column and h not in drop_set]
    if extras:
        raise IngestError(f"unexpected columns not in schema or drop-list: {extras}")

    col_of = {name: header.index(name) for name in schema.names}
    label_col = header.index(label_column)

    records: list[AlertRecord] = []
    for row_num, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise IngestError(f"row {row_num}: expected {len(header)} cells, got {len(row)}")
        values = np.empty(schema.size)
        for name, col in col_of.items():
            cell = row[col].strip()
            try:
                values[schema.index_of(name)] = float(cell)
            except ValueError:
                raise IngestError(f"row {row_num}: unparseable value {cell!r} in column {name!r}") from None
        label_name = row[label_col].strip()
        if label_name not in class_ids:
            raise IngestError(f"row {row_num}: unknown label {label_name!r}")
        records.append(AlertRecord(alert_id=len(records), values=values, label=class_ids[label_name]))
    return records


def _largest_remainder_quotas(counts: np.ndarray, total: int) -> np.ndarray:
    """Integer per-class quotas summing to ``total``, proportional to counts."""
    props = counts / counts.sum()
    raw = props * total
    quotas = np.floor(raw).astype(int)
    remainder = total - int(quotas.sum())
    order = np.argsort(-(raw - quotas), kind="stable")
    for i in range(remainder):
        quotas[order[i]] += 1
    return quotas


def stratified_split(
    alerts: Sequence[AlertRecord],
    n_subsets: int,
    n_hist: int,
    n_new: int,
    seed: int,
) -> list[DatasetSplit]:
    """Draws ``n_subsets`` disjoint subsets of ``n_hist`` historical plus
    ``n_new`` fresh alerts, stratified to the pool's class distribution
    (per-class error at most 2 in each part)."""
    labels = np.array([a.label for a in alerts])
    class_ids = np.unique(labels)
    counts = np.array([(labels == c).sum() for c in class_ids])

    rng = np.random.default_rng(seed)
    pools: dict[int, list[AlertRecord]] = {}
    for c in class_ids:
        members = [a for a in alerts if a.label == c]
        rng.shuffle(members)
        pools[int(c)] = members

    hist_quota = _largest_remainder_quotas(counts, n_hist)
    new_quota = _largest_remainder_quotas(counts, n_new)
    demand = (hist_quota + new_quota) * n_subsets
    for c, need, have in zip(class_ids, demand, counts):
        if need > have:
            raise CatalogError(
                f"insufficient alerts for class {int(c)}: need {int(need)}, have {int(have)}"
            )

    cursor = {int(c): 0 for c in class_ids}

    def take(c: int, n: int) -> list[AlertRecord]:
        i = cursor[c]
        cursor[c] = i + n
        return pools[c][i : i + n]

    splits = []
    for s in range(n_subsets):
        hist: list[AlertRecord] = []
        fresh: list[AlertRecord] = []
        for c, hq, nq in zip(class_ids, hist_quota, new_quota):
            hist.extend(take(int(c), int(hq)))
            fresh.extend(take(int(c), int(nq)))
        rng.shuffle(hist)
        rng.shuffle(fresh)
        splits.append(DatasetSplit(subset_id=s, historical=hist, fresh=fresh))
    return splits


def balance_oversample(
    alerts: Sequence[AlertRecord],
    target_total: int,
    seed: int,
    n_classes: int | None = None,
) -> list[AlertRecord]:
    """Returns exactly ``target_total / C`` records per class, oversampling
    minority classes with replacement and subsampling majority ones."""
    labels = [a.label for a in alerts]
    if n_classes is None:
        n_classes = max(labels) + 1 if labels else 0
    if n_classes == 0 or target_total % n_classes != 0:
        raise CatalogError(f"target_total {target_total} not divisible by class count {n_classes}")
    per_class = target_total // n_classes
    rng = np.random.default_rng(seed)
    out: list[AlertRecord] = []
    for c in range(n_classes):
        members = [a for a in alerts if a.label == c]
        if not members:
            raise CatalogError(f"class {c} absent from input")
        if len(members) >= per_class:
            idx = rng.choice(len(members), size=per_class, replace=False)
        else:
            extra = rng.choice(len(members), size=per_class - len(members), replace=True)
            idx = np.concatenate([np.arange(len(members)), extra])
        out.extend(members[int(i)] for i in idx)
    return out


@dataclass(frozen=True)
class FeatureStats:
    """Per-feature historical summaries shown alongside alert values."""

    mean: np.ndarray
    median: np.ndarray
    mode: np.ndarray


def feature_stats(historical: Sequence[AlertRecord]) -> FeatureStats:
    """Mean/median/mode per feature. Mode uses values rounded to 6 decimal
    places; ties break toward the smaller value."""
    if not historical:
        raise CatalogError("feature_stats requires a non-empty input")
    values = np.stack([a.values for a in historical])
    mean = values.mean(axis=0)
    median = np.median(values, axis=0)
    mode = np.empty(values.shape[1])
    rounded = np.round(values, 6)
    for j in range(values.shape[1]):
        uniq, counts = np.unique(rounded[:, j], return_counts=True)
        # np.unique sorts ascending, argmax picks the first (smallest) maximum
        mode[j] = uniq[np.argmax(counts)]
    return FeatureStats(mean=mean, median=median, mode=mode)


@dataclass(frozen=True)
class SyntheticConfig:
    """Recipe for a desk-scale alert corpus. Each class carries a signature in
    a subset of categories; alerts of that class draw those features from
    class-specific patterns while everything else is shared noise. A class may
    have several modes, each expressing the pattern in part of its signature,
    so a single context category rarely resolves every alert of the class."""

    n_classes: int
    n_categories: int
    signatures: dict[int, tuple[int, ...]]
    features_per_category: int = 3
    n_initial: int = 4
    n_alerts: int = 2000
    noise_scale: float = 0.5
    modes_per_class: int = 1
    class_probs: tuple[float, ...] | None = None
    pattern_magnitude: float = 2.0

    @staticmethod
    def default(
        n_classes: int = 4,
        n_categories: int = 5,
        cats_per_class: int = 2,
        **kwargs,
    ) -> "SyntheticConfig":
        signatures = {
            c: tuple((c + j) % n_categories for j in range(cats_per_class))
            for c in range(n_classes)
        }
        return SyntheticConfig(n_classes=n_classes, n_categories=n_categories,
                               signatures=signatures, **kwargs)


def generate_synthetic_alerts(
    config: SyntheticConfig,
    seed: int,
) -> tuple[FeatureSchema, ContextCatalog, list[AlertRecord]]:
    """Generates (schema, catalog, alerts) where signature categories carry
    class evidence and everything else is shared N(0,1) noise."""
    for c, cats in config.signatures.items():
        for k in cats:
            if not (0 <= k < config.n_categories):
                raise CatalogError(f"signature for class {c} references unknown category {k}")
        if not cats:
            raise CatalogError(f"signature for class {c} is empty")

    names = [f"init_{i}" for i in range(config.n_initial)]
    cat_indices: list[frozenset[int]] = []
    for k in range(config.n_categories):
        start = len(names)
        names.extend(f"cat{k}_f{i}" for i in range(config.features_per_category))
        cat_indices.append(frozenset(range(start, start + config.features_per_category)))
    schema = FeatureSchema.from_names(names)
    catalog = ContextCatalog(
        initial_indices=frozenset(range(config.n_initial)),
        categories=tuple(
            ContextCategory(k, f"category_{k}", cat_indices[k]) for k in range(config.n_categories)
        ),
    )

    rng = np.random.default_rng(seed)
    m = config.modes_per_class
    # Mode j of class c expresses its pattern in signature categories j, j+m, ...
    mode_cats: dict[tuple[int, int], tuple[int, ...]] = {}
    for c in range(config.n_classes):
        sig = config.signatures[c]
        for j in range(m):
            if m == 1:
                active = tuple(sig)
            else:
                active = tuple(sig[i] for i in range(len(sig)) if i % m == j)
            if not active:
                active = (sig[j % len(sig)],)
            mode_cats[(c, j)] = active

    # Distinct +-magnitude pattern per (class, mode); redraw on collisions so
    # two modes with the same active categories are always separable.
    patterns: dict[tuple[int, int], dict[int, np.ndarray]] = {}
    seen: dict[tuple, tuple[int, int]] = {}
    for key, active in sorted(mode_cats.items()):
        for _ in range(1000):
            pat = {
                k: config.pattern_magnitude * rng.choice([-1.0, 1.0], size=config.features_per_category)
                for k in active
            }
            sig_key = (active, tuple(tuple(pat[k]) for k in active))
            if sig_key not in seen:
                seen[sig_key] = key
                patterns[key] = pat
                break
        else:
            raise CatalogError("could not draw distinct class patterns; enlarge features_per_category")

    probs = np.asarray(config.class_probs if config.class_probs else
                       [1.0 / config.n_classes] * config.n_classes)
    if len(probs) != config.n_classes or abs(probs.sum() - 1.0) > 1e-9:
        raise CatalogError("class_probs must have one entry per class and sum to 1")

    labels = rng.choice(config.n_classes, size=config.n_alerts, p=probs)
    alerts: list[AlertRecord] = []
    for i, c in enumerate(labels):
        mode = int(rng.integers(m))
        values = rng.normal(0.0, 1.0, size=schema.size)
        for k, pat in patterns[(int(c), mode)].items():
            idx = sorted(cat_indices[k])
            values[idx] = pat + config.noise_scale * rng.normal(0.0, 1.0, size=len(idx))
        alerts.append(AlertRecord(alert_id=i, values=values, label=int(c)))
    return schema, catalog, alerts

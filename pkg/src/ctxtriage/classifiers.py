"""Per-context-mask classifier store.

A context mask is a K-bit set over the catalog's categories; bit k set means
category k's features are visible to the model (initial features always are).
The store trains one softmax classifier per mask lazily and memoizes it, so a
mask is trained at most once per training digest.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .catalog import AlertRecord, ContextCatalog, FeatureSchema
from .nets import (
    Network,
    NetworkSpec,
    OptimizerState,
    backprop,
    forward,
    forward_batch,
    init_network,
    load_network,
    optimizer_step,
    save_network,
)

__all__ = [
    "ContextMask",
    "Prediction",
    "ClassifierConfig",
    "ClassifierHandle",
    "ClassifierStore",
    "FeatureScaler",
    "StorePredictor",
    "confidence_of",
    "prediction_from_probs",
    "mask_from_categories",
    "mask_categories",
    "mask_hex",
    "mask_feature_indices",
]

ContextMask = int


def mask_from_categories(category_ids: Sequence[int]) -> ContextMask:
    mask = 0
    for k in category_ids:
        mask |= 1 << int(k)
    return mask


def mask_categories(mask: ContextMask, n_categories: int) -> list[int]:
    return [k for k in range(n_categories) if mask >> k & 1]


def mask_hex(mask: ContextMask, n_categories: int) -> str:
    width = max(1, (n_categories + 3) // 4)
    return format(mask, f"0{width}x")


def mask_feature_indices(catalog: ContextCatalog, mask: ContextMask) -> list[int]:
    """Schema indices visible under a mask, in ascending order."""
    if mask >= 1 << catalog.n_categories:
        raise ValueError(f"mask {mask:#x} out of range for {catalog.n_categories} categories")
    indices = set(catalog.initial_indices)
    for k in mask_categories(mask, catalog.n_categories):
        indices |= catalog.categories[k].feature_indices
    return sorted(indices)


def confidence_of(probs: np.ndarray) -> float:
    """Scalar confidence: the maximum class probability."""
    return float(np.max(probs))


@dataclass(frozen=True)
class Prediction:
    probs: np.ndarray
    predicted_class: int
    confidence: float


def prediction_from_probs(probs: np.ndarray) -> Prediction:
    probs = np.asarray(probs, dtype=float)
    # np.argmax returns the first maximum, i.e. the lowest class id on ties
    cls = int(np.argmax(probs))
    return Prediction(probs=probs, predicted_class=cls, confidence=confidence_of(probs))


@dataclass(frozen=True)
class ClassifierConfig:
    hidden: int = 0  # 0 = multinomial logistic; >0 adds one ReLU layer
    epochs: int = 60
    batch_size: int = 64
    learning_rate: float = 1e-2
    seed: int = 0

    def digest_fields(self) -> dict:
        return {
            "hidden": self.hidden,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class FeatureScaler:
    """Per-feature z-score parameters fitted on historical alerts."""

    mean: np.ndarray
    std: np.ndarray

    @staticmethod
    def fit(alerts: Sequence[AlertRecord]) -> "FeatureScaler":
        values = np.stack([a.values for a in alerts])
        std = values.std(axis=0)
        std[std == 0.0] = 1.0
        return FeatureScaler(mean=values.mean(axis=0), std=std)

    @staticmethod
    def identity(n_features: int) -> "FeatureScaler":
        return FeatureScaler(mean=np.zeros(n_features), std=np.ones(n_features))

    def transform(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.std


@dataclass
class ClassifierHandle:
    mask: ContextMask
    model: Network
    training_digest: str
    feature_indices: list[int]
    scaler: FeatureScaler


class ClassifierStore:
    """Lazily trains and caches one classifier per (mask, training digest).

    Concurrent readers share cached handles; a missing mask is trained under a
    per-mask latch so simultaneous requesters block instead of duplicating
    work.
    """

    def __init__(self, catalog: ContextCatalog, schema: FeatureSchema, n_classes: int,
                 scaler: FeatureScaler | None = None) -> None:
        self.catalog = catalog
        self.schema = schema
        self.n_classes = n_classes
        self.scaler = scaler or FeatureScaler.identity(schema.size)
        self._cache: dict[tuple[ContextMask, str], ClassifierHandle] = {}
        self._locks: dict[ContextMask, threading.Lock] = {}
        self._meta_lock = threading.Lock()
        self.trainings = 0  # training runs actually executed (cache soundness)

    def _mask_lock(self, mask: ContextMask) -> threading.Lock:
        with self._meta_lock:
            return self._locks.setdefault(mask, threading.Lock())

    def _digest(self, mask: ContextMask, train_data: Sequence[AlertRecord],
                config: ClassifierConfig) -> str:
        h = hashlib.sha256()
        h.update(json.dumps({"mask": mask, **config.digest_fields()}, sort_keys=True).encode())
        labels = np.array([a.label for a in train_data], dtype=np.int64)
        values = np.ascontiguousarray(np.stack([a.values for a in train_data]))
        h.update(labels.tobytes())
        h.update(values.tobytes())
        return h.hexdigest()

    def get_or_train(self, mask: ContextMask, train_data: Sequence[AlertRecord],
                     config: ClassifierConfig) -> ClassifierHandle:
        if not train_data:
            raise ValueError("empty training data")
        digest = self._digest(mask, train_data, config)
        key = (mask, digest)
        handle = self._cache.get(key)
        if handle is not None:
            return handle
        with self._mask_lock(mask):
            handle = self._cache.get(key)
            if handle is not None:
                return handle
            handle = self._train(mask, train_data, config, digest)
            self._cache[key] = handle
            return handle

    def _train(self, mask: ContextMask, train_data: Sequence[AlertRecord],
               config: ClassifierConfig, digest: str) -> ClassifierHandle:
        self.trainings += 1
        idx = mask_feature_indices(self.catalog, mask)
        X = np.stack([self.scaler.transform(a.values)[idx] for a in train_data])
        y = np.array([a.label for a in train_data], dtype=int)

        sizes = (len(idx), config.hidden, self.n_classes) if config.hidden else (len(idx), self.n_classes)
        spec = NetworkSpec(layer_sizes=sizes, output_head="softmax")
        # Per-mask seed keeps results independent of the order masks are visited
        seed = int.from_bytes(hashlib.sha256(f"{config.seed}:{mask}".encode()).digest()[:8], "big")
        rng = np.random.default_rng(seed)
        net = init_network(spec, rng)
        opt = OptimizerState.adam(net, step_size=config.learning_rate)

        n = len(X)
        for _ in range(config.epochs):
            order = rng.permutation(n)
            for start in range(0, n, config.batch_size):
                batch_idx = order[start : start + config.batch_size]
                probs = forward_batch(net, X[batch_idx])
                d_out = probs
                d_out[np.arange(len(batch_idx)), y[batch_idx]] -= 1.0
                d_out /= len(batch_idx)
                grads = backprop(net, X[batch_idx], d_out)
                optimizer_step(opt, net, grads)
        return ClassifierHandle(mask=mask, model=net, training_digest=digest,
                                feature_indices=idx, scaler=self.scaler)

    def predict(self, handle: ClassifierHandle, alert: AlertRecord) -> Prediction:
        if alert.values.shape[0] != self.schema.size:
            raise ValueError(
                f"alert has {alert.values.shape[0]} features, schema expects {self.schema.size}"
            )
        x = handle.scaler.transform(alert.values)[handle.feature_indices]
        return prediction_from_probs(forward(handle.model, x))

    def predict_logits(self, handle: ClassifierHandle, alert: AlertRecord) -> np.ndarray:
        """Pre-softmax activations; used by occlusion-based evidence views."""
        x = handle.scaler.transform(alert.values)[handle.feature_indices]
        linear = Network(
            NetworkSpec(handle.model.spec.layer_sizes, output_head="linear"),
            handle.model.weights, handle.model.biases,
        )
        return forward(linear, x)

    def save_cache(self, directory: str | Path) -> None:
        """One checkpoint per mask, named by the K-bit hex mask."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for (mask, digest), handle in sorted(self._cache.items()):
            stem = mask_hex(mask, self.catalog.n_categories)
            save_network(handle.model, directory / f"{stem}.json")
            meta = {
                "mask": mask,
                "digest": digest,
                "feature_indices": handle.feature_indices,
                "scaler_mean": handle.scaler.mean.tolist(),
                "scaler_std": handle.scaler.std.tolist(),
            }
            (directory / f"{stem}.meta.json").write_text(json.dumps(meta, sort_keys=True))

    def load_cache(self, directory: str | Path) -> int:
        directory = Path(directory)
        loaded = 0
        for meta_path in sorted(directory.glob("*.meta.json")):
            meta = json.loads(meta_path.read_text())
            model = load_network(directory / f"{meta_path.name.removesuffix('.meta.json')}.json")
            scaler = FeatureScaler(np.asarray(meta["scaler_mean"]), np.asarray(meta["scaler_std"]))
            handle = ClassifierHandle(
                mask=meta["mask"], model=model, training_digest=meta["digest"],
                feature_indices=list(meta["feature_indices"]), scaler=scaler,
            )
            self._cache[(handle.mask, handle.training_digest)] = handle
            loaded += 1
        return loaded


class StorePredictor:
    """Binds a store to fixed training data and config, exposing the
    (mask, alert) -> Prediction interface the environment and teaming use."""

    def __init__(self, store: ClassifierStore, train_data: Sequence[AlertRecord],
                 config: ClassifierConfig) -> None:
        self.store = store
        self.train_data = list(train_data)
        self.config = config

    @property
    def n_classes(self) -> int:
        return self.store.n_classes

    def handle(self, mask: ContextMask) -> ClassifierHandle:
        return self.store.get_or_train(mask, self.train_data, self.config)

    def predict(self, mask: ContextMask, alert: AlertRecord) -> Prediction:
        return self.store.predict(self.handle(mask), alert)

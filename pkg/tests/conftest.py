"""Shared fixtures: a small separable investigation task where category 2
reveals the class, with a trained classifier store behind it, plus the
acceptance-criteria result collector."""

from dataclasses import dataclass

import numpy as np
import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log() -> list[str]:
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

from ctxtriage.catalog import (
    AlertRecord,
    ContextCatalog,
    FeatureSchema,
    SyntheticConfig,
    balance_oversample,
    generate_synthetic_alerts,
)
from ctxtriage.classifiers import ClassifierConfig, ClassifierStore, FeatureScaler, StorePredictor
from ctxtriage.env import EnvConfig, InvestigationEnv


@dataclass
class ToyWorld:
    schema: FeatureSchema
    catalog: ContextCatalog
    train: list[AlertRecord]
    holdout: list[AlertRecord]
    scaler: FeatureScaler
    predictor: StorePredictor
    env_config: EnvConfig
    revealing_category: int = 2

    def make_env(self, alert_pool=None) -> InvestigationEnv:
        return InvestigationEnv(self.catalog, self.predictor, self.env_config,
                                scaler=self.scaler, alert_pool=alert_pool)


@pytest.fixture(scope="session")
def toy_world() -> ToyWorld:
    config = SyntheticConfig(
        n_classes=3, n_categories=3, signatures={0: (2,), 1: (2,), 2: (2,)},
        features_per_category=2, n_initial=2, n_alerts=400, noise_scale=0.3,
    )
    schema, catalog, alerts = generate_synthetic_alerts(config, seed=0)
    train, holdout = alerts[:300], alerts[300:]
    scaler = FeatureScaler.fit(train)
    balanced = balance_oversample(train, 300, seed=0)
    store = ClassifierStore(catalog, schema, 3, scaler)
    predictor = StorePredictor(store, balanced, ClassifierConfig(epochs=30, learning_rate=0.05))
    return ToyWorld(
        schema=schema, catalog=catalog, train=train, holdout=holdout,
        scaler=scaler, predictor=predictor, env_config=EnvConfig(),
    )

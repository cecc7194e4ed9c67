"""HTTP service for the triage dashboard: alerts, per-condition feature
views, suggestions, explanations, feature statistics, session management with
server-side timing, classification submissions and questionnaires.

Conditions: C1 shows every feature, C2 only the assistant-suggested and
initial features (others are omitted from the payload entirely), C3 shows the
suggestion plus the full catalog so the client can toggle subsets. Ground
truth never appears in session-facing responses.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import Body, FastAPI, HTTPException, Query

from .catalog import AlertRecord, ContextCatalog, FeatureSchema, FeatureStats
from .classifiers import StorePredictor
from .env import EnvConfig, InvestigationEnv
from .explain import evidence_view, shapley_exact
from .imitation import AssistantPolicy
from .teaming import Plan, one_time_plan

CONDITIONS = ("C1", "C2", "C3")


@dataclass
class ServingBundle:
    schema: FeatureSchema
    catalog: ContextCatalog
    predictor: StorePredictor
    assistant: AssistantPolicy
    env_config: EnvConfig
    scaler: object
    alerts: list[AlertRecord]
    stats: FeatureStats
    class_names: list[str]
    session_seed: int = 0
    alerts_per_condition: int = 4

    def make_env(self) -> InvestigationEnv:
        return InvestigationEnv(self.catalog, self.predictor, self.env_config,
                                scaler=self.scaler)


@dataclass
class SessionState:
    session_id: str
    stages: list[dict]  # [{"condition": str, "alert_ids": [int]}]
    first_fetch: dict[int, float] = field(default_factory=dict)
    submissions: dict[int, dict] = field(default_factory=dict)
    questionnaires: list[dict] = field(default_factory=list)

    def condition_of(self, alert_id: int) -> str | None:
        for stage in self.stages:
            if alert_id in stage["alert_ids"]:
                return stage["condition"]
        return None

    def alert_ids(self) -> list[int]:
        return [a for stage in self.stages for a in stage["alert_ids"]]


def create_app(bundle: ServingBundle) -> FastAPI:
    app = FastAPI(title="ctxtriage service")
    sessions: dict[str, SessionState] = {}
    plans: dict[int, Plan] = {}
    lock = threading.Lock()
    session_counter = [0]
    alerts_by_id = {a.alert_id: a for a in bundle.alerts}
    category_names = [c.name for c in bundle.catalog.categories]
    initial_idx = sorted(bundle.catalog.initial_indices)
    names = bundle.schema.names

    def get_alert(alert_id: int) -> AlertRecord:
        alert = alerts_by_id.get(alert_id)
        if alert is None:
            raise HTTPException(status_code=404, detail=f"unknown alert {alert_id}")
        return alert

    def get_session(session_id: str) -> SessionState:
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return session

    def plan_for(alert_id: int) -> Plan:
        if alert_id not in plans:
            plans[alert_id] = one_time_plan(bundle.assistant, bundle.make_env(),
                                            get_alert(alert_id))
        return plans[alert_id]

    def category_of_index(i: int) -> str:
        if i in bundle.catalog.initial_indices:
            return "initial"
        for cat in bundle.catalog.categories:
            if i in cat.feature_indices:
                return cat.name
        return "initial"

    def feature_payload(alert: AlertRecord, indices: list[int], suggested: list[int]) -> list[dict]:
        return [
            {
                "name": names[i],
                "value": float(alert.values[i]),
                "mean": float(bundle.stats.mean[i]),
                "median": float(bundle.stats.median[i]),
                "mode": float(bundle.stats.mode[i]),
                "category": category_of_index(i),
                "suggested": category_of_index(i) != "initial"
                             and any(i in bundle.catalog.categories[k].feature_indices
                                     for k in suggested),
            }
            for i in sorted(indices)
        ]

    @app.get("/alerts")
    def list_alerts() -> dict:
        return {
            "alerts": [{"alert_id": a.alert_id} for a in bundle.alerts],
            "classes": bundle.class_names,
            "categories": category_names,
        }

    @app.post("/sessions")
    def create_session(body: dict = Body(default={})) -> dict:
        with lock:
            index = session_counter[0]
            session_counter[0] += 1
            rng = np.random.default_rng(bundle.session_seed + index)
            per = bundle.alerts_per_condition
            forced = body.get("condition")
            if forced is not None and forced not in CONDITIONS:
                raise HTTPException(status_code=400, detail=f"unknown condition {forced}")
            conditions = [forced] if forced else _condition_order(index)
            need = per * len(conditions)
            pool = [a.alert_id for a in bundle.alerts]
            if len(pool) < need:
                raise HTTPException(status_code=400, detail="not enough alerts to serve a session")
            chosen = rng.choice(pool, size=need, replace=False).tolist()
            stages = [
                {"condition": cond, "alert_ids": [int(x) for x in chosen[i * per:(i + 1) * per]]}
                for i, cond in enumerate(conditions)
            ]
            session = SessionState(session_id=uuid.uuid4().hex[:12], stages=stages)
            sessions[session.session_id] = session
        return {"session_id": session.session_id, "stages": session.stages,
                "classes": bundle.class_names}

    def _condition_order(index: int) -> list[str]:
        # C1/C2 counterbalanced across sessions, C3 always last
        rng = np.random.default_rng(bundle.session_seed * 977 + index)
        first_two = ["C1", "C2"] if rng.random() < 0.5 else ["C2", "C1"]
        return first_two + ["C3"]

    @app.get("/alerts/{alert_id}/features")
    def alert_features(alert_id: int, session: str = Query(...)) -> dict:
        alert = get_alert(alert_id)
        state = get_session(session)
        condition = state.condition_of(alert_id)
        if condition is None:
            raise HTTPException(status_code=404, detail="alert not part of this session")
        with lock:
            state.first_fetch.setdefault(alert_id, time.time())
        plan = plan_for(alert_id)
        suggested = list(plan.actions)
        if condition == "C2":
            indices = sorted(
                set(initial_idx)
                | {i for k in suggested for i in bundle.catalog.categories[k].feature_indices}
            )
        else:
            indices = list(range(bundle.schema.size))
        doc = {
            "alert_id": alert_id,
            "condition": condition,
            "features": feature_payload(alert, indices, suggested),
            "suggested_categories": [category_names[k] for k in suggested],
        }
        if condition == "C3":
            doc["catalog"] = [
                {"id": cat.id, "name": cat.name,
                 "features": [names[i] for i in sorted(cat.feature_indices)]}
                for cat in bundle.catalog.categories
            ]
        return doc

    @app.get("/alerts/{alert_id}/suggestion")
    def alert_suggestion(alert_id: int) -> dict:
        plan = plan_for(alert_id)
        return {
            "categories": list(plan.actions),
            "category_names": [category_names[k] for k in plan.actions],
            "found": plan.found,
        }

    @app.get("/alerts/{alert_id}/explanation")
    def alert_explanation(alert_id: int, mask: str = Query(...)) -> dict:
        alert = get_alert(alert_id)
        try:
            mask_value = int(mask, 16)
        except ValueError:
            raise HTTPException(status_code=400, detail=f"invalid mask {mask!r}") from None
        if mask_value >= 1 << bundle.catalog.n_categories:
            raise HTTPException(status_code=400, detail=f"mask {mask!r} out of range")
        attribution = shapley_exact(alert, bundle.predictor)
        view = evidence_view(alert, mask_value, bundle.predictor, bundle.stats)
        return {
            "alert_id": alert_id,
            "shapley": attribution.to_json_dict(bundle.class_names, category_names),
            "evidence": view.to_json_dict(bundle.class_names, list(names)),
        }

    @app.get("/features/stats")
    def features_stats() -> dict:
        return {
            "features": [
                {
                    "name": names[i],
                    "mean": float(bundle.stats.mean[i]),
                    "median": float(bundle.stats.median[i]),
                    "mode": float(bundle.stats.mode[i]),
                    "category": category_of_index(i),
                }
                for i in range(bundle.schema.size)
            ]
        }

    @app.post("/alerts/{alert_id}/classification")
    def classify(alert_id: int, session: str = Query(...), body: dict = Body(...)) -> dict:
        get_alert(alert_id)
        state = get_session(session)
        if state.condition_of(alert_id) is None:
            raise HTTPException(status_code=404, detail="alert not part of this session")
        class_name = body.get("class")
        if class_name not in bundle.class_names:
            raise HTTPException(status_code=400, detail=f"invalid class {class_name!r}")
        confidence = body.get("confidence")
        if not isinstance(confidence, (int, float)) or not (0 <= confidence <= 100):
            raise HTTPException(status_code=400, detail="confidence must be 0-100")
        reliance = body.get("reliance", {})
        for key in ("features", "explanations", "knowledge"):
            if key not in reliance:
                raise HTTPException(status_code=400, detail=f"missing reliance rating {key!r}")
        with lock:
            if alert_id in state.submissions:
                raise HTTPException(status_code=409, detail="alert already classified")
            started = state.first_fetch.get(alert_id, time.time())
            elapsed = max(time.time() - started, 1e-6)
            state.submissions[alert_id] = {
                "class": class_name,
                "confidence": float(confidence),
                "reliance": {k: reliance[k] for k in ("features", "explanations", "knowledge")},
                "elapsed_seconds": elapsed,
            }
        return {"status": "recorded", "elapsed_seconds": elapsed}

    @app.post("/sessions/{session_id}/questionnaire")
    def questionnaire(session_id: str, body: dict = Body(...)) -> dict:
        state = get_session(session_id)
        trust = body.get("trust", {})
        load = body.get("cognitive_load", {})
        for name, answers in (("trust", trust), ("cognitive_load", load)):
            for item, value in answers.items():
                if not isinstance(value, (int, float)) or not (1 <= value <= 7):
                    raise HTTPException(
                        status_code=400,
                        detail=f"{name} item {item!r} must be on the 1-7 scale")
        with lock:
            state.questionnaires.append({"trust": trust, "cognitive_load": load})
        return {"status": "recorded"}

    @app.get("/sessions/{session_id}")
    def session_info(session_id: str) -> dict:
        state = get_session(session_id)
        return {
            "session_id": state.session_id,
            "stages": state.stages,
            "submitted": sorted(state.submissions),
            "elapsed": {str(a): s["elapsed_seconds"] for a, s in state.submissions.items()},
        }

    return app


def bundle_from_pipeline(pipeline, subset_id: int = 0) -> ServingBundle:
    """Builds a serving bundle from trained pipeline artifacts."""
    _, catalog, _ = pipeline._load_data()
    ctx = pipeline._subset(subset_id)
    assistant = pipeline._load_assistant(subset_id)
    return ServingBundle(
        schema=ctx.store.schema,
        catalog=catalog,
        predictor=ctx.predictor,
        assistant=assistant,
        env_config=pipeline.manifest.env,
        scaler=ctx.scaler,
        alerts=list(ctx.split.fresh),
        stats=ctx.stats,
        class_names=pipeline.manifest.class_names,
        session_seed=pipeline.manifest.seed,
    )

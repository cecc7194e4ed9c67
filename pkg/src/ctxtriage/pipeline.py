"""End-to-end experiment orchestration.

A manifest describes data (synthetic recipe or CSV + grouping manifest),
splits, classifier/env/learner settings, imitation training and teaming
strategies. Stages run in order

    prepare-data -> train-analysts -> collect-traces -> train-assistant
    -> eval-team -> explain (-> serve)

each one idempotent: a digest of its inputs is stored next to its outputs and
a rerun with unchanged inputs is skipped. Every random draw derives from the
manifest seed, so a full rerun reproduces the teaming summary byte for byte.
"""

from __future__ import annotations

import csv as csv_module
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
import numpy as np

from . import repository
from .analysts import (
    AnalystConfig,
    TrainedAnalyst,
    collect_traces,
    load_analyst,
    save_analyst,
    train_analyst,
)
from .catalog import (
    AlertRecord,
    ContextCatalog,
    DatasetSplit,
    FeatureSchema,
    FeatureStats,
    SyntheticConfig,
    balance_oversample,
    feature_stats,
    generate_synthetic_alerts,
    ingest_alerts,
    load_grouping_manifest,
    parse_grouping_manifest,
    schema_from_manifest,
    stratified_split,
)
from .classifiers import ClassifierConfig, ClassifierStore, FeatureScaler, StorePredictor, mask_from_categories
from .env import EnvConfig, InvestigationEnv
from .explain import evidence_view, shapley_exact
from .imitation import AssistantPolicy, BCConfig, GailConfig, behavior_clone, merge_multi_source, train_gail
from .stats import bonferroni, cohen_d, mcnemar, per_class_f1, wilcoxon_signed_rank
from .teaming import AdoptionStrategy, TeamingReport, one_time_plan, run_team_experiment

logger = logging.getLogger(__name__)

STAGES = ("prepare-data", "train-analysts", "collect-traces", "train-assistant",
          "eval-team", "explain", "serve", "all")

_STAGE_ORDER = ("prepare-data", "train-analysts", "collect-traces",
                "train-assistant", "eval-team", "explain")


class PipelineError(RuntimeError):
    pass


class MissingUpstreamError(PipelineError):
    def __init__(self, missing_stage: str) -> None:
        super().__init__(f"missing upstream artifacts: run {missing_stage} first")
        self.missing_stage = missing_stage


@dataclass
class ExperimentManifest:
    seed: int
    out_dir: Path
    synthetic: SyntheticConfig | None
    dataset_csv: Path | None
    grouping_path: Path | None
    class_names: list[str]
    negative_class_names: list[str]
    splits: dict
    balance_total: int
    classifier: ClassifierConfig
    env: EnvConfig
    analysts: list[dict]
    traces: dict
    imitation: dict
    strategies: list[str]
    teaming_seeds: list[int]
    teaming_mode: str = "one-time"
    teaming_rounds: int = 3
    explain_alerts: int = 3
    raw: dict = field(default_factory=dict)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def negative_class_ids(self) -> set[int]:
        return {self.class_names.index(n) for n in self.negative_class_names}


def load_manifest(path: str | Path, seed_override: int | None = None,
                  out_override: str | Path | None = None) -> ExperimentManifest:
    path = Path(path)
    doc = json.loads(path.read_text())
    seed = doc.get("seed", 0)
    env_seed = os.environ.get("CB_SEED")
    if env_seed is not None:
        seed = int(env_seed)
    if seed_override is not None:
        seed = seed_override

    synthetic = None
    dataset_csv = None
    grouping_path = None
    if "synthetic" in doc:
        syn = dict(doc["synthetic"])
        cats_per_class = syn.pop("cats_per_class", None)
        class_names = syn.pop("class_names", None)
        if "signatures" in syn:
            syn["signatures"] = {int(k): tuple(v) for k, v in syn["signatures"].items()}
            synthetic = SyntheticConfig(**{k: tuple(v) if k == "class_probs" else v
                                           for k, v in syn.items()})
        else:
            synthetic = SyntheticConfig.default(
                cats_per_class=cats_per_class or 2,
                **{k: tuple(v) if k == "class_probs" else v for k, v in syn.items()},
            )
        names = class_names or [f"class_{c}" for c in range(synthetic.n_classes)]
    elif "dataset" in doc:
        dataset_csv = (path.parent / doc["dataset"]["csv"]).resolve()
        grouping_path = (path.parent / doc["dataset"]["grouping"]).resolve()
        if not dataset_csv.exists():
            raise PipelineError(f"dataset csv not found: {dataset_csv}")
        if not grouping_path.exists():
            raise PipelineError(f"grouping manifest not found: {grouping_path}")
        names = list(parse_grouping_manifest(grouping_path.read_text()).classes)
    else:
        raise PipelineError("manifest needs either a 'synthetic' or a 'dataset' section")

    out_dir = Path(out_override) if out_override else (path.parent / doc.get("out_dir", "out"))
    return ExperimentManifest(
        seed=seed,
        out_dir=out_dir,
        synthetic=synthetic,
        dataset_csv=dataset_csv,
        grouping_path=grouping_path,
        class_names=names,
        negative_class_names=doc.get("negative_classes", [names[0]]),
        splits=doc.get("splits", {"n_subsets": 10, "n_hist": 300, "n_new": 60}),
        balance_total=doc.get("balance_total", 1200),
        classifier=ClassifierConfig(**doc.get("classifier", {})),
        env=EnvConfig(**doc.get("env", {})),
        analysts=doc.get("analysts", [{"algorithm": "a2c"}, {"algorithm": "a2c"},
                                      {"algorithm": "dqn"}]),
        traces=doc.get("traces", {"n_alerts": 100, "per_source": 100}),
        imitation=doc.get("imitation", {"method": "gail"}),
        strategies=doc.get("teaming", {}).get("strategies", [
            "alone", "always", "random:0.5",
            "threshold:0.9", "threshold:0.8", "threshold:0.7", "threshold:0.6",
        ]),
        teaming_seeds=doc.get("teaming", {}).get("seeds", [0]),
        teaming_mode=doc.get("teaming", {}).get("mode", "one-time"),
        teaming_rounds=doc.get("teaming", {}).get("rounds", 3),
        explain_alerts=doc.get("explain_alerts", 3),
        raw=doc,
    )


def _digest_of(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()


def _stage_digest_path(out_dir: Path, stage: str) -> Path:
    return out_dir / "digests" / f"{stage}.json"


def _stage_fresh(out_dir: Path, stage: str, digest: str) -> bool:
    p = _stage_digest_path(out_dir, stage)
    return p.exists() and json.loads(p.read_text()).get("digest") == digest


def _mark_stage(out_dir: Path, stage: str, digest: str) -> None:
    p = _stage_digest_path(out_dir, stage)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps({"stage": stage, "digest": digest}, sort_keys=True))


def _require_stage(out_dir: Path, stage: str) -> None:
    """Names the earliest missing stage up to and including ``stage``."""
    for upstream in _STAGE_ORDER[: _STAGE_ORDER.index(stage) + 1]:
        if not _stage_digest_path(out_dir, upstream).exists():
            raise MissingUpstreamError(upstream)


@dataclass
class SubsetContext:
    """Everything one subset's experiments need, rebuilt lazily per stage."""

    subset_id: int
    seed: int
    split: DatasetSplit
    scaler: FeatureScaler
    balanced: list[AlertRecord]
    store: ClassifierStore
    predictor: StorePredictor
    stats: FeatureStats

    def make_env(self, manifest: ExperimentManifest, catalog: ContextCatalog,
                 alert_pool: list[AlertRecord] | None = None) -> InvestigationEnv:
        return InvestigationEnv(catalog, self.predictor, manifest.env,
                                scaler=self.scaler, alert_pool=alert_pool)


class Pipeline:
    def __init__(self, manifest: ExperimentManifest) -> None:
        self.manifest = manifest
        self.out = manifest.out_dir
        self.out.mkdir(parents=True, exist_ok=True)
        self._schema: FeatureSchema | None = None
        self._catalog: ContextCatalog | None = None
        self._splits: list[DatasetSplit] | None = None
        self._subset_ctx: dict[int, SubsetContext] = {}

    # ---------------------------------------------------------------- data

    def _data_digest(self) -> str:
        m = self.manifest
        payload = {
            "seed": m.seed,
            "splits": m.splits,
            "synthetic": m.synthetic.__dict__ if m.synthetic else None,
            "dataset": str(m.dataset_csv),
            "grouping": str(m.grouping_path),
        }
        if m.dataset_csv:
            payload["csv_sha"] = hashlib.sha256(m.dataset_csv.read_bytes()).hexdigest()
            payload["grouping_sha"] = hashlib.sha256(m.grouping_path.read_bytes()).hexdigest()
        return _digest_of(payload)

    def prepare_data(self) -> None:
        digest = self._data_digest()
        if _stage_fresh(self.out, "prepare-data", digest):
            logger.info("prepare-data up to date")
            return
        m = self.manifest
        if m.synthetic is not None:
            schema, catalog, alerts = generate_synthetic_alerts(m.synthetic, m.seed)
        else:
            grouping_text = m.grouping_path.read_text()
            grouping = parse_grouping_manifest(grouping_text)
            schema = schema_from_manifest(grouping)
            catalog = load_grouping_manifest(grouping_text, schema)
            alerts = ingest_alerts(m.dataset_csv.read_text(), schema, grouping.label,
                                   classes=grouping.classes, drop=grouping.drop)
        splits = stratified_split(alerts, m.splits["n_subsets"], m.splits["n_hist"],
                                  m.splits["n_new"], seed=m.seed)
        doc = {
            "schema": {"names": list(schema.names),
                       "kinds": [f.kind for f in sorted(schema.features, key=lambda f: f.index)]},
            "catalog": {
                "initial": sorted(catalog.initial_indices),
                "categories": [
                    {"id": c.id, "name": c.name, "indices": sorted(c.feature_indices)}
                    for c in catalog.categories
                ],
            },
            "classes": m.class_names,
            "alerts": {
                "ids": [a.alert_id for a in alerts],
                "labels": [a.label for a in alerts],
                "values": [a.values.tolist() for a in alerts],
            },
            "splits": [
                {"subset_id": s.subset_id,
                 "historical": [a.alert_id for a in s.historical],
                 "fresh": [a.alert_id for a in s.fresh]}
                for s in splits
            ],
        }
        data_dir = self.out / "data"
        data_dir.mkdir(parents=True, exist_ok=True)
        (data_dir / "dataset.json").write_text(json.dumps(doc, sort_keys=True))
        _mark_stage(self.out, "prepare-data", digest)
        logger.info("prepare-data: %d alerts, %d subsets", len(alerts), len(splits))

    def _load_data(self) -> tuple[FeatureSchema, ContextCatalog, list[DatasetSplit]]:
        if self._schema is not None:
            return self._schema, self._catalog, self._splits
        _require_stage(self.out, "prepare-data")
        doc = json.loads((self.out / "data" / "dataset.json").read_text())
        schema = FeatureSchema.from_names(doc["schema"]["names"], doc["schema"]["kinds"])
        from .catalog import ContextCategory

        catalog = ContextCatalog(
            initial_indices=frozenset(doc["catalog"]["initial"]),
            categories=tuple(
                ContextCategory(c["id"], c["name"], frozenset(c["indices"]))
                for c in doc["catalog"]["categories"]
            ),
        )
        by_id = {}
        for aid, label, values in zip(doc["alerts"]["ids"], doc["alerts"]["labels"],
                                      doc["alerts"]["values"]):
            by_id[aid] = AlertRecord(alert_id=aid, values=np.asarray(values), label=label)
        splits = [
            DatasetSplit(subset_id=s["subset_id"],
                         historical=[by_id[i] for i in s["historical"]],
                         fresh=[by_id[i] for i in s["fresh"]])
            for s in doc["splits"]
        ]
        self._schema, self._catalog, self._splits = schema, catalog, splits
        return schema, catalog, splits

    def _subset(self, subset_id: int) -> SubsetContext:
        if subset_id in self._subset_ctx:
            return self._subset_ctx[subset_id]
        schema, catalog, splits = self._load_data()
        m = self.manifest
        split = splits[subset_id]
        seed = m.seed + 1000 * (subset_id + 1)
        scaler = FeatureScaler.fit(split.historical)
        balanced = balance_oversample(split.historical, m.balance_total, seed=seed,
                                      n_classes=m.n_classes)
        store = ClassifierStore(catalog, schema, m.n_classes, scaler)
        clf_config = ClassifierConfig(**{**m.classifier.__dict__, "seed": seed})
        cache_dir = self.out / "subsets" / f"s{subset_id:02d}" / "classifiers"
        if cache_dir.exists():
            store.load_cache(cache_dir)
        ctx = SubsetContext(
            subset_id=subset_id,
            seed=seed,
            split=split,
            scaler=scaler,
            balanced=balanced,
            store=store,
            predictor=StorePredictor(store, balanced, clf_config),
            stats=feature_stats(split.historical),
        )
        self._subset_ctx[subset_id] = ctx
        return ctx

    def _analyst_slices(self, ctx: SubsetContext) -> list[list[AlertRecord]]:
        """Disjoint historical slices, one per analyst."""
        n = len(self.manifest.analysts)
        hist = ctx.split.historical
        per = len(hist) // n
        return [hist[i * per : (i + 1) * per] for i in range(n)]

    # ------------------------------------------------------------- analysts

    def _analysts_digest(self) -> str:
        return _digest_of({
            "data": self._data_digest(),
            "analysts": self.manifest.analysts,
            "classifier": self.manifest.classifier.__dict__,
            "env": self.manifest.env.to_json_dict(),
            "balance_total": self.manifest.balance_total,
        })

    def train_analysts(self) -> None:
        digest = self._analysts_digest()
        if _stage_fresh(self.out, "train-analysts", digest):
            logger.info("train-analysts up to date")
            return
        _require_stage(self.out, "prepare-data")
        _, catalog, splits = self._load_data()
        for subset_id in range(len(splits)):
            ctx = self._subset(subset_id)
            slices = self._analyst_slices(ctx)
            out_dir = self.out / "subsets" / f"s{subset_id:02d}" / "analysts"
            for j, spec in enumerate(self.manifest.analysts):
                cfg_fields = {k: v for k, v in spec.items() if k != "algorithm"}
                cfg_fields.setdefault("seed", ctx.seed + 17 * j)
                maker = AnalystConfig.a2c if spec["algorithm"] == "a2c" else AnalystConfig.dqn
                config = maker(**cfg_fields)
                analyst_id = f"{spec['algorithm']}_{j}"
                env = ctx.make_env(self.manifest, catalog, alert_pool=slices[j])
                analyst = train_analyst(lambda env=env: env, slices[j], config,
                                        analyst_id=analyst_id)
                save_analyst(analyst, out_dir)
                logger.info("subset %d: trained %s (%d episodes)",
                            subset_id, analyst_id, len(analyst.training_log))
            ctx.store.save_cache(self.out / "subsets" / f"s{subset_id:02d}" / "classifiers")
        _mark_stage(self.out, "train-analysts", digest)

    def _load_analysts(self, subset_id: int) -> list[TrainedAnalyst]:
        out_dir = self.out / "subsets" / f"s{subset_id:02d}" / "analysts"
        if not out_dir.exists():
            raise MissingUpstreamError("train-analysts")
        return [
            load_analyst(out_dir, f"{spec['algorithm']}_{j}")
            for j, spec in enumerate(self.manifest.analysts)
        ]

    # --------------------------------------------------------------- traces

    def collect_trace_records(self) -> None:
        digest = _digest_of({"analysts": self._analysts_digest(),
                             "traces": self.manifest.traces})
        if _stage_fresh(self.out, "collect-traces", digest):
            logger.info("collect-traces up to date")
            return
        _require_stage(self.out, "train-analysts")
        _, catalog, splits = self._load_data()
        n_alerts = self.manifest.traces.get("n_alerts", 100)
        for subset_id in range(len(splits)):
            ctx = self._subset(subset_id)
            analysts = self._load_analysts(subset_id)
            slices = self._analyst_slices(ctx)
            path = self.out / "subsets" / f"s{subset_id:02d}" / "traces.jsonl"
            path.unlink(missing_ok=True)
            records = []
            for analyst, pool in zip(analysts, slices):
                env = ctx.make_env(self.manifest, catalog)
                trajs = collect_traces([analyst], env, pool[:n_alerts])
                records.extend(
                    repository.TraceRecord.from_trajectory(
                        t, analyst_id=analyst.id, algorithm=analyst.algorithm,
                        subset_id=subset_id, seed=ctx.seed)
                    for t in trajs
                )
            repository.save_traces(records, path)
            ctx.store.save_cache(self.out / "subsets" / f"s{subset_id:02d}" / "classifiers")
            logger.info("subset %d: %d traces", subset_id, len(records))
        _mark_stage(self.out, "collect-traces", digest)

    # ------------------------------------------------------------ assistant

    def train_assistant(self) -> None:
        m = self.manifest
        digest = _digest_of({"traces": self._analysts_digest(),
                             "imitation": m.imitation, "trace_cfg": m.traces})
        if _stage_fresh(self.out, "train-assistant", digest):
            logger.info("train-assistant up to date")
            return
        _require_stage(self.out, "collect-traces")
        _, catalog, splits = self._load_data()
        method = m.imitation.get("method", "gail")
        for subset_id in range(len(splits)):
            ctx = self._subset(subset_id)
            path = self.out / "subsets" / f"s{subset_id:02d}" / "traces.jsonl"
            records = repository.load_traces(path)
            by_analyst: dict[str, list] = {}
            for r in records:
                by_analyst.setdefault(r.analyst_id, []).append(r.to_trajectory())
            per_source = m.traces.get("per_source", min(len(v) for v in by_analyst.values()))
            merged = merge_multi_source(by_analyst, per_source, seed=ctx.seed)
            source_ids = tuple(sorted(by_analyst))

            if method == "gail":
                gen_overrides = m.imitation.get("generator", {})
                generator = AnalystConfig.a2c(reward_stop_threshold=None, seed=ctx.seed + 7,
                                              **gen_overrides)
                gail_cfg = GailConfig(
                    buffer_capacity=m.imitation.get("buffer_capacity", 3000),
                    disc_updates_per_round=m.imitation.get("disc_updates_per_round", 10),
                    total_transition_budget=m.imitation.get("total_transition_budget", 40_000),
                    generator=generator,
                    seed=ctx.seed + 13,
                )
                env = ctx.make_env(self.manifest, catalog, alert_pool=ctx.split.historical)
                assistant, _ = train_gail(merged, lambda env=env: env, gail_cfg,
                                          source_ids=source_ids)
            elif method == "bc":
                bc_cfg = BCConfig(seed=ctx.seed + 13, **m.imitation.get("bc", {}))
                assistant = behavior_clone(merged, bc_cfg, source_ids=source_ids)
            else:
                raise PipelineError(f"unknown imitation method {method!r}")
            assistant.save(self.out / "subsets" / f"s{subset_id:02d}" / "assistant")
            ctx.store.save_cache(self.out / "subsets" / f"s{subset_id:02d}" / "classifiers")
            logger.info("subset %d: assistant trained (%s)", subset_id, method)
        _mark_stage(self.out, "train-assistant", digest)

    def _load_assistant(self, subset_id: int) -> AssistantPolicy:
        path = self.out / "subsets" / f"s{subset_id:02d}" / "assistant"
        if not (path / "assistant.json").exists():
            raise MissingUpstreamError("train-assistant")
        return AssistantPolicy.load(path)

    # ----------------------------------------------------------------- team

    def eval_team(self) -> dict:
        m = self.manifest
        digest = _digest_of({"assistant": self._analysts_digest(),
                             "imitation": m.imitation,
                             "strategies": m.strategies, "seeds": m.teaming_seeds})
        report_dir = self.out / "report"
        summary_path = report_dir / "summary.json"
        if _stage_fresh(self.out, "eval-team", digest) and summary_path.exists():
            logger.info("eval-team up to date")
            return json.loads(summary_path.read_text())
        _require_stage(self.out, "train-assistant")
        _, catalog, splits = self._load_data()
        negative = m.negative_class_ids()

        all_rows = []
        all_decisions = []
        per_subset: dict[str, dict] = {}
        for subset_id in range(len(splits)):
            ctx = self._subset(subset_id)
            analysts = self._load_analysts(subset_id)
            assistant = self._load_assistant(subset_id)
            env = ctx.make_env(self.manifest, catalog)
            strategies = [AdoptionStrategy.parse(s, seed=ctx.seed) for s in m.strategies]
            report = run_team_experiment(
                analysts, assistant, env, ctx.split.fresh, strategies,
                seeds=m.teaming_seeds, negative_classes=negative, subset_id=subset_id,
                mode=m.teaming_mode, rounds=m.teaming_rounds,
            )
            all_rows.extend(report.rows)
            all_decisions.extend(report.decisions)
            per_subset[str(subset_id)] = {
                strategy: _strategy_stats(report, strategy) for strategy in
                sorted({r.strategy for r in report.rows})
            }
            ctx.store.save_cache(self.out / "subsets" / f"s{subset_id:02d}" / "classifiers")
            logger.info("subset %d: teaming evaluated", subset_id)

        full = TeamingReport(rows=all_rows, decisions=all_decisions)
        report_dir.mkdir(parents=True, exist_ok=True)
        _write_decisions_csv(full, report_dir / "teaming_report.csv")
        summary = _summarize_report(full, per_subset, m)
        summary_path.write_text(json.dumps(summary, sort_keys=True, indent=1))
        _mark_stage(self.out, "eval-team", digest)
        return summary

    # -------------------------------------------------------------- explain

    def explain(self) -> dict:
        m = self.manifest
        digest = _digest_of({"assistant": self._analysts_digest(), "n": m.explain_alerts})
        out_path = self.out / "report" / "explanations.json"
        if _stage_fresh(self.out, "explain", digest) and out_path.exists():
            logger.info("explain up to date")
            return json.loads(out_path.read_text())
        _require_stage(self.out, "train-assistant")
        _, catalog, splits = self._load_data()
        ctx = self._subset(0)
        assistant = self._load_assistant(0)
        env = ctx.make_env(self.manifest, catalog)
        category_names = [c.name for c in catalog.categories]
        feature_names = list(ctx.store.schema.names)

        docs = []
        for alert in ctx.split.fresh[: m.explain_alerts]:
            plan = one_time_plan(assistant, env, alert)
            mask = mask_from_categories(plan.actions)
            attribution = shapley_exact(alert, ctx.predictor)
            view = evidence_view(alert, mask, ctx.predictor, ctx.stats)
            docs.append({
                "alert_id": alert.alert_id,
                "suggested_categories": [category_names[k] for k in plan.actions],
                "shapley": attribution.to_json_dict(m.class_names, category_names),
                "evidence": view.to_json_dict(m.class_names, feature_names),
            })
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(json.dumps(docs, sort_keys=True, indent=1))
        _mark_stage(self.out, "explain", digest)
        return docs

    # ------------------------------------------------------------------ all

    def run(self, stage: str) -> dict | None:
        if stage not in STAGES:
            raise PipelineError(f"unknown stage {stage!r}; expected one of {STAGES}")
        if stage == "serve":
            raise PipelineError("use ctxtriage serve / api.create_app_from_pipeline")
        results: dict[str, object] = {}
        stages = _STAGE_ORDER if stage == "all" else (stage,)
        for s in stages:
            if s == "prepare-data":
                self.prepare_data()
            elif s == "train-analysts":
                self.train_analysts()
            elif s == "collect-traces":
                self.collect_trace_records()
            elif s == "train-assistant":
                self.train_assistant()
            elif s == "eval-team":
                results["eval-team"] = self.eval_team()
            elif s == "explain":
                results["explain"] = self.explain()
        if stage == "all" or stage == "eval-team":
            return results.get("eval-team")
        return results.get(stage)


def _strategy_stats(report: TeamingReport, strategy: str) -> dict:
    rows = [r for r in report.rows if r.strategy == strategy]
    return {
        "mean_weighted_f1": float(np.mean([r.weighted_f1 for r in rows])),
        "mean_confidence": float(np.mean([r.mean_confidence for r in rows])),
        "fp": int(sum(r.fp for r in rows)),
        "fn": int(sum(r.fn for r in rows)),
        "flips_good_to_bad": int(sum(r.flips_good_to_bad for r in rows)),
        "flips_bad_to_good": int(sum(r.flips_bad_to_good for r in rows)),
        "adopted": int(sum(r.adopted_count for r in rows)),
        "considered": int(sum(r.considered_count for r in rows)),
    }


def _write_decisions_csv(report: TeamingReport, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fields = ["subset_id", "analyst_id", "strategy", "seed", "alert_id", "truth",
              "analyst_mask", "final_mask", "analyst_class", "final_class",
              "analyst_confidence", "final_confidence", "considered", "adopted",
              "analyst_outcome", "final_outcome"]
    with open(path, "w", newline="") as fh:
        writer = csv_module.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for d in report.decisions:
            writer.writerow({k: getattr(d, k) for k in fields})


def _summarize_report(report: TeamingReport, per_subset: dict,
                      manifest: ExperimentManifest) -> dict:
    strategies = sorted({r.strategy for r in report.rows})
    non_alone = [s for s in strategies if s != "alone"]
    alone_by_key = {
        (r.subset_id, r.analyst_id, r.seed): r
        for r in report.rows if r.strategy == "alone"
    }
    by_strategy_rows: dict[str, list] = {s: [] for s in strategies}
    for r in report.rows:
        by_strategy_rows[r.strategy].append(r)

    comparisons = {}
    raw_pvalues = []
    for strategy in non_alone:
        b, c = report.correctness_pairs(strategy)
        mcn = mcnemar(b, c) if (b + c) > 0 else None
        team_rows = by_strategy_rows[strategy]
        pairs = [
            (t, alone_by_key[(t.subset_id, t.analyst_id, t.seed)])
            for t in team_rows if (t.subset_id, t.analyst_id, t.seed) in alone_by_key
        ]
        deltas = [t.weighted_f1 - a.weighted_f1 for t, a in pairs]
        try:
            wil = wilcoxon_signed_rank(deltas)
            wil_doc = {"statistic": wil.statistic, "p": wil.p_value,
                       "effect_r": wil.effect_size, "method": wil.method, "n": wil.n}
        except ValueError:
            wil_doc = None
        team_conf = [t.mean_confidence for t, _ in pairs]
        alone_conf = [a.mean_confidence for _, a in pairs]
        try:
            d_conf = cohen_d(team_conf, alone_conf)
        except ValueError:
            d_conf = 0.0
        comparisons[strategy] = {
            "mcnemar": None if mcn is None else {
                "b_analyst_right_team_wrong": mcn.extras["b"],
                "c_analyst_wrong_team_right": mcn.extras["c"],
                "statistic": mcn.statistic, "p": mcn.p_value,
                "cohen_g": mcn.effect_size, "method": mcn.method,
            },
            "wilcoxon_f1": wil_doc,
            "cohen_d_confidence": d_conf,
            "mean_f1": float(np.mean([r.weighted_f1 for r in team_rows])),
            "mean_confidence": float(np.mean([r.mean_confidence for r in team_rows])),
            "subsets_better": _subsets_better(per_subset, strategy),
        }
        raw_pvalues.append(comparisons[strategy]["mcnemar"]["p"] if mcn else 1.0)

    adj = bonferroni(raw_pvalues, m=len(non_alone)) if non_alone else []
    for strategy, p_adj in zip(non_alone, adj):
        comparisons[strategy]["mcnemar_p_bonferroni"] = p_adj

    def pooled_per_class_f1(strategy: str) -> dict[str, float]:
        preds = [d.final_class for d in report.decisions if d.strategy == strategy]
        truths = [d.truth for d in report.decisions if d.strategy == strategy]
        scores = per_class_f1(preds, truths)
        return {manifest.class_names[c]: f1 for c, f1 in sorted(scores.items())}

    return {
        "classes": manifest.class_names,
        "negative_classes": manifest.negative_class_names,
        "strategies": strategies,
        "alone": {
            "mean_f1": float(np.mean([r.weighted_f1 for r in by_strategy_rows["alone"]])),
            "mean_confidence": float(np.mean([r.mean_confidence
                                              for r in by_strategy_rows["alone"]])),
            "median_confidence": float(np.median([r.median_confidence
                                                  for r in by_strategy_rows["alone"]])),
            "per_class_f1": pooled_per_class_f1("alone"),
        },
        "per_class_f1": {s: pooled_per_class_f1(s) for s in strategies},
        "strategy_vs_alone": comparisons,
        "per_subset": per_subset,
        "n_decisions": len(report.decisions),
    }


def _subsets_better(per_subset: dict, strategy: str) -> int:
    better = 0
    for subset_stats in per_subset.values():
        if strategy in subset_stats and "alone" in subset_stats:
            if subset_stats[strategy]["mean_weighted_f1"] > subset_stats["alone"]["mean_weighted_f1"]:
                better += 1
    return better


def run_pipeline(manifest: ExperimentManifest | str | Path, stage: str = "all") -> dict | None:
    if not isinstance(manifest, ExperimentManifest):
        manifest = load_manifest(manifest)
    return Pipeline(manifest).run(stage)

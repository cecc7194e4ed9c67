"""Investigation-trace repository: append-only line-delimited JSON with
filtered loading. Records round-trip losslessly, and a corrupt line is
reported with its number while the rest still loads.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .analysts import TrajStep, Trajectory
from .classifiers import prediction_from_probs
from .env import Observation

logger = logging.getLogger(__name__)

__all__ = ["TraceRecord", "save_traces", "load_traces"]


@dataclass
class TraceRecord:
    analyst_id: str
    algorithm: str
    subset_id: int
    seed: int
    timestamp: str
    alert_id: int
    truth: int
    steps: list[dict]
    final_probs: list[float]

    @staticmethod
    def from_trajectory(traj: Trajectory, analyst_id: str, algorithm: str,
                        subset_id: int, seed: int,
                        timestamp: str | None = None) -> "TraceRecord":
        steps = []
        for s in traj.steps:
            steps.append({
                "slots": s.observation.feature_slots.tolist(),
                "counters": s.observation.request_counters.tolist(),
                "confidence": s.observation.confidence,
                "repeat_ratio": s.observation.repeat_ratio,
                "action": s.action,
                "reward": s.reward,
            })
        return TraceRecord(
            analyst_id=analyst_id,
            algorithm=algorithm,
            subset_id=subset_id,
            seed=seed,
            timestamp=timestamp or datetime.now(timezone.utc).isoformat(),
            alert_id=traj.alert_id,
            truth=traj.truth,
            steps=steps,
            final_probs=traj.final_prediction.probs.tolist(),
        )

    def to_trajectory(self) -> Trajectory:
        steps = []
        for s in self.steps:
            obs = Observation(
                feature_slots=np.asarray(s["slots"], dtype=float),
                request_counters=np.asarray(s["counters"], dtype=int),
                confidence=s["confidence"],
                repeat_ratio=s["repeat_ratio"],
            )
            steps.append(TrajStep(observation=obs, action=s["action"], reward=s["reward"]))
        return Trajectory(
            alert_id=self.alert_id,
            steps=steps,
            final_prediction=prediction_from_probs(np.asarray(self.final_probs)),
            truth=self.truth,
        )

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True)

    @staticmethod
    def from_json(line: str) -> "TraceRecord":
        return TraceRecord(**json.loads(line))


def save_traces(records: list[TraceRecord], path: str | Path) -> int:
    """Appends records as JSON lines; returns the number written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a") as fh:
        for record in records:
            fh.write(record.to_json() + "\n")
    return len(records)


def load_traces(path: str | Path, analyst: str | None = None,
                subset: int | None = None,
                algorithm: str | None = None) -> list[TraceRecord]:
    """Loads records matching the filters; corrupt lines are logged with
    their line numbers and skipped."""
    records: list[TraceRecord] = []
    with open(path) as fh:
        for line_num, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = TraceRecord.from_json(line)
            except (json.JSONDecodeError, TypeError, KeyError) as exc:
                logger.warning("skipping corrupt trace line %d: %s", line_num, exc)
                continue
            if analyst is not None and record.analyst_id != analyst:
                continue
            if subset is not None and record.subset_id != subset:
                continue
            if algorithm is not None and record.algorithm != algorithm:
                continue
            records.append(record)
    return records

"""Noisy alert generator realizing the observation function."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from ..errors import ScenarioError
from ..intent import Alert, Observation
from .infrastructure import InfrastructureState


@dataclass(frozen=True)
class DetectionRule:
    technique_id: str
    condition: str
    true_positive: float
    false_positive: float
    metadata: dict = field(default_factory=dict, hash=False)

    def __post_init__(self):
        for p in (self.true_positive, self.false_positive):
            if not 0.0 <= p <= 1.0:
                raise ScenarioError(f"detector probability {p} outside [0, 1] for {self.technique_id}")


@dataclass(frozen=True)
class DetectorSpec:
    rules: tuple[DetectionRule, ...] = ()

    @classmethod
    def from_dict(cls, d: dict) -> "DetectorSpec":
        rules = []
        for technique, r in d.items():
            rules.append(DetectionRule(technique, r["condition"], float(r["true_positive"]),
                                       float(r["false_positive"]), dict(r.get("metadata", {}))))
        return cls(tuple(rules))

    @property
    def techniques(self) -> tuple[str, ...]:
        return tuple(r.technique_id for r in self.rules)


def detector_emit(
    state: InfrastructureState,
    spec: DetectorSpec,
    rng: random.Random,
    conditions: dict[str, bool] | None = None,
) -> Observation:
    """One Bernoulli draw per rule: true-positive rate when its condition holds, else false-positive rate."""
    conditions = state.conditions() if conditions is None else conditions
    alerts = []
    for rule in spec.rules:
        p = rule.true_positive if conditions.get(rule.condition, False) else rule.false_positive
        if rng.random() < p:
            alert_id = f"al-{state.round}-{len(alerts)}"
            meta = dict(rule.metadata)
            meta.update({"id": alert_id, "timestamp": str(state.round)})
            alerts.append(Alert.create(alert_id, rule.technique_id, meta))
    return Observation(tuple(alerts))

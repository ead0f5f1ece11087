"""Alert-to-intent derivation.

An alert mapped to an offensive technique is turned into concrete artifact
instances by declarative mapper rules; every operable instance is then paired
with each defensive technique that may counter the technique through it.
The result is the candidate intent set offered to the defender.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

from .errors import ContractError, UnknownIdentifierError
from .ontology import KnowledgeBase, Restriction, counter_techniques, valid_restrictions

DEFAULT_EXCLUSIONS = frozenset({"id", "timestamp", "analyst_note"})

Pairs = tuple[tuple[str, str], ...]


def freeze(mapping: Mapping[str, str] | Iterable[tuple[str, str]]) -> Pairs:
    items = mapping.items() if isinstance(mapping, Mapping) else mapping
    return tuple(sorted((str(k), str(v)) for k, v in items))


@dataclass(frozen=True)
class Alert:
    id: str
    technique_id: str
    metadata: Pairs = ()

    @classmethod
    def create(cls, id: str, technique_id: str, metadata: Mapping[str, str] | None = None) -> "Alert":
        return cls(id, technique_id, freeze(metadata or {}))

    @property
    def meta(self) -> dict[str, str]:
        return dict(self.metadata)

    def to_dict(self) -> dict:
        return {"id": self.id, "technique_id": self.technique_id, "metadata": self.meta}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Alert":
        missing = [k for k in ("id", "technique_id") if k not in d]
        if missing:
            raise ContractError(f"alert is missing {', '.join(missing)}: {dict(d)!r}")
        return cls.create(str(d["id"]), str(d["technique_id"]), d.get("metadata", {}))


@dataclass(frozen=True)
class Observation:
    """Alerts seen in one round; each is paired with its own technique."""

    alerts: tuple[Alert, ...] = ()

    def pairs(self) -> list[tuple[Alert, str]]:
        return [(a, a.technique_id) for a in self.alerts]

    def techniques(self) -> frozenset[str]:
        return frozenset(a.technique_id for a in self.alerts)

    def __or__(self, other: "Observation") -> "Observation":
        merged = dict.fromkeys(self.alerts + other.alerts)
        return Observation(tuple(merged))

    def to_list(self) -> list[dict]:
        return [a.to_dict() for a in self.alerts]

    @classmethod
    def from_list(cls, items: Iterable[Mapping]) -> "Observation":
        return cls(tuple(Alert.from_dict(d) for d in items))


@dataclass(frozen=True)
class TechnicalMetadata:
    entries: Pairs = ()

    def as_dict(self) -> dict[str, str]:
        return dict(self.entries)


@dataclass(frozen=True)
class ArtifactInstance:
    artifact_class: str
    attributes: Pairs
    engaging_property: str

    @property
    def attrs(self) -> dict[str, str]:
        return dict(self.attributes)

    def to_dict(self) -> dict:
        return {
            "class": self.artifact_class,
            "attributes": self.attrs,
            "engaging_property": self.engaging_property,
        }


@dataclass(frozen=True)
class MapperRule:
    """Binds artifact attributes to alert metadata keys for one restriction."""

    technique_id: str
    property: str
    artifact_class: str
    attribute_bindings: Pairs = ()

    @classmethod
    def from_dict(cls, d: Mapping) -> "MapperRule":
        return cls(d["technique"], d["property"], d["artifact"], freeze(d.get("bindings", {})))


@dataclass(frozen=True)
class SecurityIntent:
    """⟨offensive technique, metadata, target artifact, defensive technique⟩.

    ``def_property`` names which restriction of the defensive technique is
    used on the target. Persistence is not part of the intent: the defender
    decides it when acting.
    """

    ot: str
    md: TechnicalMetadata
    target: ArtifactInstance
    dt: str
    def_property: str

    @property
    def key(self) -> str:
        """Stable textual identity, used for ordering and reports."""
        attrs = ",".join(f"{k}={v}" for k, v in self.target.attributes)
        md = ",".join(f"{k}={v}" for k, v in self.md.entries)
        return (f"{self.ot}|{self.dt}|{self.def_property}|{self.target.artifact_class}"
                f"|{self.target.engaging_property}|{attrs}|{md}")

    @property
    def context(self) -> tuple[str, TechnicalMetadata]:
        return (self.ot, self.md)

    def to_dict(self) -> dict:
        return {
            "ot": self.ot,
            "md": self.md.as_dict(),
            "target": self.target.to_dict(),
            "dt": self.dt,
            "def_property": self.def_property,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SecurityIntent":
        t = d["target"]
        return cls(
            ot=d["ot"],
            md=TechnicalMetadata(freeze(d.get("md", {}))),
            target=ArtifactInstance(t["class"], freeze(t.get("attributes", {})), t["engaging_property"]),
            dt=d["dt"],
            def_property=d["def_property"],
        )

    def __lt__(self, other: "SecurityIntent") -> bool:
        return self.key < other.key


def extract_metadata(alert: Alert, exclusion_list: Iterable[str] = DEFAULT_EXCLUSIONS) -> TechnicalMetadata:
    excluded = set(exclusion_list)
    return TechnicalMetadata(tuple(kv for kv in alert.metadata if kv[0] not in excluded))


def validate_rules(rules: Iterable[MapperRule], kb: KnowledgeBase) -> None:
    """Raise if a rule does not correspond to a restriction in the KB."""
    for rule in rules:
        ot = kb.offensive(rule.technique_id)
        if (rule.property, rule.artifact_class) not in {r.pair for r in ot.restrictions}:
            raise ContractError(
                f"mapper rule {rule.property} {rule.artifact_class} matches no restriction of {ot.id}"
            )


def instantiate_artifacts(
    alert: Alert, ot: str, kb: KnowledgeBase, rules: Iterable[MapperRule]
) -> frozenset[ArtifactInstance]:
    """One instance per rule of ``ot`` whose bound metadata keys are all present.

    Rules with a missing key yield nothing: artifacts the alert cannot
    describe are left out rather than reported as errors.
    """
    kb.offensive(ot)
    meta = alert.meta
    out = set()
    for rule in rules:
        if rule.technique_id != ot:
            continue
        if any(key not in meta for _, key in rule.attribute_bindings):
            continue
        attrs = freeze((attr, meta[key]) for attr, key in rule.attribute_bindings)
        out.add(ArtifactInstance(rule.artifact_class, attrs, rule.property))
    return frozenset(out)


def is_operable(instance: ArtifactInstance, kb: KnowledgeBase) -> bool:
    kb.artifact(instance.artifact_class)
    attrs = instance.attrs
    return all(attrs.get(name) for name in kb.required_attributes(instance.artifact_class))


def derive_candidates(
    observation: Observation,
    kb: KnowledgeBase,
    rules: Iterable[MapperRule],
    exclusion_list: Iterable[str] = DEFAULT_EXCLUSIONS,
) -> frozenset[SecurityIntent]:
    """Candidate intent set for one observation."""
    rules = tuple(rules)
    exclusion_list = frozenset(exclusion_list)
    out: set[SecurityIntent] = set()
    for alert, technique_id in observation.pairs():
        if technique_id not in kb.offensive_techniques:
            raise UnknownIdentifierError(technique_id, "offensive technique")
        ot = kb.offensive_techniques[technique_id]
        md = extract_metadata(alert, exclusion_list)
        instances = [i for i in instantiate_artifacts(alert, technique_id, kb, rules) if is_operable(i, kb)]
        valid = valid_restrictions(ot, [(i.engaging_property, i.artifact_class) for i in instances])
        for inst in instances:
            restriction = Restriction(inst.engaging_property, inst.artifact_class)
            if restriction not in valid:
                continue
            for dt, def_prop in counter_techniques(kb, ot, restriction):
                out.add(SecurityIntent(technique_id, md, inst, dt.id, def_prop))
    return frozenset(out)

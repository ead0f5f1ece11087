"""Scenario documents and the abstract belief model they induce.

A scenario is a JSON document with these sections::

    name, kb, horizon, discount, default_ttl, seed, exclusion_list,
    infrastructure, attacker, detector, mapper_rules, security_functions,
    reward, belief_model, planner

``belief_model`` describes the compact tabular abstraction used for belief
tracking: the tracked attack ``conditions`` (abstract states are all their
on/off combinations, labeled from :meth:`InfrastructureState.conditions`),
per-condition ``initial`` marginals and Bernoulli ``dynamics``. A dynamics
entry gives ``on`` = P(condition next round | it holds now) and ``off`` =
P(condition next round | it does not). ``default`` applies unless a
defensive technique in effect overrides a condition; overrides are applied
in order, stored intents first, then the acted-on technique.
"""

from __future__ import annotations

import copy
import itertools
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from ..decision.pomdp import PomdpModel
from ..decision.reward import RewardSpec
from ..decision.store import DEFAULT_TTL, NoOp, apply_action
from ..enforcement import EFFECTS, SFRegistry, SecurityFunction, build_registry
from ..errors import ContractError, KBError, ScenarioError
from ..intent import DEFAULT_EXCLUSIONS, MapperRule, derive_candidates, validate_rules
from ..ontology import KnowledgeBase, load_knowledge_base, resolve_data_path
from .attacker import AttackerScript
from .detector import DetectorSpec
from .infrastructure import InfrastructureState

SCENARIO_DIR_ENV = "INTENTDEFENSE_SCENARIO_DIR"
CONDITIONS = ("persistence", "execution", "c2", "objective")


@dataclass(frozen=True)
class ConditionDynamics:
    on: float
    off: float

    def next_true(self, current: bool) -> float:
        return self.on if current else self.off


@dataclass(frozen=True)
class BeliefModelSpec:
    conditions: tuple[str, ...]
    initial: Mapping[str, float]
    dynamics: Mapping[str, Mapping[str, ConditionDynamics]]

    @classmethod
    def from_dict(cls, d: Mapping) -> "BeliefModelSpec":
        conditions = tuple(d["conditions"])
        dynamics = {
            key: {c: ConditionDynamics(float(v["on"]), float(v["off"])) for c, v in per.items()}
            for key, per in d.get("dynamics", {}).items()
        }
        return cls(conditions, {c: float(p) for c, p in d.get("initial", {}).items()}, dynamics)

    def state_labels(self) -> tuple[str, ...]:
        return tuple(_label(combo) for combo in self.combos())

    def combos(self) -> list[frozenset[str]]:
        out = []
        for bits in itertools.product((False, True), repeat=len(self.conditions)):
            out.append(frozenset(c for c, b in zip(self.conditions, bits) if b))
        return out

    def label(self, conditions: Mapping[str, bool]) -> str:
        """Labeling function from infrastructure conditions to an abstract state."""
        return _label(frozenset(c for c in self.conditions if conditions.get(c, False)))


def _label(active: frozenset[str]) -> str:
    return "+".join(sorted(active)) or "clean"


@dataclass
class Scenario:
    name: str
    kb: KnowledgeBase
    infrastructure: dict
    attacker: AttackerScript
    detector: DetectorSpec
    mapper_rules: tuple[MapperRule, ...]
    registry: SFRegistry
    reward: RewardSpec
    belief_model: BeliefModelSpec
    horizon: int
    discount: float = 0.95
    default_ttl: int = DEFAULT_TTL
    seed: int = 0
    exclusion_list: frozenset[str] = DEFAULT_EXCLUSIONS
    planner: dict = field(default_factory=dict)
    source: dict = field(default_factory=dict, repr=False)

    def initial_infrastructure(self) -> InfrastructureState:
        return InfrastructureState.from_dict(self.infrastructure)

    def with_overrides(self, overrides: Mapping) -> "Scenario":
        return build_scenario(deep_merge(self.source, overrides), base_dir=None)


def deep_merge(base: Mapping, overrides: Mapping) -> dict:
    out = copy.deepcopy(dict(base))
    for k, v in overrides.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), Mapping):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_scenario_path(name: str | Path) -> Path:
    """A path as given, else under the scenario directory variable, else bundled."""
    path = Path(name)
    if path.exists():
        return path
    env_dir = os.environ.get(SCENARIO_DIR_ENV)
    if env_dir and (Path(env_dir) / path.name).exists():
        return Path(env_dir) / path.name
    try:
        return resolve_data_path(path.name)
    except FileNotFoundError:
        raise ScenarioError(f"scenario not found: {name}") from None


def load_scenario(source: str | Path | Mapping, overrides: Mapping | None = None) -> Scenario:
    """Load and validate a scenario from a path, bundled name or parsed document."""
    base_dir = None
    if isinstance(source, Mapping):
        doc = dict(source)
    else:
        path = resolve_scenario_path(source)
        base_dir = path.parent
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        doc.setdefault("name", path.name.removesuffix(".scenario"))
    if overrides:
        doc = deep_merge(doc, overrides)
    return build_scenario(doc, base_dir)


def _load_kb(ref: str, base_dir: Path | None) -> KnowledgeBase:
    if base_dir is not None and (base_dir / ref).exists():
        return load_knowledge_base(base_dir / ref)
    try:
        return load_knowledge_base(ref)
    except FileNotFoundError:
        raise ScenarioError(f"knowledge base not found: {ref}") from None


def _require(doc: Mapping, key: str) -> Any:
    if key not in doc:
        raise ScenarioError(f"scenario is missing section {key!r}")
    return doc[key]


def build_scenario(doc: Mapping, base_dir: Path | None = None) -> Scenario:
    try:
        return _build(doc, base_dir)
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"malformed scenario: {exc!r}") from None


def _build(doc: Mapping, base_dir: Path | None) -> Scenario:
    kb_ref = _require(doc, "kb")
    if isinstance(kb_ref, str) and "\n" in kb_ref:
        kb = load_knowledge_base(kb_ref)
    else:
        kb = _load_kb(str(kb_ref), base_dir)

    horizon = int(_require(doc, "horizon"))
    if horizon < 1:
        raise ScenarioError(f"horizon must be >= 1, got {horizon}")
    discount = float(doc.get("discount", 0.95))
    if not 0.0 <= discount <= 1.0:
        raise ScenarioError(f"discount {discount} outside [0, 1]")
    default_ttl = int(doc.get("default_ttl", DEFAULT_TTL))
    if default_ttl < 1:
        raise ScenarioError("default_ttl must be >= 1")

    infra_doc = dict(_require(doc, "infrastructure"))
    infra = InfrastructureState.from_dict(infra_doc)
    attacker = AttackerScript.from_dict(doc.get("attacker", {}))
    detector = DetectorSpec.from_dict(doc.get("detector", {}))
    rules = tuple(MapperRule.from_dict(r) for r in doc.get("mapper_rules", []))
    registry = build_registry(SecurityFunction.from_dict(sf) for sf in doc.get("security_functions", []))
    reward = RewardSpec.from_dict(doc.get("reward", {}))
    belief_doc = doc.get("belief_model") or {"conditions": sorted({r.condition for r in detector.rules})}
    belief = BeliefModelSpec.from_dict(belief_doc)

    _check_infrastructure(infra, attacker)
    _check_detector(kb, detector, belief)
    try:
        validate_rules(rules, kb)
    except (ContractError, KBError) as exc:
        raise ScenarioError(f"mapper rule: {exc}") from None
    _check_functions(kb, registry)
    _check_belief(kb, belief)
    for cond in reward.risk:
        if cond not in CONDITIONS:
            raise ScenarioError(f"reward risk names unknown condition {cond!r}")

    return Scenario(
        name=str(doc.get("name", "scenario")),
        kb=kb,
        infrastructure=infra_doc,
        attacker=attacker,
        detector=detector,
        mapper_rules=rules,
        registry=registry,
        reward=reward,
        belief_model=belief,
        horizon=horizon,
        discount=discount,
        default_ttl=default_ttl,
        seed=int(doc.get("seed", 0)),
        exclusion_list=frozenset(doc.get("exclusion_list", DEFAULT_EXCLUSIONS)),
        planner=dict(doc.get("planner", {})),
        source=_resolved_source(doc, kb_ref, base_dir),
    )


def _resolved_source(doc: Mapping, kb_ref, base_dir: Path | None) -> dict:
    out = copy.deepcopy(dict(doc))
    if base_dir is not None and (base_dir / str(kb_ref)).exists():
        out["kb"] = str((base_dir / str(kb_ref)).resolve())
    return out


def _check_infrastructure(infra: InfrastructureState, script: AttackerScript) -> None:
    for f in infra.files:
        if f.host not in infra.hosts:
            raise ScenarioError(f"file {f.path} on unknown host {f.host}")
    for j in infra.scheduled_jobs.values():
        if j.host not in infra.hosts:
            raise ScenarioError(f"scheduled job {j.id} on unknown host {j.host}")
    for p in infra.processes:
        if p.host not in infra.hosts:
            raise ScenarioError(f"process {p.name} on unknown host {p.host}")
    for ph in script.phases:
        params = ph.params
        if not 0.0 <= ph.probability <= 1.0:
            raise ScenarioError(f"{ph.kind} phase probability outside [0, 1]")
        if ph.kind != "objective" and params.get("host") not in infra.hosts:
            raise ScenarioError(f"{ph.kind} phase references unknown host {params.get('host')!r}")
        if ph.kind == "spawn" and "job" in params and params["job"] not in infra.scheduled_jobs:
            raise ScenarioError(f"spawn phase references unknown job {params['job']!r}")
        if ph.kind in ("resolve", "connect") and params.get("domain") not in infra.dns_bindings:
            raise ScenarioError(f"{ph.kind} phase references unknown domain {params.get('domain')!r}")
        if ph.kind == "objective" and params.get("requires") not in CONDITIONS:
            raise ScenarioError(f"objective requires unknown condition {params.get('requires')!r}")
    if not 0.0 <= script.counter_drift <= 1.0:
        raise ScenarioError("counter_drift outside [0, 1]")


def _check_detector(kb: KnowledgeBase, detector: DetectorSpec, belief: BeliefModelSpec) -> None:
    seen = set()
    for rule in detector.rules:
        if rule.technique_id not in kb.offensive_techniques:
            raise ScenarioError(f"detector references unknown technique {rule.technique_id!r}")
        if rule.condition not in CONDITIONS:
            raise ScenarioError(f"detector rule {rule.technique_id} uses unknown condition {rule.condition!r}")
        if rule.condition not in belief.conditions:
            raise ScenarioError(f"condition {rule.condition!r} is detected but not tracked by the belief model")
        seen.add(rule.technique_id)


def _check_functions(kb: KnowledgeBase, registry: SFRegistry) -> None:
    for sf in registry.functions.values():
        for dt, params in sf.capabilities.items():
            if dt not in kb.defensive_techniques:
                raise ScenarioError(f"{sf.id} advertises unknown technique {dt!r}")
            if dt not in EFFECTS:
                raise ScenarioError(f"{sf.id}: no infrastructure effect for {dt}")
            missing = set(EFFECTS[dt].parameters) - set(params)
            if missing:
                raise ScenarioError(f"{sf.id}: {dt} needs parameters {sorted(missing)}")
        for rule in sf.failure_rules:
            if rule.when not in ("always", "attacker_privileged"):
                raise ScenarioError(f"{sf.id}: unknown failure condition {rule.when!r}")


def _check_belief(kb: KnowledgeBase, belief: BeliefModelSpec) -> None:
    if not belief.conditions:
        raise ScenarioError("belief model tracks no conditions")
    for c in belief.conditions:
        if c not in CONDITIONS:
            raise ScenarioError(f"belief model tracks unknown condition {c!r}")
    for key, per in belief.dynamics.items():
        if key != "default" and key not in kb.defensive_techniques:
            raise ScenarioError(f"belief dynamics reference unknown technique {key!r}")
        for c, dyn in per.items():
            if c not in belief.conditions:
                raise ScenarioError(f"dynamics for untracked condition {c!r}")
            if not (0.0 <= dyn.on <= 1.0 and 0.0 <= dyn.off <= 1.0):
                raise ScenarioError(f"dynamics for {key}/{c} outside [0, 1]")
    for c, p in belief.initial.items():
        if c not in belief.conditions or not 0.0 <= p <= 1.0:
            raise ScenarioError(f"bad initial marginal for {c!r}")


# -- abstract model -------------------------------------------------------------


def observation_symbols(detector: DetectorSpec) -> tuple[frozenset[str], ...]:
    """All subsets of detector techniques, ordered by bitmask."""
    techniques = detector.techniques
    out = []
    for mask in range(2 ** len(techniques)):
        out.append(frozenset(t for i, t in enumerate(techniques) if mask >> i & 1))
    return tuple(out)


def observation_symbol(observation, detector: DetectorSpec) -> frozenset[str]:
    return frozenset(observation.techniques()) & frozenset(detector.techniques)


def applied_techniques(action, store) -> tuple[str, ...]:
    """Techniques in effect after ``action``: stored intents, then the acted-on one."""
    after = apply_action(store, action)
    dts = sorted({i.dt for i in after.intents})
    if not isinstance(action, NoOp):
        dts = [d for d in dts if d != action.intent.dt] + [action.intent.dt]
    return tuple(dts)


def build_pomdp(scenario: Scenario) -> PomdpModel:
    """Tabular abstraction of the scenario over the tracked conditions.

    Planner actions are ``(DefenderAction, IntentStore)`` pairs.
    """
    spec = scenario.belief_model
    combos = spec.combos()
    labels = tuple(_label(c) for c in combos)
    symbols = observation_symbols(scenario.detector)

    z = np.ones((len(combos), len(symbols)))
    for s, active in enumerate(combos):
        for o, symbol in enumerate(symbols):
            for rule in scenario.detector.rules:
                p = rule.true_positive if rule.condition in active else rule.false_positive
                z[s, o] *= p if rule.technique_id in symbol else 1.0 - p

    initial = np.ones(len(combos))
    for s, active in enumerate(combos):
        for c in spec.conditions:
            p = spec.initial.get(c, 0.5)
            initial[s] *= p if c in active else 1.0 - p

    risk_free = np.array([scenario.reward.utility({c: True for c in active}) for active in combos])

    def transition_for(dts: tuple[str, ...]) -> np.ndarray:
        dyn = dict(spec.dynamics.get("default", {}))
        for dt in dts:
            dyn.update(spec.dynamics.get(dt, {}))
        t = np.ones((len(combos), len(combos)))
        for s, now in enumerate(combos):
            for s2, nxt in enumerate(combos):
                for c in spec.conditions:
                    d = dyn.get(c, ConditionDynamics(1.0, 0.0))
                    p = d.next_true(c in now)
                    t[s, s2] *= p if c in nxt else 1.0 - p
        return t

    def action_key(pair):
        action, store = pair
        return applied_techniques(action, store)

    def transition(pair):
        return transition_for(action_key(pair))

    def reward(s: int, pair) -> float:
        action, _ = pair
        t = model.transition_matrix(pair)
        return float(t[s] @ risk_free) - scenario.reward.action_cost(action)

    def observer(observation):
        return derive_candidates(observation, scenario.kb, scenario.mapper_rules, scenario.exclusion_list)

    model = PomdpModel(
        states=labels,
        observations=symbols,
        transition=transition,
        reward=reward,
        obs_fn=z,
        discount=scenario.discount,
        initial_belief=initial,
        intent_observer=observer,
        action_key=action_key,
    )
    return model

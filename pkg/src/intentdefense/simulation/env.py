"""Episode runner: one isolated world per episode.

Round order: purge expired intents, attacker step, detection, belief
update, candidate derivation, defender action, enforcement, assurance,
reward, TTL decrement.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from ..decision.planners import Planner
from ..decision.pomdp import BeliefState, belief_update, discounted_return, predict
from ..decision.store import (
    DefenderAction,
    IntentStore,
    ModifyPersistent,
    NoOp,
    apply_action,
    legal_actions,
)
from ..enforcement import StatusKind, assure, execute_intent, feedback
from ..errors import ContractError, ImpossibleObservationError
from ..intent import Observation, SecurityIntent, derive_candidates
from .attacker import attacker_step, has_reachable_phase
from .detector import detector_emit
from .scenario import Scenario, build_pomdp, observation_symbol

TRACE_SCHEMA = "intentdefense.trace/1"
ATTACK_CONDITIONS = ("persistence", "execution", "c2")


@dataclass
class RoundContext:
    """What the defender sees at decision time."""

    round: int
    belief: BeliefState
    candidates: frozenset[SecurityIntent]
    store: IntentStore
    observation: Observation


def _cleared(conditions: dict) -> bool:
    return not any(conditions[c] for c in ATTACK_CONDITIONS) and not conditions["objective"]


@dataclass
class EpisodeTrace:
    scenario: str
    planner: str
    seed: int
    discount: float
    initial_conditions: dict = field(default_factory=dict)
    records: list[dict] = field(default_factory=list)

    @property
    def rewards(self) -> list[float]:
        return [r["reward"] for r in self.records]

    def header(self) -> dict:
        return {
            "schema": TRACE_SCHEMA,
            "type": "header",
            "scenario": self.scenario,
            "planner": self.planner,
            "seed": self.seed,
            "discount": self.discount,
            "initial_conditions": self.initial_conditions,
        }

    def lines(self) -> list[str]:
        out = [self.header()] + [dict(r, schema=TRACE_SCHEMA, type="round") for r in self.records]
        out.append({"schema": TRACE_SCHEMA, "type": "metrics", **metrics(self)})
        return [json.dumps(o, sort_keys=True, separators=(",", ":")) for o in out]

    def to_jsonl(self) -> str:
        return "\n".join(self.lines()) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def from_jsonl(cls, text: str) -> "EpisodeTrace":
        trace = None
        for line in text.splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            if obj.get("schema") != TRACE_SCHEMA:
                raise ContractError(f"unsupported trace schema {obj.get('schema')!r}")
            kind = obj.pop("type")
            obj.pop("schema")
            if kind == "header":
                trace = cls(obj["scenario"], obj["planner"], obj["seed"], obj["discount"],
                            obj.get("initial_conditions", {}))
            elif kind == "round":
                if trace is None:
                    raise ContractError("trace record before header")
                trace.records.append(obj)
        if trace is None:
            raise ContractError("trace has no header")
        return trace

    @classmethod
    def read(cls, path: str | Path) -> "EpisodeTrace":
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"))


def metrics(trace: EpisodeTrace) -> dict:
    """Terminal summary of an episode.

    Success means the objective was never reached and every attack condition
    is clear at the end. Time to mitigation counts rounds until conditions
    cleared for good (0 when they were never active).
    """
    records = trace.records
    objective = any(r["conditions"]["objective"] for r in records)
    success = bool(records) and not objective and _cleared(records[-1]["conditions"])
    ttm = None
    if success:
        never_active = _cleared(trace.initial_conditions or records[0]["conditions_before"]) and all(
            _cleared(r["conditions_before"]) and _cleared(r["conditions"]) for r in records
        )
        if never_active:
            ttm = 0
        else:
            ttm = records[-1]["round"]
            for r in reversed(records):
                if not _cleared(r["conditions"]):
                    break
                ttm = r["round"]
    failures = sum(
        1 for r in records for s in r["enforcement"] + r["assurance"]["statuses"] + r["assurance"]["repairs"]
        if s["status"] == StatusKind.FAILED.value
    )
    drifts = sum(1 for r in records for s in r["assurance"]["statuses"] if s["status"] == StatusKind.DRIFTED.value)
    return {
        "mitigation_success": success,
        "time_to_mitigation": ttm,
        "total_return": discounted_return(trace.rewards, trace.discount),
        "enforcement_failures": failures,
        "drift_events": drifts,
        "rounds": len(records),
    }


class DefenseEnv:
    """Stateful environment implementing reset/step over a scenario."""

    def __init__(self, scenario: Scenario, *, record: bool = True):
        self.scenario = scenario
        self.model = build_pomdp(scenario)
        self.discount = scenario.discount
        self.record = record
        kb = scenario.kb
        self.property_categories = {
            name: prop.category.value for (name, side), prop in kb.properties.items() if side.value == "defensive"
        }
        self._candidate_cache: dict[tuple, frozenset[SecurityIntent]] = {}
        self.trace: EpisodeTrace | None = None

    # -- protocol ------------------------------------------------------------

    def reset(self, seed: int, planner_name: str = "") -> RoundContext:
        self.seed = seed
        self.rng = random.Random(seed)
        self.infra = self.scenario.initial_infrastructure()
        self.store = IntentStore(default_ttl=self.scenario.default_ttl)
        self.belief = self.model.belief()
        self.history: dict[SecurityIntent, StatusKind] = {}
        self.round = 0
        self.done = False
        self.last_action = (NoOp(), self.store)
        self.trace = EpisodeTrace(self.scenario.name, planner_name, seed, self.discount,
                                  dict(self.infra.conditions()))
        self._begin_round()
        return self.context

    def step(self, action: DefenderAction):
        if self.done:
            raise ContractError("episode already finished")
        legal = legal_actions(self.candidates, self.store)
        if action not in legal:
            raise ContractError(f"illegal action {action!r} for this round")
        if isinstance(action, ModifyPersistent) and action.old_intent.context != action.new_intent.context:
            raise ContractError("modify changed the intent context")
        infra, rng = self.infra, self.rng
        store_before = self.store
        self.store = apply_action(self.store, action)

        statuses, fresh = [], {}
        if not isinstance(action, NoOp):
            status, _ = execute_intent(action.intent, self.scenario.registry, infra, rng, in_place=True)
            statuses.append(status)
            if action.kind != "transient":
                fresh[action.intent] = status
        if isinstance(action, ModifyPersistent):
            self.history.pop(action.old_intent, None)
        report, _ = assure(self.store, infra, self.scenario.registry, rng, round_index=self.round,
                           history=self.history, fresh=fresh, in_place=True)
        flags = feedback(statuses + report.all_statuses())
        conditions = infra.conditions()
        reward = self.scenario.reward.reward(conditions, action, bool(flags))

        if self.record:
            self.trace.records.append({
                "round": self.round,
                "observation": self.observation.to_list(),
                "belief": self.belief.as_dict(),
                "candidates": [i.key for i in sorted(self.candidates)],
                "store_before": store_before.to_list(),
                "action": action.to_dict(),
                "enforcement": [s.to_dict() for s in statuses],
                "assurance": report.to_dict(),
                "feedback": sorted(i.key for i in flags),
                "reward": reward,
                "conditions_before": self.conditions_before,
                "conditions": conditions,
                "infrastructure": infra.summary(),
            })

        self.last_action = (action, store_before)
        self.store = self.store.decrement()
        finished = _cleared(conditions) and not has_reachable_phase(infra, self.scenario.attacker)
        if self.round >= self.scenario.horizon or finished:
            self.done = True
            return None, reward, True
        self._begin_round()
        return self.context, reward, False

    def outcome(self) -> tuple[bool, int | None]:
        m = metrics(self.trace) if self.record else {}
        return m.get("mitigation_success", False), m.get("time_to_mitigation")

    # -- internals -----------------------------------------------------------

    def _begin_round(self) -> None:
        self.round += 1
        self.infra.round = self.round
        self.store = self.store.purge()
        attacker_step(self.infra, self.scenario.attacker, self.rng, in_place=True)
        self.conditions_before = self.infra.conditions()
        self.observation = detector_emit(self.infra, self.scenario.detector, self.rng, self.conditions_before)
        symbol = observation_symbol(self.observation, self.scenario.detector)
        try:
            self.belief = belief_update(self.belief, self.last_action, symbol, self.model)
        except ImpossibleObservationError:
            # The abstraction ruled this out; keep the prediction.
            self.belief = predict(self.belief, self.last_action, self.model)
        self.candidates = self._derive(self.observation)
        self.context = RoundContext(self.round, self.belief, self.candidates, self.store, self.observation)

    def _derive(self, observation: Observation) -> frozenset[SecurityIntent]:
        varying = {"id", "timestamp"}
        key = tuple(
            (a.technique_id, tuple(kv for kv in a.metadata if kv[0] not in varying)) for a in observation.alerts
        )
        cached = self._candidate_cache.get(key)
        if cached is None:
            cached = derive_candidates(observation, self.scenario.kb, self.scenario.mapper_rules,
                                       self.scenario.exclusion_list)
            self._candidate_cache[key] = cached
        return cached


def run_episode(scenario: Scenario, planner: Planner, seed: int) -> EpisodeTrace:
    """Run one episode to the horizon or early termination."""
    env = DefenseEnv(scenario)
    planner.reset(seed)
    ctx = env.reset(seed, getattr(planner, "name", type(planner).__name__))
    done = False
    while not done:
        action = planner.choose(ctx.belief, ctx.candidates, ctx.store)
        ctx, _, done = env.step(action)
    return env.trace


def run_episodes(scenario: Scenario, planner: Planner, seeds: Iterable[int]) -> list[EpisodeTrace]:
    return [run_episode(scenario, planner, s) for s in seeds]

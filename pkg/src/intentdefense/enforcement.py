"""Intent enforcement: security-function registry, translation, enforcement, assurance.

Security functions (SFs) advertise which defensive techniques they realize
and the parameters each needs. The controller translates an intent into a
plan for the cheapest capable SF, applies the plan to the simulated
infrastructure, and the analyzer re-checks persistent intents every round,
repairing any that drifted.

Effect table (parameters in brackets; "holds" is the assurance check):

==========================  ======================  ===================================================
technique                   parameters              effect / holds
==========================  ======================  ===================================================
NetworkTrafficFiltering     dest_host               add block rule, drop matching connections / rule present
DNSDenylisting              query_name              add denylist entry / entry present
FileEviction                host, path              remove file / file absent
RestoreFile                 host, path              restore known-good file / file present and unmodified
ProcessTermination          host, process           kill named processes / none running
SystemCallFiltering         host, syscall           install filter, kill users of the call / filter present
HostReboot                  host                    kill every process on host (one-shot) / reboot recorded
AccountDisabling            account                 disable account / account disabled
==========================  ======================  ===================================================

Reboots do not remove scheduled jobs, so job-backed processes come back at
the next attacker step.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping

from .errors import ContractError, EnforcementError, MissingParameter, NoCapableSF
from .intent import SecurityIntent
from .simulation.infrastructure import InfrastructureState


class SFKind(str, Enum):
    NSF = "NSF"
    ESF = "ESF"


@dataclass(frozen=True)
class FailureRule:
    """Forces failure when ``when`` holds for the plan's target host."""

    when: str
    reason: str


@dataclass(frozen=True)
class SecurityFunction:
    id: str
    kind: SFKind
    capabilities: Mapping[str, tuple[str, ...]]
    reliability: float = 1.0
    cost: float = 1.0
    failure_rules: tuple[FailureRule, ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.reliability <= 1.0:
            raise ContractError(f"SF {self.id}: reliability {self.reliability} outside [0, 1]")

    def __hash__(self):
        return hash(self.id)

    @classmethod
    def from_dict(cls, d: Mapping) -> "SecurityFunction":
        return cls(
            id=d["id"],
            kind=SFKind(d["kind"]),
            capabilities={k: tuple(v) for k, v in d["capabilities"].items()},
            reliability=float(d.get("reliability", 1.0)),
            cost=float(d.get("cost", 1.0)),
            failure_rules=tuple(FailureRule(r["when"], r["reason"]) for r in d.get("failure_rules", [])),
        )


@dataclass(frozen=True)
class SFRegistry:
    functions: Mapping[str, SecurityFunction] = field(default_factory=dict)
    by_capability: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def capable(self, technique_id: str) -> list[SecurityFunction]:
        """SFs advertising ``technique_id``, cheapest first (ties by id)."""
        sfs = [self.functions[i] for i in self.by_capability.get(technique_id, ())]
        return sorted(sfs, key=lambda sf: (sf.cost, sf.id))


def register_sf(registry: SFRegistry, sf: SecurityFunction) -> SFRegistry:
    if sf.id in registry.functions:
        raise ContractError(f"security function {sf.id!r} already registered")
    functions = dict(registry.functions)
    functions[sf.id] = sf
    index = {k: list(v) for k, v in registry.by_capability.items()}
    for technique in sf.capabilities:
        index.setdefault(technique, []).append(sf.id)
    return SFRegistry(functions, {k: tuple(sorted(v)) for k, v in index.items()})


def build_registry(sfs: Iterable[SecurityFunction]) -> SFRegistry:
    registry = SFRegistry()
    for sf in sfs:
        registry = register_sf(registry, sf)
    return registry


@dataclass(frozen=True)
class EnforcementPlan:
    intent: SecurityIntent
    sf: SecurityFunction
    parameters: tuple[tuple[str, str], ...]

    @property
    def sf_id(self) -> str:
        return self.sf.id

    @property
    def params(self) -> dict[str, str]:
        return dict(self.parameters)

    def to_dict(self) -> dict:
        return {"intent": self.intent.to_dict(), "sf_id": self.sf.id, "parameters": self.params}


def translate_intent(intent: SecurityIntent, registry: SFRegistry) -> EnforcementPlan:
    """Bind the cheapest capable SF whose parameters the intent can supply.

    Values come from the target's attributes, falling back to the alert
    metadata.
    """
    capable = registry.capable(intent.dt)
    if not capable:
        raise NoCapableSF(f"no security function advertises {intent.dt}")
    values = {**intent.md.as_dict(), **intent.target.attrs}
    missing_first = None
    for sf in capable:
        needed = sf.capabilities[intent.dt]
        missing = [p for p in needed if not values.get(p)]
        if not missing:
            params = tuple(sorted((p, values[p]) for p in needed))
            return EnforcementPlan(intent, sf, params)
        if missing_first is None:
            missing_first = (sf.id, missing)
    sf_id, missing = missing_first
    raise MissingParameter(f"{sf_id} needs {', '.join(missing)} for {intent.dt}")


# -- effect table --------------------------------------------------------------


def _ntf_apply(infra: InfrastructureState, p: dict, key: str) -> None:
    infra.network_policies.add(p["dest_host"])
    infra.enforce_block_rules()


def _dns_apply(infra, p, key):
    infra.dns_denylist.add(p["query_name"])


def _evict_apply(infra, p, key):
    f = infra.file(p["host"], p["path"])
    if f is not None:
        f.present = False


def _evict_holds(infra, p, key):
    return not infra.file_present(p["host"], p["path"])


def _restore_apply(infra, p, key):
    f = infra.file(p["host"], p["path"])
    if f is None:
        return
    f.present, f.modified, f.owner = True, False, "root"


def _restore_holds(infra, p, key):
    f = infra.file(p["host"], p["path"])
    return f is None or (f.present and not f.modified)


def _terminate_apply(infra, p, key):
    infra.kill(infra.processes_named(p["host"], p["process"]))


def _terminate_holds(infra, p, key):
    return not infra.processes_named(p["host"], p["process"])


def _scf_apply(infra, p, key):
    infra.syscall_filters.add((p["host"], p["syscall"]))
    infra.kill([proc for proc in infra.processes if infra.syscall_blocked(proc)])


def _reboot_apply(infra, p, key):
    host = p["host"]
    infra.kill([proc for proc in infra.processes if proc.host == host])
    for c in infra.connections:
        if c.src_host == host:
            c.active = False
    if host in infra.hosts:
        infra.hosts[host].reboots += 1
    infra.oneshot_effects.add(key)


def _disable_apply(infra, p, key):
    infra.disabled_accounts.add(p["account"])


@dataclass(frozen=True)
class Effect:
    parameters: tuple[str, ...]
    apply: Callable[[InfrastructureState, dict, str], None]
    holds: Callable[[InfrastructureState, dict, str], bool]


EFFECTS: dict[str, Effect] = {
    "NetworkTrafficFiltering": Effect(
        ("dest_host",), _ntf_apply, lambda i, p, k: p["dest_host"] in i.network_policies),
    "DNSDenylisting": Effect(
        ("query_name",), _dns_apply, lambda i, p, k: p["query_name"] in i.dns_denylist),
    "FileEviction": Effect(("host", "path"), _evict_apply, _evict_holds),
    "RestoreFile": Effect(("host", "path"), _restore_apply, _restore_holds),
    "ProcessTermination": Effect(("host", "process"), _terminate_apply, _terminate_holds),
    "SystemCallFiltering": Effect(
        ("host", "syscall"), _scf_apply, lambda i, p, k: (p["host"], p["syscall"]) in i.syscall_filters),
    "HostReboot": Effect(("host",), _reboot_apply, lambda i, p, k: k in i.oneshot_effects),
    "AccountDisabling": Effect(
        ("account",), _disable_apply, lambda i, p, k: p["account"] in i.disabled_accounts),
}


def _effect(plan: EnforcementPlan) -> Effect:
    try:
        effect = EFFECTS[plan.intent.dt]
    except KeyError:
        raise ContractError(f"no infrastructure effect defined for {plan.intent.dt}") from None
    missing = [p for p in effect.parameters if p not in plan.params]
    if missing:
        raise ContractError(f"plan for {plan.intent.dt} lacks parameters {missing}")
    return effect


def _plan_key(plan: EnforcementPlan) -> str:
    return plan.intent.dt + "|" + ",".join(f"{k}={v}" for k, v in plan.parameters)


def effect_holds(plan: EnforcementPlan, infra: InfrastructureState) -> bool:
    return _effect(plan).holds(infra, plan.params, _plan_key(plan))


# -- statuses ------------------------------------------------------------------


class StatusKind(str, Enum):
    ENFORCED = "enforced"
    FAILED = "failed"
    DRIFTED = "drifted"


@dataclass(frozen=True)
class EnforcementStatus:
    kind: StatusKind
    intent: SecurityIntent
    reason: str | None = None
    detected_round: int | None = None

    @classmethod
    def enforced(cls, intent):
        return cls(StatusKind.ENFORCED, intent)

    @classmethod
    def failed(cls, intent, reason):
        return cls(StatusKind.FAILED, intent, reason=reason)

    @classmethod
    def drifted(cls, intent, round_index):
        return cls(StatusKind.DRIFTED, intent, detected_round=round_index)

    def to_dict(self) -> dict:
        d = {"status": self.kind.value, "intent": self.intent.key}
        if self.reason is not None:
            d["reason"] = self.reason
        if self.detected_round is not None:
            d["detected_round"] = self.detected_round
        return d


def _failure_reason(plan: EnforcementPlan, infra: InfrastructureState) -> str | None:
    host = infra.hosts.get(plan.params.get("host", ""))
    for rule in plan.sf.failure_rules:
        if rule.when == "always":
            return rule.reason
        if rule.when == "attacker_privileged" and host is not None and host.attacker_privileged:
            return rule.reason
    return None


def enforce(
    plan: EnforcementPlan, infrastructure: InfrastructureState, rng: random.Random, *, in_place: bool = False
) -> tuple[EnforcementStatus, InfrastructureState]:
    """Apply a plan. Failures leave the infrastructure untouched.

    An already-satisfied plan reports Enforced without drawing randomness.
    """
    effect = _effect(plan)
    params, key = plan.params, _plan_key(plan)
    if effect.holds(infrastructure, params, key):
        return EnforcementStatus.enforced(plan.intent), infrastructure
    reason = _failure_reason(plan, infrastructure)
    if reason is not None:
        return EnforcementStatus.failed(plan.intent, reason), infrastructure
    if rng.random() >= plan.sf.reliability:
        return EnforcementStatus.failed(plan.intent, "unreliable"), infrastructure
    target = infrastructure if in_place else infrastructure.copy()
    effect.apply(target, params, key)
    return EnforcementStatus.enforced(plan.intent), target


def execute_intent(
    intent: SecurityIntent,
    registry: SFRegistry,
    infrastructure: InfrastructureState,
    rng: random.Random,
    *,
    in_place: bool = False,
) -> tuple[EnforcementStatus, InfrastructureState]:
    """Translate then enforce; translation errors become Failed statuses."""
    try:
        plan = translate_intent(intent, registry)
    except EnforcementError as exc:
        return EnforcementStatus.failed(intent, exc.reason), infrastructure
    return enforce(plan, infrastructure, rng, in_place=in_place)


@dataclass
class AssuranceReport:
    round: int
    statuses: list[EnforcementStatus] = field(default_factory=list)
    repairs: list[EnforcementStatus] = field(default_factory=list)

    def all_statuses(self) -> list[EnforcementStatus]:
        """Statuses in chronological order: checks first, then repair outcomes."""
        return self.statuses + self.repairs

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "statuses": [s.to_dict() for s in self.statuses],
            "repairs": [s.to_dict() for s in self.repairs],
        }


def assure(
    store,
    infrastructure: InfrastructureState,
    registry: SFRegistry,
    rng: random.Random,
    *,
    round_index: int = 0,
    history: dict[SecurityIntent, StatusKind] | None = None,
    fresh: Mapping[SecurityIntent, EnforcementStatus] | None = None,
    in_place: bool = False,
) -> tuple[AssuranceReport, InfrastructureState]:
    """Check every persistent intent once and repair drift in the same pass.

    ``history`` holds each intent's last outcome; an intent counts as drifted
    only if it was previously enforced. Intents in ``fresh`` were enforced
    earlier this round and are reported with that status unchanged.
    ``history`` is updated in place.
    """
    history = {} if history is None else history
    fresh = fresh or {}
    infra = infrastructure if in_place else infrastructure.copy()
    report = AssuranceReport(round_index)
    for intent in store.intents:
        if intent in fresh:
            status = fresh[intent]
            report.statuses.append(status)
            history[intent] = status.kind
            continue
        try:
            plan = translate_intent(intent, registry)
        except EnforcementError as exc:
            status = EnforcementStatus.failed(intent, exc.reason)
            report.statuses.append(status)
            history[intent] = status.kind
            continue
        if effect_holds(plan, infra):
            report.statuses.append(EnforcementStatus.enforced(intent))
            history[intent] = StatusKind.ENFORCED
            continue
        if history.get(intent) == StatusKind.ENFORCED:
            report.statuses.append(EnforcementStatus.drifted(intent, round_index))
            status, infra = enforce(plan, infra, rng, in_place=True)
            report.repairs.append(status)
        else:
            # Never took effect: retry as a plain enforcement.
            status, infra = enforce(plan, infra, rng, in_place=True)
            report.statuses.append(status)
        history[intent] = status.kind
    return report, infra


def feedback(statuses: Iterable[EnforcementStatus]) -> set[SecurityIntent]:
    """Intents whose latest status is a failure (misimplemented)."""
    latest: dict[SecurityIntent, EnforcementStatus] = {}
    for status in statuses:
        latest[status.intent] = status
    return {intent for intent, s in latest.items() if s.kind is StatusKind.FAILED}

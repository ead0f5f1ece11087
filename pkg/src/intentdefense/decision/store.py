"""Persistent intent store and the defender's action space."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Union

from ..errors import ContractError, NotFoundError
from ..intent import SecurityIntent

DEFAULT_TTL = 10


@dataclass(frozen=True)
class NoOp:
    kind = "noop"

    def to_dict(self) -> dict:
        return {"type": self.kind}


@dataclass(frozen=True)
class ExecuteTransient:
    intent: SecurityIntent
    kind = "transient"

    def to_dict(self) -> dict:
        return {"type": self.kind, "intent": self.intent.to_dict()}


@dataclass(frozen=True)
class InsertPersistent:
    intent: SecurityIntent
    kind = "insert"

    def to_dict(self) -> dict:
        return {"type": self.kind, "intent": self.intent.to_dict()}


@dataclass(frozen=True)
class ModifyPersistent:
    old_intent: SecurityIntent
    new_intent: SecurityIntent
    kind = "modify"

    @property
    def intent(self) -> SecurityIntent:
        return self.new_intent

    def to_dict(self) -> dict:
        return {"type": self.kind, "old": self.old_intent.to_dict(), "new": self.new_intent.to_dict()}


DefenderAction = Union[NoOp, ExecuteTransient, InsertPersistent, ModifyPersistent]

_RANK = {"noop": 0, "transient": 1, "insert": 2, "modify": 3}


def action_sort_key(action: DefenderAction) -> tuple:
    """Total order used for tie-breaking: NoOp < transient < insert < modify, then intent keys."""
    if isinstance(action, ModifyPersistent):
        return (_RANK[action.kind], action.old_intent.key, action.new_intent.key)
    if isinstance(action, NoOp):
        return (0,)
    return (_RANK[action.kind], action.intent.key)


def action_from_dict(d: dict) -> DefenderAction:
    kind = d["type"]
    if kind == "noop":
        return NoOp()
    if kind == "modify":
        return ModifyPersistent(SecurityIntent.from_dict(d["old"]), SecurityIntent.from_dict(d["new"]))
    cls = {"transient": ExecuteTransient, "insert": InsertPersistent}[kind]
    return cls(SecurityIntent.from_dict(d["intent"]))


@dataclass(frozen=True)
class IntentStore:
    """Active persistent intents with their remaining time to live."""

    entries: tuple[tuple[SecurityIntent, int], ...] = ()
    default_ttl: int = DEFAULT_TTL

    def __post_init__(self):
        if self.default_ttl < 1:
            raise ContractError("default_ttl must be >= 1")

    def __contains__(self, intent: SecurityIntent) -> bool:
        return any(i == intent for i, _ in self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def intents(self) -> list[SecurityIntent]:
        return [i for i, _ in self.entries]

    def ttl(self, intent: SecurityIntent) -> int:
        for i, ttl in self.entries:
            if i == intent:
                return ttl
        raise NotFoundError(f"intent not in store: {intent.key}")

    def purge(self) -> "IntentStore":
        """Round start: drop entries whose TTL reached 0."""
        return IntentStore(tuple(e for e in self.entries if e[1] > 0), self.default_ttl)

    def decrement(self) -> "IntentStore":
        """Round end: every TTL loses one."""
        return IntentStore(tuple((i, ttl - 1) for i, ttl in self.entries), self.default_ttl)

    def to_list(self) -> list[dict]:
        return [{"intent": i.to_dict(), "ttl": ttl} for i, ttl in self.entries]


def tick_intent_store(store: IntentStore) -> IntentStore:
    """End one round and start the next: decrement, then purge expired entries."""
    return store.decrement().purge()


def _check_context(old: SecurityIntent, new: SecurityIntent) -> None:
    if new.context != old.context:
        raise ContractError(
            "modify must preserve the offensive context (technique and metadata): "
            f"{old.key} -> {new.key}"
        )


def apply_action(store: IntentStore, action: DefenderAction) -> IntentStore:
    if isinstance(action, InsertPersistent):
        kept = tuple(e for e in store.entries if e[0] != action.intent)
        return IntentStore(kept + ((action.intent, store.default_ttl),), store.default_ttl)
    if isinstance(action, ModifyPersistent):
        if action.old_intent not in store:
            raise NotFoundError(f"intent to modify is not in the store: {action.old_intent.key}")
        _check_context(action.old_intent, action.new_intent)
        kept = tuple(e for e in store.entries if e[0] not in (action.old_intent, action.new_intent))
        return IntentStore(kept + ((action.new_intent, store.default_ttl),), store.default_ttl)
    if isinstance(action, (ExecuteTransient, NoOp)):
        return store
    raise ContractError(f"not a defender action: {action!r}")


def legal_actions(candidates: Iterable[SecurityIntent], store: IntentStore) -> list[DefenderAction]:
    """All legal actions, sorted by the tie-break order."""
    candidates = set(candidates)
    actions: list[DefenderAction] = [NoOp()]
    for intent in candidates:
        actions.append(InsertPersistent(intent))
        actions.append(ExecuteTransient(intent))
    for old in store.intents:
        for new in candidates:
            if new.context == old.context and (new.target, new.dt) != (old.target, old.dt):
                actions.append(ModifyPersistent(old, new))
    return sorted(actions, key=action_sort_key)

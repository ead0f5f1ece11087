"""Tabular Q-learning over a discretized belief and a store summary.

Environments follow a small protocol:

``reset(seed) -> ctx`` and ``step(action) -> (ctx, reward, done)``, where a
context exposes ``belief``, ``candidates`` and ``store``; ``outcome()``
returns ``(mitigated, time_to_mitigation)`` for the finished episode; the
attribute ``discount`` is the return discount; ``property_categories`` maps
defensive property names to category labels (optional).
"""

from __future__ import annotations

import bisect
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from ..errors import ContractError
from .pomdp import BeliefState, discounted_return
from .planners import Planner
from .store import (
    DefenderAction,
    IntentStore,
    ModifyPersistent,
    NoOp,
    action_sort_key,
    legal_actions,
)

POLICY_FORMAT = "intentdefense.policy"
POLICY_VERSION = 1


class Environment(Protocol):
    discount: float

    def reset(self, seed: int): ...

    def step(self, action: DefenderAction): ...

    def outcome(self) -> tuple[bool, int | None]: ...


@dataclass
class QHyperParams:
    alpha: float = 0.1
    gamma: float | None = None  # None: use the environment's discount
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_fraction: float = 0.7
    grid: tuple[float, ...] = (0.2, 0.4, 0.6, 0.8)
    store_cap: int = 2
    max_entries: int = 100_000
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ContractError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not self.grid:
            raise ContractError("belief discretization grid is empty")
        if list(self.grid) != sorted(self.grid) or not all(0.0 < g < 1.0 for g in self.grid):
            raise ContractError("grid edges must be increasing and inside (0, 1)")
        if self.gamma is not None and not 0.0 <= self.gamma <= 1.0:
            raise ContractError("gamma outside [0, 1]")
        if not (0.0 <= self.epsilon_end <= 1.0 and 0.0 <= self.epsilon_start <= 1.0):
            raise ContractError("epsilon outside [0, 1]")

    @classmethod
    def from_dict(cls, d: dict) -> "QHyperParams":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        if "grid" in known:
            known["grid"] = tuple(known["grid"])
        return cls(**known)

    def epsilon(self, episode: int, episodes: int) -> float:
        horizon = max(1, int(episodes * self.epsilon_decay_fraction))
        frac = min(1.0, episode / horizon)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)


def action_template(action: DefenderAction) -> tuple[str, ...]:
    """Abstract an action to (type, defensive technique[s])."""
    if isinstance(action, NoOp):
        return ("noop",)
    if isinstance(action, ModifyPersistent):
        return ("modify", action.old_intent.dt, action.new_intent.dt)
    return (action.kind, action.intent.dt)


@dataclass
class TabularQPolicy(Planner):
    """Greedy policy over a Q-table; unseen entries default to 0."""

    grid: tuple[float, ...] = (0.2, 0.4, 0.6, 0.8)
    store_cap: int = 2
    categories: dict[str, str] = field(default_factory=dict)
    q: dict[tuple, float] = field(default_factory=dict)
    max_entries: int = 100_000

    name = "q"

    def state_key(self, belief: BeliefState, store: IntentStore) -> tuple:
        buckets = tuple(bisect.bisect_right(self.grid, float(p)) for p in belief.probabilities)
        counts: dict[str, int] = {}
        for intent in store.intents:
            cat = self.categories.get(intent.def_property, "other")
            counts[cat] = min(self.store_cap, counts.get(cat, 0) + 1)
        return (buckets, tuple(sorted(counts.items())))

    def value(self, state: tuple, template: tuple) -> float:
        return self.q.get((state, template), 0.0)

    def best(self, state: tuple, actions: Sequence[DefenderAction]) -> DefenderAction:
        """Highest-valued template; ties resolved by the action order."""
        best, best_value = None, -math.inf
        seen = set()
        for action in actions:
            tpl = action_template(action)
            if tpl in seen:
                continue
            seen.add(tpl)
            v = self.value(state, tpl)
            if v > best_value:
                best, best_value = action, v
        return best

    def max_value(self, state: tuple, actions: Iterable[DefenderAction]) -> float:
        return max(self.value(state, action_template(a)) for a in actions)

    def update(self, state: tuple, template: tuple, target: float, alpha: float) -> None:
        key = (state, template)
        if key not in self.q and len(self.q) >= self.max_entries:
            return
        old = self.q.get(key, 0.0)
        self.q[key] = old + alpha * (target - old)

    def choose(self, belief, candidates, store):
        actions = legal_actions(candidates, store)
        return self.best(self.state_key(belief, store), actions)

    # -- persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        entries = [
            {"belief": list(s[0]), "store": [list(kv) for kv in s[1]], "action": list(t), "q": v}
            for (s, t), v in self.q.items()
        ]
        entries.sort(key=lambda e: (e["belief"], e["store"], e["action"]))
        return {
            "format": POLICY_FORMAT,
            "version": POLICY_VERSION,
            "grid": list(self.grid),
            "store_cap": self.store_cap,
            "categories": dict(sorted(self.categories.items())),
            "entries": entries,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TabularQPolicy":
        if d.get("format") != POLICY_FORMAT or d.get("version") != POLICY_VERSION:
            raise ContractError("not a supported policy file")
        q = {}
        for e in d["entries"]:
            state = (tuple(e["belief"]), tuple((k, n) for k, n in e["store"]))
            q[(state, tuple(e["action"]))] = float(e["q"])
        return cls(tuple(d["grid"]), int(d["store_cap"]), dict(d["categories"]), q)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "TabularQPolicy":
        return cls.from_dict(json.loads(Path(path).read_text()))


def q_learning_train(env: Environment, episodes: int, hyper: QHyperParams | None = None) -> TabularQPolicy:
    """Epsilon-greedy tabular Q-learning; reproducible for a given seed."""
    hyper = hyper or QHyperParams()
    hyper.validate()
    if episodes < 0:
        raise ContractError("episodes must be >= 0")
    gamma = env.discount if hyper.gamma is None else hyper.gamma
    policy = TabularQPolicy(
        grid=tuple(hyper.grid),
        store_cap=hyper.store_cap,
        categories=dict(getattr(env, "property_categories", {})),
        max_entries=hyper.max_entries,
    )
    rng = random.Random(hyper.seed)
    for episode in range(episodes):
        eps = hyper.epsilon(episode, episodes)
        ctx = env.reset(rng.randrange(2**31))
        done = False
        while not done:
            actions = legal_actions(ctx.candidates, ctx.store)
            state = policy.state_key(ctx.belief, ctx.store)
            if rng.random() < eps:
                templates = sorted({action_template(a): a for a in actions}.items())
                action = rng.choice(templates)[1]
            else:
                action = policy.best(state, actions)
            nxt, reward, done = env.step(action)
            target = reward
            if not done:
                nxt_actions = legal_actions(nxt.candidates, nxt.store)
                target += gamma * policy.max_value(policy.state_key(nxt.belief, nxt.store), nxt_actions)
            policy.update(state, action_template(action), target, hyper.alpha)
            ctx = nxt
    return policy


@dataclass
class EvaluationMetrics:
    mean_return: float
    mitigation_rate: float
    mean_time_to_mitigation: float | None
    returns: list[float]

    def to_dict(self) -> dict:
        return {
            "mean_return": self.mean_return,
            "mitigation_rate": self.mitigation_rate,
            "mean_time_to_mitigation": self.mean_time_to_mitigation,
            "episodes": len(self.returns),
        }


def evaluate_policy(policy: Planner, env: Environment, n_episodes: int, seed: int = 0) -> EvaluationMetrics:
    """Run ``n_episodes`` greedy episodes; deterministic given ``seed``."""
    if n_episodes < 1:
        raise ContractError("n_episodes must be >= 1")
    rng = random.Random(seed)
    returns, mitigated, times = [], 0, []
    for _ in range(n_episodes):
        ep_seed = rng.randrange(2**31)
        policy.reset(ep_seed)
        ctx = env.reset(ep_seed)
        rewards = []
        done = False
        while not done:
            action = policy.choose(ctx.belief, ctx.candidates, ctx.store)
            ctx, reward, done = env.step(action)
            rewards.append(reward)
        returns.append(discounted_return(rewards, env.discount))
        ok, ttm = env.outcome()
        if ok:
            mitigated += 1
            if ttm is not None:
                times.append(ttm)
    return EvaluationMetrics(
        mean_return=sum(returns) / n_episodes,
        mitigation_rate=mitigated / n_episodes,
        mean_time_to_mitigation=(sum(times) / len(times)) if times else None,
        returns=returns,
    )

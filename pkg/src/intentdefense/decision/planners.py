"""Defender strategies mapping (belief, candidates, store) to an action."""

from __future__ import annotations

import random
from typing import Iterable, Sequence

from ..intent import SecurityIntent
from .pomdp import BeliefState, PomdpModel, expected_reward
from .store import (
    DefenderAction,
    InsertPersistent,
    IntentStore,
    NoOp,
    legal_actions,
)


class Planner:
    """Strategy interface. ``choose`` must return one of ``legal_actions``."""

    name = "planner"

    def reset(self, seed: int | None = None) -> None:
        pass

    def choose(
        self, belief: BeliefState, candidates: Iterable[SecurityIntent], store: IntentStore
    ) -> DefenderAction:
        raise NotImplementedError


def greedy_plan(
    belief: BeliefState,
    candidates: Iterable[SecurityIntent],
    store: IntentStore,
    model: PomdpModel,
) -> DefenderAction:
    """One-step lookahead: the legal action with the highest expected reward.

    Ties go to the earliest action in the tie-break order, so NoOp wins
    whenever nothing beats it.
    """
    best, best_value = None, float("-inf")
    for action in legal_actions(candidates, store):
        value = expected_reward(belief, (action, store), model)
        if value > best_value:
            best, best_value = action, value
    return best


class GreedyPlanner(Planner):
    name = "greedy"

    def __init__(self, model: PomdpModel):
        self.model = model

    def choose(self, belief, candidates, store):
        return greedy_plan(belief, candidates, store, self.model)


class RandomPlanner(Planner):
    """Uniform over legal actions."""

    name = "random"

    def __init__(self, seed: int = 0):
        self.rng = random.Random(seed)

    def reset(self, seed=None):
        if seed is not None:
            self.rng = random.Random(seed)

    def choose(self, belief, candidates, store):
        return self.rng.choice(legal_actions(candidates, store))


class NoOpPlanner(Planner):
    name = "noop"

    def choose(self, belief, candidates, store):
        return NoOp()


class OraclePlanner(Planner):
    """Scripted policy: insert the preferred intents in order, once each.

    ``preferences`` lists (defensive technique, artifact class) pairs. Each
    round the first candidate matching a preference and not already stored
    is inserted as persistent; otherwise no action.
    """

    name = "oracle"

    def __init__(self, preferences: Sequence[tuple[str, str]]):
        self.preferences = [tuple(p) for p in preferences]

    def choose(self, belief, candidates, store):
        pool = sorted(candidates)
        for dt, artifact in self.preferences:
            for intent in pool:
                if intent.dt == dt and intent.target.artifact_class == artifact and intent not in store:
                    return InsertPersistent(intent)
        return NoOp()

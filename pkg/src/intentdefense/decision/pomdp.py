"""Tabular POMDP model, exact belief filter and reward helpers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Mapping, Sequence

import numpy as np

from ..errors import ContractError, ImpossibleObservationError

TOL = 1e-9
NORMALIZER_FLOOR = 1e-15


@dataclass(frozen=True)
class BeliefState:
    probabilities: np.ndarray
    states: tuple[str, ...] = ()

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.ndim != 1 or (p < 0).any() or abs(p.sum() - 1.0) > TOL:
            raise ContractError(f"belief must be a probability vector, got {p}")
        object.__setattr__(self, "probabilities", p)

    def as_dict(self) -> dict[str, float]:
        names = self.states or tuple(str(i) for i in range(len(self.probabilities)))
        return {s: float(p) for s, p in zip(names, self.probabilities)}

    def __eq__(self, other):
        return (isinstance(other, BeliefState) and self.states == other.states
                and np.array_equal(self.probabilities, other.probabilities))

    def __hash__(self):
        return hash((self.states, self.probabilities.tobytes()))


TransitionSource = Mapping[Hashable, np.ndarray] | Callable[[Any], np.ndarray]
RewardSource = Mapping[Hashable, np.ndarray] | Callable[[int, Any], float]


@dataclass
class PomdpModel:
    """Finite POMDP with action-indexed tables or callables.

    ``transition(a)`` yields an (S, S) matrix with rows indexed by the
    current state; ``obs_fn`` is an (S, O) matrix; ``reward`` maps an action
    to a length-S vector or is a callable ``r(state_index, action)``.
    ``intent_observer`` is the candidate-intent function paired with the model.

    In the intent-extended model the store is part of the state, so planners
    pass ``(DefenderAction, IntentStore)`` pairs wherever an action is
    expected; ``action_key`` reduces them to a cache key.
    """

    states: tuple[str, ...]
    observations: tuple[Hashable, ...]
    transition: TransitionSource
    reward: RewardSource
    obs_fn: np.ndarray
    discount: float
    initial_belief: np.ndarray
    intent_observer: Callable | None = None
    action_key: Callable[[Any], Hashable] = field(default=lambda a: a)

    def __post_init__(self):
        self.obs_fn = np.asarray(self.obs_fn, dtype=float)
        self.initial_belief = np.asarray(self.initial_belief, dtype=float)
        self._obs_index = {o: i for i, o in enumerate(self.observations)}
        self._t_cache: dict[Hashable, np.ndarray] = {}

    @property
    def n_states(self) -> int:
        return len(self.states)

    def transition_matrix(self, action) -> np.ndarray:
        key = self.action_key(action)
        cached = self._t_cache.get(key)
        if cached is not None:
            return cached
        if callable(self.transition):
            t = self.transition(action)
        else:
            t = self.transition[key]
        t = np.asarray(t, dtype=float)
        self._t_cache[key] = t
        return t

    def reward_vector(self, action) -> np.ndarray:
        if callable(self.reward):
            return np.array([self.reward(s, action) for s in range(self.n_states)], dtype=float)
        return np.asarray(self.reward[self.action_key(action)], dtype=float)

    def observation_index(self, observation) -> int:
        try:
            return self._obs_index[observation]
        except KeyError:
            raise ContractError(f"observation {observation!r} is not in the model") from None

    def belief(self, probabilities=None) -> BeliefState:
        p = self.initial_belief if probabilities is None else probabilities
        return BeliefState(np.asarray(p, dtype=float), tuple(self.states))

    def validate(self, actions: Sequence = ()) -> None:
        """Raise ContractError unless all tables are stochastic."""
        n = self.n_states
        if not 0.0 <= self.discount <= 1.0:
            raise ContractError(f"discount {self.discount} outside [0, 1]")
        if self.initial_belief.shape != (n,) or abs(self.initial_belief.sum() - 1) > TOL:
            raise ContractError("initial belief must sum to 1")
        if self.obs_fn.shape != (n, len(self.observations)):
            raise ContractError("observation table has the wrong shape")
        if (self.obs_fn < 0).any() or np.abs(self.obs_fn.sum(axis=1) - 1).max() > TOL:
            raise ContractError("observation rows must sum to 1")
        keys = actions or ([] if callable(self.transition) else list(self.transition))
        for a in keys:
            t = self.transition_matrix(a)
            if t.shape != (n, n) or (t < 0).any() or np.abs(t.sum(axis=1) - 1).max() > TOL:
                raise ContractError(f"transition rows for action {a!r} must sum to 1")


def belief_update(belief: BeliefState, action, observation, model: PomdpModel) -> BeliefState:
    """Bayes filter: predict through the transition, weight by the observation likelihood."""
    t = model.transition_matrix(action)
    predicted = belief.probabilities @ t
    weighted = model.obs_fn[:, model.observation_index(observation)] * predicted
    norm = weighted.sum()
    if norm < NORMALIZER_FLOOR:
        raise ImpossibleObservationError(
            f"observation {observation!r} has zero probability under the current belief"
        )
    return BeliefState(weighted / norm, belief.states)


def predict(belief: BeliefState, action, model: PomdpModel) -> BeliefState:
    p = belief.probabilities @ model.transition_matrix(action)
    return BeliefState(p / p.sum(), belief.states)


def expected_reward(belief: BeliefState, action, model: PomdpModel) -> float:
    return float(belief.probabilities @ model.reward_vector(action))


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    if not 0.0 <= gamma <= 1.0:
        raise ContractError(f"discount {gamma} outside [0, 1]")
    total, weight = 0.0, 1.0
    for r in rewards:
        total += weight * r
        weight *= gamma
    return total

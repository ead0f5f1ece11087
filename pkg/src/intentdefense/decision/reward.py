"""Reward structure: per-goal risk weights against operational cost."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

from ..errors import ContractError
from .store import DefenderAction

GOALS = ("availability", "confidentiality", "integrity")

DEFAULT_RISK = {
    "persistence": ("integrity",),
    "execution": ("integrity",),
    "c2": ("confidentiality",),
    "objective": ("availability", "confidentiality"),
}


@dataclass(frozen=True)
class RewardSpec:
    """``r = -sum_g w_g * risk_g - cost(action) + penalty * [any misimplemented intent]``.

    ``risk`` maps an attack condition to the goals it puts at risk; a goal is
    at risk while any of its conditions holds. A clean round scores 0, so an
    episode that stops early once the attack is over loses nothing.
    """

    weights: Mapping[str, float] = field(default_factory=lambda: {g: 1.0 for g in GOALS})
    costs: Mapping[str, float] = field(
        default_factory=lambda: {"noop": 0.0, "transient": 0.5, "insert": 1.0, "modify": 1.0}
    )
    misimplementation_penalty: float = -1.0
    risk: Mapping[str, tuple[str, ...]] = field(default_factory=lambda: dict(DEFAULT_RISK))

    def __post_init__(self):
        for goal, w in self.weights.items():
            if goal not in GOALS:
                raise ContractError(f"unknown security goal {goal!r}")
            if not math.isfinite(w) or w < 0:
                raise ContractError(f"weight for {goal} must be finite and non-negative")
        if self.misimplementation_penalty > 0:
            raise ContractError("misimplementation penalty must be <= 0")
        for cost in self.costs.values():
            if not math.isfinite(cost):
                raise ContractError("action costs must be finite")

    @classmethod
    def from_dict(cls, d: Mapping) -> "RewardSpec":
        base = cls()
        costs = dict(base.costs)
        costs.update({k: float(v) for k, v in d.get("costs", {}).items()})
        if "transient" not in d.get("costs", {}) and "transient_multiplier" in d:
            costs["transient"] = float(d["transient_multiplier"]) * costs["insert"]
        risk = {k: tuple(v) for k, v in d.get("risk", DEFAULT_RISK).items()}
        weights = {k: float(v) for k, v in d.get("weights", base.weights).items()}
        return cls(weights, costs, float(d.get("misimplementation_penalty", base.misimplementation_penalty)), risk)

    def goals_at_risk(self, conditions: Mapping[str, bool]) -> set[str]:
        return {g for cond, goals in self.risk.items() if conditions.get(cond, False) for g in goals}

    def utility(self, conditions: Mapping[str, bool]) -> float:
        at_risk = self.goals_at_risk(conditions)
        return -sum(w for g, w in self.weights.items() if g in at_risk)

    def action_cost(self, action: DefenderAction) -> float:
        return float(self.costs.get(action.kind, 0.0))

    def reward(self, conditions: Mapping[str, bool], action: DefenderAction, misimplemented: bool = False) -> float:
        r = self.utility(conditions) - self.action_cost(action)
        if misimplemented:
            r += self.misimplementation_penalty
        return r

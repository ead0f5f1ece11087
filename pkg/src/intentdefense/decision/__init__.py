"""Intent discovery: POMDP belief tracking, intent store and planners."""

from .learning import EvaluationMetrics, QHyperParams, TabularQPolicy, evaluate_policy, q_learning_train
from .planners import GreedyPlanner, NoOpPlanner, OraclePlanner, Planner, RandomPlanner, greedy_plan
from .reward import GOALS, RewardSpec
from .pomdp import BeliefState, PomdpModel, belief_update, discounted_return, expected_reward
from .store import (
    DefenderAction,
    ExecuteTransient,
    InsertPersistent,
    IntentStore,
    ModifyPersistent,
    NoOp,
    apply_action,
    legal_actions,
    tick_intent_store,
)

__all__ = [
    "GOALS",
    "RewardSpec",
    "BeliefState", "DefenderAction", "EvaluationMetrics", "ExecuteTransient", "GreedyPlanner",
    "InsertPersistent", "IntentStore", "ModifyPersistent", "NoOp", "NoOpPlanner", "OraclePlanner",
    "Planner", "PomdpModel", "QHyperParams", "RandomPlanner", "TabularQPolicy", "apply_action",
    "belief_update", "discounted_return", "evaluate_policy", "expected_reward", "greedy_plan",
    "legal_actions", "q_learning_train", "tick_intent_store",
]

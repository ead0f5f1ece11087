from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intentdefense.decision import BeliefState, PomdpModel, belief_update, discounted_return, expected_reward
from intentdefense.decision.pomdp import predict
from intentdefense.errors import ContractError, ImpossibleObservationError

from synth import brute_force_update, random_model


def two_state(z0=0.9, z1=0.1):
    return PomdpModel(
        states=("s0", "s1"), observations=("o", "not-o"), transition={0: np.eye(2)},
        reward={0: np.array([2.0, 4.0])}, obs_fn=np.array([[z0, 1 - z0], [z1, 1 - z1]]),
        discount=0.9, initial_belief=np.array([0.5, 0.5]))


class TestBeliefState:
    def test_rejects_non_distribution(self):
        with pytest.raises(ContractError):
            BeliefState(np.array([0.6, 0.6]))
        with pytest.raises(ContractError):
            BeliefState(np.array([1.2, -0.2]))


class TestBeliefUpdate:
    def test_uninformative_observation(self):
        model = two_state(0.5, 0.5)
        b = BeliefState(np.array([0.3, 0.7]))
        assert np.allclose(belief_update(b, 0, "o", model).probabilities, [0.3, 0.7], atol=1e-15)

    def test_hand_computed(self):
        b = belief_update(BeliefState(np.array([0.5, 0.5])), 0, "o", two_state())
        assert np.allclose(b.probabilities, [0.9, 0.1], atol=1e-12)

    def test_impossible_observation(self):
        model = two_state(1.0, 1.0)
        with pytest.raises(ImpossibleObservationError):
            belief_update(BeliefState(np.array([0.5, 0.5])), 0, "not-o", model)

    def test_unknown_observation(self):
        with pytest.raises(ContractError):
            belief_update(BeliefState(np.array([0.5, 0.5])), 0, "zzz", two_state())

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_matches_joint_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        model = random_model(rng, sparse=bool(seed % 2))
        model.validate()
        b = model.belief()
        for _ in range(5):
            a = int(rng.integers(0, len(model.transition)))
            o = int(rng.integers(0, len(model.observations)))
            t, z = model.transition[a], model.obs_fn
            joint_mass = sum(b.probabilities[s] * t[s][s2] * z[s2][o]
                             for s in range(model.n_states) for s2 in range(model.n_states))
            if joint_mass < 1e-15:
                continue
            expected = brute_force_update(b.probabilities.tolist(), t.tolist(), z.tolist(), o)
            b = belief_update(b, a, model.observations[o], model)
            assert np.max(np.abs(b.probabilities - np.array(expected))) <= 1e-12
            assert abs(b.probabilities.sum() - 1.0) <= 1e-9 and (b.probabilities >= 0).all()

    def test_predict_is_row_mix(self):
        model = two_state()
        model.transition = {0: np.array([[0.2, 0.8], [0.6, 0.4]])}
        model._t_cache.clear()
        p = predict(BeliefState(np.array([0.5, 0.5])), 0, model)
        assert np.allclose(p.probabilities, [0.4, 0.6])


class TestValidation:
    def test_bad_rows(self):
        model = two_state()
        model.transition = {0: np.array([[0.5, 0.4], [0.0, 1.0]])}
        with pytest.raises(ContractError):
            model.validate()

    def test_bad_discount(self):
        model = two_state()
        model.discount = 1.5
        with pytest.raises(ContractError):
            model.validate()

    def test_bad_obs(self):
        model = two_state()
        model.obs_fn = np.array([[0.5, 0.4], [0.1, 0.9]])
        with pytest.raises(ContractError):
            model.validate()


class TestRewards:
    def test_degenerate_belief(self):
        model = two_state()
        assert expected_reward(BeliefState(np.array([0.0, 1.0])), 0, model) == 4.0

    def test_uniform_two_states(self):
        assert expected_reward(BeliefState(np.array([0.5, 0.5])), 0, two_state()) == 3.0

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_direct_summation(self, seed):
        rng = np.random.default_rng(seed)
        model = random_model(rng)
        b = model.belief()
        for a in model.reward:
            direct = sum(float(p) * float(r) for p, r in zip(b.probabilities, model.reward[a]))
            assert abs(expected_reward(b, a, model) - direct) <= 1e-12

    def test_callable_reward(self):
        model = two_state()
        model.reward = lambda s, a: [10.0, 20.0][s]
        assert expected_reward(BeliefState(np.array([0.25, 0.75])), 0, model) == 17.5

    @pytest.mark.parametrize("rewards, gamma, expected", [
        ((5, 100, 100), 0.0, 5.0), ((1, 1, 1), 1.0, 3.0), ((2, 4), 0.5, 4.0), ((), 0.7, 0.0)])
    def test_discounted_return(self, rewards, gamma, expected):
        assert discounted_return(rewards, gamma) == expected

    def test_discount_out_of_range(self):
        with pytest.raises(ContractError):
            discounted_return([1.0], 1.1)

from __future__ import annotations

import numpy as np
import pytest

from mfmdp import nagent
from mfmdp.core import (
    AdmissibleActions,
    AgentConfiguration,
    AlphaIntentTransition,
    ConditionalPolicy,
    DiscountSpec,
    EmpiricalMeasure,
    TabularReward,
    TabularTransition,
    point_mass,
)
from mfmdp.errors import CapacityError, ConsistencyError, InputError, IterationLimitError
from mfmdp.instances import triangle_model
from mfmdp.meanfield import flow

import oracles


def _zero_model():
    actions, T, _ = triangle_model()
    return actions, T, TabularReward(np.zeros((3, 3)))


def test_bellman_step_on_zero_model_is_zero():
    actions, T, reward = _zero_model()
    out = nagent.bellman_product_step(np.zeros(9), 2, T, reward, actions, 0.9)
    assert np.array_equal(out, np.zeros(9))


def test_bellman_step_from_zero_is_myopic_value():
    actions, T, reward = triangle_model()
    out = nagent.bellman_product_step(np.zeros(9), 2, T, reward, actions, 0.9)
    states, acts, rewards, _ = oracles.product_model(2)
    assert np.allclose(out, [max(r) for r in rewards], atol=1e-15)


def test_product_values_match_policy_enumeration():
    actions, T, reward = triangle_model()
    spec = DiscountSpec(0.9, 1e-8)
    table = nagent.value_iterate_product(2, T, reward, actions, spec)
    states, best, count = oracles.enumerate_policies_value(2, 0.9)
    assert count == 4 ** 9
    assert np.max(np.abs(np.array([table[s] for s in states]) - best)) <= 1e-8


def test_product_values_match_policy_iteration_three_agents():
    actions, T, reward = triangle_model()
    table = nagent.value_iterate_product(3, T, reward, actions, DiscountSpec(0.9, 1e-8))
    states, V = oracles.policy_iteration_value(3, 0.9)
    assert np.max(np.abs(np.array([table[s] for s in states]) - V)) <= 1e-8


def test_zero_reward_gives_zero_tables():
    actions, T, reward = _zero_model()
    spec = DiscountSpec(0.9)
    assert np.array_equal(nagent.value_iterate_product(2, T, reward, actions, spec).values, np.zeros(9))
    jN = nagent.value_iterate_empirical(2, T, reward, actions, spec)
    assert np.array_equal(jN.values, np.zeros(len(jN.states)))


def test_iteration_limit_reports_residual():
    actions, T, reward = triangle_model()
    with pytest.raises(IterationLimitError) as info:
        nagent.value_iterate_product(2, T, reward, actions, DiscountSpec(0.99, 1e-12, max_iter=5))
    assert info.value.residual > 0


def test_capacity_guard():
    actions, T, reward = triangle_model()
    with pytest.raises(CapacityError):
        nagent.value_iterate_product(13, T, reward, actions, DiscountSpec(0.9))


def test_hat_actions_single_agent():
    actions, _, _ = triangle_model()
    for x in range(3):
        found = nagent.enumerate_hat_actions(EmpiricalMeasure(tuple(point_mass(3, x).astype(int))), actions)
        targets = sorted(int(np.flatnonzero(Q.q[x])[0]) for Q in found)
        assert targets == list(actions[x])
        assert all(Q.q.sum() == pytest.approx(1) and Q.q[x].sum() == pytest.approx(1) for Q in found)


def test_hat_actions_contain_listed_triangle_measure():
    actions, _, _ = triangle_model()
    found = nagent.enumerate_hat_actions(EmpiricalMeasure((2, 1, 2)), actions)
    target = np.zeros((3, 3))
    for (x, a), w in zip([(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)], [1, 1, 1, 0, 1, 1]):
        target[x, a] = w / 5
    assert any(np.allclose(Q.q, target, atol=1e-15) for Q in found)
    # 3 * 2 * 3 ways to split the three occupied states between two moves
    assert len(found) == 3 * 2 * 3


def test_hat_action_count_two_states():
    actions = AdmissibleActions.full(2, 2)
    assert len(nagent.enumerate_hat_actions(EmpiricalMeasure((1, 1)), actions)) == 4


def test_single_agent_reduces_to_standard_mdp():
    actions, T, reward = triangle_model()
    jN = nagent.value_iterate_empirical(1, T, reward, actions, DiscountSpec(0.9, 1e-10))
    p = [[oracles.tri_single_law(x, a).tolist() for a in range(3)] for x in range(3)]
    r = [[oracles.tri_reward(x, point_mass(3, x)) for a in range(3)] for x in range(3)]
    V = oracles.single_agent_value(p, r, [actions[x] for x in range(3)], 0.9)
    for x in range(3):
        assert jN[tuple(point_mass(3, x).astype(int))] == pytest.approx(V[x], abs=1e-9)


@pytest.mark.parametrize("N,beta", [(2, 0.9), (3, 0.5), (3, 0.9)])
def test_equivalence_of_product_and_empirical(N, beta):
    actions, T, reward = triangle_model()
    spec = DiscountSpec(beta, 1e-8)
    vN = nagent.value_iterate_product(N, T, reward, actions, spec)
    jN = nagent.value_iterate_empirical(N, T, reward, actions, spec)
    assert nagent.check_equivalence(vN, jN) <= 2 * spec.eps


def test_equivalence_on_zero_model():
    actions, T, reward = _zero_model()
    spec = DiscountSpec(0.9)
    vN = nagent.value_iterate_product(2, T, reward, actions, spec)
    jN = nagent.value_iterate_empirical(2, T, reward, actions, spec)
    assert nagent.check_equivalence(vN, jN) == 0


def test_equivalence_rejects_mismatched_tables():
    actions, T, reward = triangle_model()
    vN = nagent.value_iterate_product(2, T, reward, actions, DiscountSpec(0.9))
    jN = nagent.value_iterate_empirical(3, T, reward, actions, DiscountSpec(0.9))
    with pytest.raises(ConsistencyError):
        nagent.check_equivalence(vN, jN)


def test_next_counts_distribution_sums_to_one():
    # two agents play the only action in state 0, one in state 1
    p = np.array([[[0.2, 0.8]], [[0.5, 0.5]]])
    dist = nagent.next_counts_distribution(np.array([[2], [1]]), p)
    assert sum(dist.values()) == pytest.approx(1)
    # either everybody stays, or one agent leaves state 0 and the other one enters it
    assert dist[(2, 1)] == pytest.approx(0.2 ** 2 * 0.5 + 2 * 0.2 * 0.8 * 0.5)


def test_compositions_and_empirical_states():
    assert nagent.compositions(2, 2) == [(2, 0), (1, 1), (0, 2)]
    assert len(nagent.empirical_states(3, 3)) == 10


def test_forced_moves_relabel_agents():
    actions = AdmissibleActions.complete(3)
    T = AlphaIntentTransition(1.0, actions)
    policy = ConditionalPolicy.deterministic([1, 2, 0], 3, actions)
    reward = TabularReward(np.zeros((3, 3)))
    rec = nagent.simulate_agents(4, policy, T, reward, 3, seed=5, config=[0, 0, 1, 2])
    expected = [[2, 1, 1], [1, 2, 1], [1, 1, 2], [2, 1, 1]]
    assert np.allclose(rec.measures * 4, expected)


def test_simulation_is_deterministic_per_seed():
    actions, T, reward = triangle_model()
    policy = ConditionalPolicy.uniform(actions)
    a = nagent.simulate_agents(50, policy, T, reward, 20, seed=3, mu0=[1, 0, 0])
    b = nagent.simulate_agents(50, policy, T, reward, 20, seed=3, mu0=[1, 0, 0])
    c = nagent.simulate_agents(50, policy, T, reward, 20, seed=4, mu0=[1, 0, 0])
    assert np.array_equal(a.measures, b.measures) and np.array_equal(a.rewards, b.rewards)
    assert not np.array_equal(a.measures, c.measures)


def test_growing_population_keeps_earlier_agents_draws():
    actions, T, reward = triangle_model()
    policy = ConditionalPolicy.uniform(actions)
    small = nagent.simulate_agents(3, policy, T, reward, 1, seed=9, config=[0, 1, 2])
    large = nagent.simulate_agents(4, policy, T, reward, 1, seed=9, config=[0, 1, 2, 0])
    # agent 3 only adds to the counts, the first three agents move identically
    diff = large.measures[1] * 4 - small.measures[1] * 3
    assert np.isclose(diff.sum(), 1) and np.all(diff > -1e-12)


def test_simulation_tracks_mean_field_flow(grid):
    rec = nagent.simulate_agents(10_000, grid["policy"], grid["T"], grid["reward"], 64, seed=11,
                                 mu0=point_mass(9, 0))
    traj = flow(point_mass(9, 0), grid["policy"], grid["T"], 64)
    assert 0.5 * np.abs(rec.measures[64] - traj.measures[64]).sum() <= 0.05


def test_simulation_csv(tmp_path):
    actions, T, reward = triangle_model()
    rec = nagent.simulate_agents(5, ConditionalPolicy.uniform(actions), T, reward, 2, seed=0, mu0=[1, 0, 0])
    rec.to_csv(tmp_path / "sim.csv")
    lines = (tmp_path / "sim.csv").read_text().splitlines()
    assert lines[0].startswith("step,state_0") and len(lines) == 4


def test_simulation_input_checks():
    actions, T, reward = triangle_model()
    policy = ConditionalPolicy.uniform(actions)
    with pytest.raises(InputError):
        nagent.simulate_agents(5, policy, T, reward, 2, seed=0)
    with pytest.raises(InputError):
        nagent.simulate_agents(2, policy, T, reward, 2, seed=0, config=[0, 5])


def test_mc_value_zero_and_constant():
    actions, T, _ = triangle_model()
    policy = ConditionalPolicy.uniform(actions)
    for c in (0.0, 2.0):
        reward = TabularReward(np.full((3, 3), c))
        L = nagent.truncation_horizon(reward.bound, 0.9, 1e-9)
        recs = [nagent.simulate_agents(3, policy, T, reward, L, seed=s, mu0=[1, 0, 0]) for s in range(3)]
        est = nagent.discounted_mc_value(recs, reward, 0.9, L)
        assert est.stderr == 0
        assert abs(est.mean - c / 0.1) <= est.truncation_bound + 1e-12


def test_mc_value_matches_exact_solver():
    actions, T, reward = triangle_model()
    beta = 0.9
    table = nagent.value_iterate_product(2, T, reward, actions, DiscountSpec(beta, 1e-10))
    L = nagent.truncation_horizon(reward.bound, beta, 1e-3)
    start = (1, 2)
    recs = [nagent.simulate_agents(2, table.policy, T, reward, L, seed=s, config=AgentConfiguration(start))
            for s in range(400)]
    est = nagent.discounted_mc_value(recs, reward, beta, L)
    assert abs(est.mean - table[start]) <= 3 * est.stderr + est.truncation_bound


def test_truncation_horizon_bound():
    L = nagent.truncation_horizon(1.0, 0.9, 1e-6)
    assert 0.9 ** (L + 1) / 0.1 <= 1e-6 < 0.9 ** L / 0.1


def test_tabular_model_guards():
    with pytest.raises(InputError):
        TabularTransition(np.ones((2, 2, 2)))

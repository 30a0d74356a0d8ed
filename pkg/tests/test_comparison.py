import numpy as np
import pytest

from core.analysis.comparison import (
    ComparisonState,
    TraceMismatchError,
    affine_fixed_point_bound,
    lower_bound_norm,
    lower_step,
    run_comparison,
    theorem_bound,
    upper_bound_norm,
    upper_step,
)
from core.analysis.epsilon import epsilon_global
from core.data.game_generator import random_game, random_initial_q
from core.iteration.qvi import run_qvi
from core.models.game import Player, QTensor
from core.models.policy import FollowerPolicy, LeaderPolicy, PolicyPair
from core.oracle.equilibrium import find_reference


def test_theorem_bound_values():
    assert theorem_bound(0, 0.8, 0.0) == pytest.approx(30.0)
    assert theorem_bound(200, 0.8, 10.0) == pytest.approx(150.0)
    assert theorem_bound(100, 0.8, 0.5) == pytest.approx(7.5, abs=1e-6)
    assert upper_bound_norm(0, 0.5, 1.0) == pytest.approx(6.0)
    assert lower_bound_norm(3, 0.5, 1.0) == upper_bound_norm(3, 0.5, 1.0)
    assert affine_fixed_point_bound(0.8, 0.5) == pytest.approx(2.0)


@pytest.mark.parametrize("args", [(0, 1.0, 0.1), (0, 0.5, -0.1), (-1, 0.5, 0.1)])
def test_bounds_reject_bad_arguments(args):
    with pytest.raises(ValueError):
        theorem_bound(*args)


def test_single_state_errors_stay_below_bound(sec5_game, sec5_reference):
    gamma = sec5_game.gamma
    for seed in range(5):
        q1, q2 = random_initial_q(seed, sec5_game.dims)
        trace = run_qvi(sec5_game, q1, q2, 60, reference=sec5_reference, seed=seed)
        eps = epsilon_global(trace.epsilons)
        for record in trace.records:
            bound = theorem_bound(record.k, gamma, eps)
            assert record.err_leader <= bound
            assert record.err_follower <= bound


def test_sandwich_and_system_bound_on_random_games(random_games):
    checked = 0
    for i, game in random_games(60, max_states=3, max_actions=3):
        reference, _, _ = find_reference(game, limit=10**4)
        if reference is None:
            continue
        checked += 1
        q1, q2 = random_initial_q(i, game.dims)
        trace = run_qvi(game, q1, q2, 100, reference=reference)
        eps = epsilon_global(trace.epsilons)

        comparison = run_comparison(game, trace, reference, eps)

        assert len(comparison) == len(trace)
        assert comparison.max_violation <= 1e-9, f"game {i}"
        for record in comparison.records:
            bound = upper_bound_norm(record.k, game.gamma, eps) + 1e-9
            assert record.err_upper <= bound, f"game {i}, k={record.k}"
            assert record.err_lower <= bound, f"game {i}, k={record.k}"
    assert checked > 0


def test_sandwich_with_per_step_eps(random_games):
    for i, game in random_games(15, max_states=2, max_actions=3):
        reference, _, _ = find_reference(game, limit=10**4)
        if reference is None:
            continue
        q1, q2 = random_initial_q(i, game.dims)
        trace = run_qvi(game, q1, q2, 40, reference=reference)
        schedule = [record.eps_k for record in trace.epsilons]

        comparison = run_comparison(game, trace, reference, schedule)

        assert comparison.max_violation <= 1e-9
        assert [r.eps for r in comparison.records] == schedule


def test_comparison_starts_from_initial_iterate(sec5_game, sec5_reference):
    q1, q2 = random_initial_q(2, sec5_game.dims)
    trace = run_qvi(sec5_game, q1, q2, 3, reference=sec5_reference)
    comparison = run_comparison(sec5_game, trace, sec5_reference, 0.5, Player.LEADER)

    assert comparison[0].q_upper == q1 and comparison[0].q_lower == q1
    assert comparison[0].violation_upper == 0.0

    state = ComparisonState(q1, q1, 0.5, sec5_reference.q1_star, sec5_reference.pair)
    assert upper_step(sec5_game, state, trace[0].pair.leader) == comparison[1].q_upper


def test_thinned_trace_is_rejected(sec5_game, sec5_reference):
    q1, q2 = random_initial_q(0, sec5_game.dims)
    trace = run_qvi(sec5_game, q1, q2, 4, thin=2, reference=sec5_reference)
    with pytest.raises(TraceMismatchError):
        run_comparison(sec5_game, trace, sec5_reference, 0.5)


def test_short_schedule_is_rejected(sec5_game, sec5_reference):
    q1, q2 = random_initial_q(0, sec5_game.dims)
    trace = run_qvi(sec5_game, q1, q2, 4, reference=sec5_reference)
    with pytest.raises(TraceMismatchError):
        run_comparison(sec5_game, trace, sec5_reference, [0.5, 0.5])


def test_negative_eps_is_rejected(sec5_reference):
    q = sec5_reference.q1_star
    with pytest.raises(ValueError):
        ComparisonState(q, q, -0.1, q, sec5_reference.pair)


def test_steps_from_equilibrium_add_the_affine_term(sec5_game, sec5_reference):
    q_star = sec5_reference.q1_star
    state = ComparisonState(q_star, q_star, 0.5, q_star, sec5_reference.pair)
    offset = sec5_game.gamma * 0.5

    for leader in ([0], [1]):
        upper = upper_step(sec5_game, state, LeaderPolicy(leader))
        np.testing.assert_allclose(upper.values, q_star.values + offset, rtol=0.0, atol=1e-14)
    for table in ([[0, 0]], [[1, 0]], [[1, 1]]):
        lower = lower_step(sec5_game, state, FollowerPolicy(table))
        np.testing.assert_allclose(lower.values, q_star.values - offset, rtol=0.0, atol=1e-14)


def test_zero_eps_from_equilibrium_stays_put(random_games):
    for i, game in random_games(5, max_states=3, max_actions=3):
        q_star, _ = random_initial_q(i, game.dims)
        rng = np.random.default_rng(i)
        star_pair = PolicyPair(
            LeaderPolicy(rng.integers(0, game.num_leader_actions, game.num_states)),
            FollowerPolicy(rng.integers(0, game.num_follower_actions, game.dims[:2])),
        )
        state = ComparisonState(q_star, q_star, 0.0, q_star, star_pair)
        for _ in range(10):
            leader = LeaderPolicy(rng.integers(0, game.num_leader_actions, game.num_states))
            follower = FollowerPolicy(rng.integers(0, game.num_follower_actions, game.dims[:2]))
            state = ComparisonState(
                upper_step(game, state, leader), lower_step(game, state, follower), 0.0, q_star, star_pair
            )
            assert state.q_upper.distance(q_star) <= 1e-12
            assert state.q_lower.distance(q_star) <= 1e-12


def test_upper_system_settles_at_affine_fixed_point():
    game = random_game(4, (3, 2, 2), 0.9)
    eps = 0.3
    q_star, _ = random_initial_q(4, game.dims)
    pair = PolicyPair(LeaderPolicy([1, 0, 1]), FollowerPolicy([[0, 1], [1, 1], [0, 0]]))
    state = ComparisonState(QTensor(q_star.values + 2.0), q_star, eps, q_star, pair)

    for _ in range(400):
        state = ComparisonState(upper_step(game, state, pair.leader), q_star, eps, q_star, pair)

    # P @ M is row-stochastic, so the fixed point is the constant gamma * eps / (1 - gamma)
    bound = affine_fixed_point_bound(game.gamma, eps)
    difference = state.q_upper.values - q_star.values
    assert np.max(np.abs(difference)) <= bound + 1e-9
    np.testing.assert_allclose(difference, bound, rtol=0.0, atol=1e-9)


def test_zero_eps_violation_is_recorded_not_raised(sec5_game, sec5_reference):
    # the follower answers b=1 to both leader actions, the leader then picks a=1
    q1_0 = QTensor(np.array([[[5.0, 0.0], [0.0, 0.0]]]))
    q2_0 = QTensor(np.array([[[1.0, 0.0], [1.0, 0.0]]]), Player.FOLLOWER)
    trace = run_qvi(sec5_game, q1_0, q2_0, 5, reference=sec5_reference)

    comparison = run_comparison(sec5_game, trace, sec5_reference, 0.0)

    # gamma * (Q1_0(1,1) - Q1_0(1,2) + Q1*(1,2) - Q1*(2,1)) = 0.8 * (5 + 2.2 - 2.5)
    assert comparison[1].violation_upper == pytest.approx(3.76)
    assert comparison.max_violation > 0.0
    assert len(comparison) == len(trace)


def test_bounds_hold_on_games_beyond_the_enumeration_budget():
    checked = 0
    for seed in range(8):
        game = random_game(500 + seed, (5, 4, 4), (0.5, 0.8)[seed % 2])
        reference, _, method = find_reference(game)
        assert method == "iteration"
        if reference is None:
            continue
        checked += 1
        q1, q2 = random_initial_q(seed, game.dims)
        trace = run_qvi(game, q1, q2, 100, reference=reference)
        eps = epsilon_global(trace.epsilons)

        comparison = run_comparison(game, trace, reference, eps)

        assert comparison.max_violation <= 1e-9, f"seed {seed}"
        for record, system in zip(trace.records, comparison.records):
            bound = theorem_bound(record.k, game.gamma, eps) + 1e-9
            assert record.err_leader <= bound, f"seed {seed}, k={record.k}"
            assert record.err_follower <= bound, f"seed {seed}, k={record.k}"
            system_bound = upper_bound_norm(record.k, game.gamma, eps) + 1e-9
            assert system.err_upper <= system_bound
            assert system.err_lower <= system_bound
    assert checked > 0

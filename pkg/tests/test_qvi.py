import numpy as np
import pytest

from core.data.game_generator import random_game, random_initial_q
from core.iteration.cycle_detector import APERIODIC, NONE, PERIODIC, detect_cycle
from core.iteration.qvi import (
    GAUSS_SEIDEL,
    follower_greedy,
    greedy_pair,
    leader_greedy,
    qvi_step,
    run_qvi,
)
from core.models.game import Player, QTensor
from core.models.policy import FollowerPolicy, LeaderPolicy, PolicyPair
from core.models.trace import IterationRecord, IterationTrace
from core.oracle.equilibrium import find_reference


def _q(values, player=Player.LEADER):
    return QTensor(np.array(values, dtype=float), player)


def test_follower_greedy_at_equilibrium(sec5_q_star):
    policy = follower_greedy(_q(sec5_q_star[1], Player.FOLLOWER))
    np.testing.assert_array_equal(policy.action_for_state_and_leader_action, [[1, 0]])


def test_follower_greedy_ties_break_to_lowest_index():
    policy = follower_greedy(QTensor.zeros((2, 3, 4)))
    assert not policy.action_for_state_and_leader_action.any()


def test_follower_greedy_single_row():
    assert follower_greedy(_q([[[0.3, 0.9]]]))(0, 0) == 1


def test_leader_greedy_anticipates_follower(sec5_game):
    follower = FollowerPolicy([[1, 0]])
    leader = leader_greedy(QTensor(sec5_game.reward_leader), follower)
    # 0.2 against 0.5
    assert leader(0) == 1


def test_leader_greedy_ties():
    assert leader_greedy(QTensor.zeros((1, 3, 2)), FollowerPolicy([[0, 1, 1]]))(0) == 0
    tied = _q([[[1.0, 0.0], [0.0, 1.0]]])
    assert leader_greedy(tied, FollowerPolicy([[0, 1]]))(0) == 0


def test_leader_greedy_shape_mismatch():
    with pytest.raises(ValueError):
        leader_greedy(QTensor.zeros((1, 2, 2)), FollowerPolicy([[0, 0, 0]]))


def test_step_from_zero_returns_rewards(sec5_game):
    zero = QTensor.zeros(sec5_game.dims)
    q1, q2, _ = qvi_step(sec5_game, zero, QTensor.zeros(sec5_game.dims, Player.FOLLOWER))
    np.testing.assert_array_equal(q1.values, sec5_game.reward_leader)
    np.testing.assert_array_equal(q2.values, sec5_game.reward_follower)


def test_step_keeps_equilibrium_fixed(sec5_game, sec5_q_star):
    q1, q2, pair = qvi_step(sec5_game, _q(sec5_q_star[0]), _q(sec5_q_star[1], Player.FOLLOWER))
    np.testing.assert_allclose(q1.values, sec5_q_star[0], atol=1e-12)
    np.testing.assert_allclose(q2.values, sec5_q_star[1], atol=1e-12)
    assert pair.path_label() == "(2,1)"


def test_step_magnitude_and_greedy_consistency(random_games):
    for _, game in random_games(40):
        q1, q2 = random_initial_q(7, game.dims)
        next_q1, _, pair = qvi_step(game, q1, q2)
        assert next_q1.sup_norm() <= game.gamma * q1.sup_norm() + 1.0 + 1e-12

        states = np.arange(game.num_states)
        table = pair.follower.action_for_state_and_leader_action
        chosen_2 = np.take_along_axis(q2.values, table[:, :, None], axis=2)[:, :, 0]
        assert np.all(chosen_2 >= q2.values.max(axis=2))
        anticipated = np.take_along_axis(q1.values, table[:, :, None], axis=2)[:, :, 0]
        on_path = q1.values[states, pair.leader.action_for_state, pair.path_follower_actions()]
        assert np.all(on_path >= anticipated.max(axis=1))


def test_step_rejects_mismatched_tensor(sec5_game):
    with pytest.raises(ValueError):
        qvi_step(sec5_game, QTensor.zeros((2, 2, 2)), QTensor.zeros(sec5_game.dims))


def test_run_without_iterations_keeps_only_initial_record(sec5_game):
    q1, q2 = random_initial_q(0, sec5_game.dims)
    trace = run_qvi(sec5_game, q1, q2, 0)
    assert len(trace) == 1
    assert trace[0].q1 == q1


def test_run_converges_on_single_state_game(sec5_game, sec5_reference):
    q1, q2 = random_initial_q(3, sec5_game.dims)

    trace = run_qvi(sec5_game, q1, q2, 100, reference=sec5_reference, seed=3)

    assert len(trace) == 101
    assert trace[100].err_leader < 1e-8
    assert trace[100].err_follower < 1e-8
    assert all(r.norm_q1 <= 5.0 and r.norm_q2 <= 5.0 for r in trace.records)
    assert all(pair.path_label() == "(2,1)" for pair in trace.pairs[1:])


def test_iterates_stay_bounded_on_random_games(random_games):
    for i, game in random_games(200):
        q1, q2 = random_initial_q(i, game.dims)
        trace = run_qvi(game, q1, q2, 100, thin=100)
        limit = 1.0 / (1.0 - game.gamma) + 1e-9
        assert max(max(r.norm_q1, r.norm_q2) for r in trace.records) <= limit, f"game {i}"


def test_run_is_bit_reproducible():
    game = random_game(21, (3, 2, 3), 0.9)
    q1, q2 = random_initial_q(1, game.dims)

    first = run_qvi(game, q1, q2, 30)
    second = run_qvi(game, q1, q2, 30)

    for a, b in zip(first.records, second.records):
        assert a.q1 == b.q1 and a.q2 == b.q2 and a.pair == b.pair


def test_positive_scaling_keeps_policy_sequence(random_games):
    for _, game in random_games(20, max_states=3, max_actions=3):
        q1, q2 = random_initial_q(2, game.dims)
        scale = 0.37
        scaled = run_qvi(
            game.scaled(scale),
            QTensor(q1.values * scale),
            QTensor(q2.values * scale, Player.FOLLOWER),
            25,
        )
        original = run_qvi(game, q1, q2, 25)
        assert scaled.pairs == original.pairs


def test_converged_at_reports_first_small_step(sec5_game):
    q1, q2 = random_initial_q(3, sec5_game.dims)
    trace = run_qvi(sec5_game, q1, q2, 200)
    k = trace.converged_at
    assert k is not None
    assert trace[k + 1].delta < 1e-10 <= trace[k].delta


def test_thinning_keeps_last_tensor(sec5_game):
    q1, q2 = random_initial_q(0, sec5_game.dims)
    trace = run_qvi(sec5_game, q1, q2, 7, thin=3)
    kept = [r.k for r in trace.records if r.q1 is not None]
    assert kept == [0, 3, 6, 7]
    assert not trace.has_tensors()


def test_unit_init_requirement(sec5_game):
    big = QTensor(np.full(sec5_game.dims, 2.0))
    with pytest.raises(ValueError):
        run_qvi(sec5_game, big, big, 1, require_unit_init=True)


def test_gauss_seidel_uses_updated_follower_tensor():
    game = random_game(5, (2, 3, 3), 0.8)
    q1, q2 = random_initial_q(5, game.dims)

    jacobi_q1, next_q2, jacobi_pair = qvi_step(game, q1, q2)
    gs_q1, gs_q2, gs_pair = qvi_step(game, q1, q2, GAUSS_SEIDEL)

    assert gs_q2 == next_q2
    assert jacobi_pair == greedy_pair(q1, q2)
    assert gs_pair == greedy_pair(q1, next_q2)


def test_gauss_seidel_reaches_same_fixed_point(sec5_game, sec5_reference):
    q1, q2 = random_initial_q(4, sec5_game.dims)
    trace = run_qvi(sec5_game, q1, q2, 100, reference=sec5_reference, update_order=GAUSS_SEIDEL)
    assert trace[-1].err_leader < 1e-8
    assert trace.update_order == GAUSS_SEIDEL


def test_equilibrium_is_stationary(random_games):
    checked = 0
    for _, game in random_games(30, max_states=2, max_actions=3):
        reference, _, _ = find_reference(game, limit=10**4)
        if reference is None:
            continue
        checked += 1
        trace = run_qvi(game, reference.q1_star, reference.q2_star, 20)
        for record in trace.records:
            assert record.q1.distance(reference.q1_star) <= 1e-10
            assert record.q2.distance(reference.q2_star) <= 1e-10
    assert checked > 0


def _trace_of(pairs):
    trace = IterationTrace()
    for k, pair in enumerate(pairs):
        trace.append(IterationRecord(k=k, pair=pair, norm_q1=0.0, norm_q2=0.0))
    return trace


def _pair(a, b):
    return PolicyPair(LeaderPolicy([a]), FollowerPolicy([[b, b]]))


def test_cycle_none_on_converged_run(sec5_game):
    q1, q2 = random_initial_q(0, sec5_game.dims)
    report = detect_cycle(run_qvi(sec5_game, q1, q2, 60), window=10)
    assert report.status == NONE and report.period is None


def test_cycle_period_two():
    pairs = [_pair(0, 0), _pair(1, 1)] * 15
    report = detect_cycle(_trace_of(pairs), window=10)
    assert (report.status, report.period, report.examined) == (PERIODIC, 2, 20)


def test_cycle_on_short_trace_uses_available_suffix():
    pairs = [_pair(0, 0), _pair(1, 0), _pair(1, 1)] * 2
    report = detect_cycle(_trace_of(pairs), window=10)
    assert (report.status, report.period, report.examined) == (PERIODIC, 3, 6)


def test_cycle_aperiodic():
    pairs = [_pair(0, 0), _pair(1, 0), _pair(0, 1), _pair(1, 1), _pair(0, 0)]
    assert detect_cycle(_trace_of(pairs), window=2).status == APERIODIC


def test_cycle_needs_two_records():
    with pytest.raises(ValueError):
        detect_cycle(_trace_of([_pair(0, 0)]), window=3)


def test_trace_rejects_out_of_order_records():
    trace = IterationTrace()
    with pytest.raises(ValueError):
        trace.append(IterationRecord(k=1, pair=_pair(0, 0), norm_q1=0.0, norm_q2=0.0))

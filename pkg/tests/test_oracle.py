import itertools
import time

import numpy as np
import pytest

from core.data.game_generator import builtin_game, random_game
from core.iteration.qvi import run_qvi
from core.linear.operators import build_selection_matrix, build_transition_matrix, flat_index, flatten
from core.models.game import MarkovGame, Player, QTensor
from core.models.policy import FollowerPolicy, LeaderPolicy, PolicyPair
from core.oracle.equilibrium import (
    EnumerationBudgetError,
    candidate_count,
    certificate_from_pair,
    certificate_to_dict,
    closed_form_single_state,
    enumerate_equilibria,
    evaluate_policy_pair,
    find_reference,
    iterate_policy_evaluation,
    select_reference,
    verify_equilibrium,
)


def _all_pairs(dims):
    num_states, num_leader_actions, num_follower_actions = dims
    for leader in itertools.product(range(num_leader_actions), repeat=num_states):
        for table in itertools.product(range(num_follower_actions), repeat=num_states * num_leader_actions):
            yield PolicyPair(
                LeaderPolicy(leader), FollowerPolicy(np.array(table).reshape(num_states, num_leader_actions))
            )


def test_single_state_game_has_unique_equilibrium():
    start = time.perf_counter()
    certificates = enumerate_equilibria(builtin_game("paper-sec5"))
    elapsed = time.perf_counter() - start

    assert len(certificates) == 1
    certificate = certificates[0]
    assert certificate.verified
    assert certificate.pair.path_label() == "(2,1)"
    assert certificate.pair.leader_label() == "2"
    assert certificate.pair.follower_label() == "21"
    assert certificate.q1_star.values[0, 1, 0] == pytest.approx(2.5, abs=1e-10)
    assert certificate.q2_star.values[0, 1, 0] == pytest.approx(4.0, abs=1e-10)
    assert elapsed < 1.0


def test_closed_form_agrees_with_enumeration(sec5_game, sec5_reference, sec5_q_star):
    q1, q2, pair = closed_form_single_state(sec5_game)

    assert pair == sec5_reference.pair
    np.testing.assert_allclose(q1.values, sec5_q_star[0], atol=1e-12)
    np.testing.assert_allclose(q2.values, sec5_q_star[1], atol=1e-12)
    assert q1.distance(sec5_reference.q1_star) <= 1e-10
    assert q2.distance(sec5_reference.q2_star) <= 1e-10


def test_closed_form_needs_single_state():
    with pytest.raises(ValueError):
        closed_form_single_state(random_game(0, (2, 2, 2), 0.5))


def test_evaluation_matches_direct_solve(random_games):
    for i, game in random_games(20, max_states=4, max_actions=3):
        rng = np.random.default_rng(i)
        pair = PolicyPair(
            LeaderPolicy(rng.integers(0, game.num_leader_actions, game.num_states)),
            FollowerPolicy(rng.integers(0, game.num_follower_actions, game.dims[:2])),
        )
        q1, q2 = evaluate_policy_pair(game, pair)

        transition = build_transition_matrix(game).values
        selection = build_selection_matrix(pair.leader, pair.follower, game.dims).to_sparse().toarray()
        for player, q in ((Player.LEADER, q1), (Player.FOLLOWER, q2)):
            reward = flatten(QTensor(game.reward(player), player)).values
            # v = M q solves (I - gamma M P) v = M r, then q = r + gamma P v
            path = np.linalg.solve(
                np.eye(game.num_states) - game.gamma * selection @ transition, selection @ reward
            )
            expected = reward + game.gamma * transition @ path
            np.testing.assert_allclose(flatten(q).values, expected, rtol=0.0, atol=1e-10)


def test_policy_evaluation_contracts():
    game = random_game(8, (3, 2, 2), 0.9)
    pair = PolicyPair(LeaderPolicy([0, 1, 1]), FollowerPolicy([[1, 0], [0, 0], [1, 1]]))

    residuals = []
    for sweep, residual, _, _ in iterate_policy_evaluation(game, pair):
        residuals.append(residual)
        if sweep == 60:
            break

    for before, after in zip(residuals, residuals[1:]):
        assert after <= game.gamma * before + 1e-12


def test_enumeration_matches_brute_force(random_games):
    for _, game in random_games(8, max_states=2, max_actions=2):
        expected = sorted(
            pair.key()
            for pair in _all_pairs(game.dims)
            if certificate_from_pair(game, pair).verified
        )
        assert [c.pair.key() for c in enumerate_equilibria(game)] == expected


def test_enumeration_budget():
    game = random_game(1, (3, 2, 3), 0.8)
    required = candidate_count(game.dims)
    assert required == 2**3 * 3**6

    with pytest.raises(EnumerationBudgetError) as error:
        enumerate_equilibria(game, limit=required - 1)
    assert error.value.required == required


def test_select_reference_takes_lexicographic_minimum():
    game = random_game(3, (1, 2, 2), 0.5)
    certificates = enumerate_equilibria(game)
    reference, multiplicity = select_reference(list(reversed(certificates)))
    assert multiplicity == len(certificates)
    if certificates:
        assert reference is certificates[0]
    assert select_reference([]) == (None, 0)


def test_verify_rejects_non_equilibrium(sec5_game):
    pair = PolicyPair(LeaderPolicy([0]), FollowerPolicy([[1, 0]]))
    q1, q2 = evaluate_policy_pair(sec5_game, pair)
    certificate = verify_equilibrium(sec5_game, pair, q1, q2)

    assert not certificate.verified
    assert certificate.leader_residual > 0.1
    assert certificate.evaluation_residual < 1e-10


def test_find_reference_falls_back_to_iteration(sec5_game, sec5_reference):
    reference, multiplicity, method = find_reference(sec5_game, limit=1)

    assert method == "iteration"
    assert multiplicity == 1
    assert reference.pair == sec5_reference.pair
    assert reference.q1_star.distance(sec5_reference.q1_star) < 1e-10


def test_verified_certificates_are_stationary(random_games):
    for _, game in random_games(10, max_states=2, max_actions=2):
        for certificate in enumerate_equilibria(game):
            trace = run_qvi(game, certificate.q1_star, certificate.q2_star, 20)
            assert trace[-1].q1.distance(certificate.q1_star) <= 1e-10


def test_certificate_export(sec5_reference):
    exported = certificate_to_dict(sec5_reference, multiplicity=1)

    assert exported["leader_policy"] == "2"
    assert exported["follower_policy"] == "21"
    assert exported["leader_actions"] == [1]
    assert exported["follower_actions"] == [[1, 0]]
    assert exported["verified"] is True
    assert exported["q1_star"][flat_index(0, 1, 0, (1, 2, 2))] == pytest.approx(2.5)


def test_identical_rewards_reduce_to_single_agent_value_iteration():
    num_states, gamma = 3, 0.8
    a, b = np.meshgrid([0.0, 1.0], [0.0, 1.0], indexing="ij")
    reward = np.broadcast_to(0.5 * a + 0.4 * b, (num_states, 2, 2))
    transition = np.full((num_states, 2, 2, num_states), 1.0 / num_states)
    game = MarkovGame(num_states, 2, 2, gamma, transition, reward, reward)

    certificates = enumerate_equilibria(game)

    assert len(certificates) == 1
    certificate = certificates[0]
    assert certificate.pair.leader.action_for_state.tolist() == [1, 1, 1]
    assert certificate.pair.follower.action_for_state_and_leader_action.tolist() == [[1, 1]] * num_states

    q = np.zeros((num_states, 2, 2))
    for _ in range(500):
        q = reward + gamma * np.einsum("sabt,t->sab", transition, q.max(axis=(1, 2)))
    np.testing.assert_allclose(certificate.q1_star.values, q, rtol=0.0, atol=1e-8)
    np.testing.assert_allclose(certificate.q2_star.values, q, rtol=0.0, atol=1e-8)
    np.testing.assert_allclose(q, reward + 0.9 * gamma / (1.0 - gamma), rtol=0.0, atol=1e-8)


def test_three_by_three_game_fits_default_budget():
    game = random_game(42, (3, 3, 3), 0.8)
    assert candidate_count(game.dims) == 531441

    certificates = enumerate_equilibria(game)

    assert all(certificate.verified for certificate in certificates)
    keys = [certificate.pair.key() for certificate in certificates]
    assert keys == sorted(keys)

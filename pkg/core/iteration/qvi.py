import logging
from typing import Optional

import numpy as np

from core.data.game_loader import game_hash
from core.models.game import MarkovGame, Player, QTensor
from core.models.policy import FollowerPolicy, LeaderPolicy, PolicyPair
from core.models.trace import IterationRecord, IterationTrace

logger = logging.getLogger(__name__)

JACOBI = "jacobi"
GAUSS_SEIDEL = "gauss-seidel"
UPDATE_ORDERS = (JACOBI, GAUSS_SEIDEL)


def follower_greedy(q2: QTensor) -> FollowerPolicy:
    """Best response b(s, a): the smallest b attaining max_b Q2(s, a, b)."""
    # np.argmax returns the first maximizer, which is the lowest-index tie-break
    return FollowerPolicy(np.argmax(q2.values, axis=2))


def leader_greedy(q1: QTensor, follower: FollowerPolicy) -> LeaderPolicy:
    """
    Leader action a(s): the smallest a attaining max_a Q1(s, a, b(s, a)).

    :param q1: Leader tensor.
    :param follower: Follower policy anticipated by the leader.
    """
    table = follower.action_for_state_and_leader_action
    if table.shape != q1.shape[:2]:
        raise ValueError(
            f"follower policy shape {table.shape} does not match Q-tensor {q1.shape}"
        )
    anticipated = np.take_along_axis(q1.values, table[:, :, None], axis=2)[:, :, 0]
    return LeaderPolicy(np.argmax(anticipated, axis=1))


def greedy_pair(q1: QTensor, q2: QTensor) -> PolicyPair:
    follower = follower_greedy(q2)
    return PolicyPair(leader_greedy(q1, follower), follower)


def selected_values(q: QTensor, pair: PolicyPair) -> np.ndarray:
    """Q(s, a(s), b(s, a(s))) for every state."""
    states = np.arange(q.shape[0])
    return q.values[states, pair.leader.action_for_state, pair.path_follower_actions()]


def bellman_backup(game: MarkovGame, player: Player, continuation: np.ndarray) -> np.ndarray:
    """
    r(s,a,b) + gamma * sum_{s'} P(s'|s,a,b) * continuation(s').

    The sum over s' runs over the last axis in ascending order.
    """
    expected = np.einsum("sabt,t->sab", game.transition, continuation)
    return game.reward(player) + game.gamma * expected


def qvi_step(
    game: MarkovGame, q1: QTensor, q2: QTensor, update_order: str = JACOBI
) -> tuple:
    """
    One Stackelberg Q-value iteration step.

    The follower best response and the leader policy are computed from the
    pre-update tensors and both players are backed up through the selected
    entry Q(s', a(s'), b(s', a(s'))). With ``gauss-seidel`` the follower is
    updated first and both policies are recomputed before the leader update;
    the returned pair is then the one used for the leader.

    :return: (Q1_{k+1}, Q2_{k+1}, pair used)
    :raises ValueError: On non-finite entries or dimension mismatch.
    """
    q1.check_dims(game)
    q2.check_dims(game)
    if update_order not in UPDATE_ORDERS:
        raise ValueError(f"unknown update order '{update_order}'")

    pair = greedy_pair(q1, q2)
    next_q2 = QTensor(
        bellman_backup(game, Player.FOLLOWER, selected_values(q2, pair)), Player.FOLLOWER
    )
    if update_order == GAUSS_SEIDEL:
        pair = greedy_pair(q1, next_q2)
    next_q1 = QTensor(
        bellman_backup(game, Player.LEADER, selected_values(q1, pair)), Player.LEADER
    )
    return next_q1, next_q2, pair


def run_qvi(
    game: MarkovGame,
    q1_0: QTensor,
    q2_0: QTensor,
    iterations: int,
    reference=None,
    eps_iterates_only: bool = False,
    require_unit_init: bool = False,
    thin: int = 1,
    update_order: str = JACOBI,
    seed: Optional[int] = None,
) -> IterationTrace:
    """
    Run K steps of Stackelberg QVI and record every iterate.

    :param game: The game.
    :param q1_0: Initial leader tensor.
    :param q2_0: Initial follower tensor.
    :param iterations: K >= 0; the trace has K + 1 records.
    :param reference: Optional EquilibriumCertificate. When given, sup-norm
        errors against its tensors and the per-iteration epsilon slacks are
        recorded.
    :param eps_iterates_only: Drop the equilibrium slacks from eps_k.
    :param require_unit_init: Reject initial tensors with sup-norm above 1.
    :param thin: Keep tensors only every ``thin`` iterations (and the last one).
    :param update_order: ``jacobi`` or ``gauss-seidel``.
    :param seed: Seed recorded in the trace metadata.
    """
    from core.analysis.epsilon import epsilon_k, star_slacks

    if iterations < 0:
        raise ValueError(f"iteration count must be non-negative, got {iterations}")
    if thin < 1:
        raise ValueError(f"thin must be at least 1, got {thin}")
    if require_unit_init and max(q1_0.sup_norm(), q2_0.sup_norm()) > 1.0:
        raise ValueError("initial Q-tensors must satisfy ||Q_0|| <= 1")

    q1_0.check_dims(game)
    q2_0.check_dims(game)

    trace = IterationTrace(
        game_hash=game_hash(game), seed=seed, iterations=iterations, update_order=update_order
    )
    logger.debug(f"Running {iterations} QVI steps ({update_order}) on {game!r}")

    star = None
    if reference is not None:
        star = star_slacks(reference.q1_star, reference.q2_star, reference.pair)

    q1, q2 = q1_0, q2_0
    delta = None
    for k in range(iterations + 1):
        if k < iterations:
            next_q1, next_q2, pair = qvi_step(game, q1, q2, update_order)
        else:
            pair = greedy_pair(q1, q2)

        err_leader = err_follower = epsilon = None
        if reference is not None:
            err_leader = q1.distance(reference.q1_star)
            err_follower = q2.distance(reference.q2_star)
            epsilon = epsilon_k(
                q1,
                q2,
                pair,
                reference.q1_star,
                reference.q2_star,
                reference.pair,
                iterates_only=eps_iterates_only,
                star=star,
            )
        keep = k % thin == 0 or k == iterations
        trace.append(
            IterationRecord(
                k=k,
                pair=pair,
                norm_q1=q1.sup_norm(),
                norm_q2=q2.sup_norm(),
                q1=q1 if keep else None,
                q2=q2 if keep else None,
                err_leader=err_leader,
                err_follower=err_follower,
                delta=delta,
                epsilon=epsilon,
            )
        )

        if k < iterations:
            delta = max(next_q1.distance(q1), next_q2.distance(q2))
            q1, q2 = next_q1, next_q2

    if trace.converged_at is not None:
        logger.debug(f"Numerically converged at k={trace.converged_at}")
    return trace

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np

from core.iteration.qvi import bellman_backup, greedy_pair, qvi_step, selected_values
from core.linear.operators import flatten
from core.models.game import MarkovGame, Player, QTensor
from core.models.policy import FollowerPolicy, LeaderPolicy, PolicyPair

logger = logging.getLogger(__name__)

EVALUATION_TOLERANCE = 1e-12
VERIFICATION_TOLERANCE = 1e-8
DEFAULT_ENUMERATION_LIMIT = 10**6


class PolicyEvaluationError(RuntimeError):
    """Raised when fixed-point evaluation fails to converge; signals a bug."""


class EnumerationBudgetError(ValueError):
    """Raised when the number of candidate policy pairs exceeds the budget."""

    def __init__(self, required: int, limit: int):
        super().__init__(
            f"enumeration needs {required} candidate policy pairs, budget is {limit}"
        )
        self.required = required
        self.limit = limit


@dataclass(frozen=True)
class EquilibriumCertificate:
    pair: PolicyPair
    q1_star: QTensor
    q2_star: QTensor
    follower_residual: float
    leader_residual: float
    evaluation_residual: float

    @property
    def verified(self) -> bool:
        return (
            max(self.follower_residual, self.leader_residual, self.evaluation_residual)
            <= VERIFICATION_TOLERANCE
        )


def _max_sweeps(gamma: float, tolerance: float) -> int:
    if gamma == 0.0:
        return 2
    return int(math.ceil(10 * math.log(tolerance) / math.log(gamma))) + 2


def iterate_policy_evaluation(game: MarkovGame, pair: PolicyPair, q1=None, q2=None):
    """
    Fixed-point sweeps Q <- r + gamma * P @ M_[pair] @ Q for both players.

    Yields (sweep, residual, Q1, Q2) after every sweep, where residual is the
    sup-norm change of that sweep. The map is a gamma-contraction, so the
    residual shrinks by at least gamma per sweep until round-off.
    """
    pair.check_dims(game.dims)
    q1 = np.zeros(game.dims) if q1 is None else np.asarray(q1.values if isinstance(q1, QTensor) else q1)
    q2 = np.zeros(game.dims) if q2 is None else np.asarray(q2.values if isinstance(q2, QTensor) else q2)
    states = np.arange(game.num_states)
    leader_actions = pair.leader.action_for_state
    path = pair.path_follower_actions()

    sweep = 0
    while True:
        sweep += 1
        next_q1 = bellman_backup(game, Player.LEADER, q1[states, leader_actions, path])
        next_q2 = bellman_backup(game, Player.FOLLOWER, q2[states, leader_actions, path])
        residual = max(np.max(np.abs(next_q1 - q1)), np.max(np.abs(next_q2 - q2)))
        q1, q2 = next_q1, next_q2
        yield sweep, float(residual), q1, q2


def evaluate_policy_pair(
    game: MarkovGame, pair: PolicyPair, tolerance: float = EVALUATION_TOLERANCE
) -> tuple:
    """
    Solve Q^i = r^i + gamma * P @ M_[pair] @ Q^i for both players.

    Sweeps stop once the distance to the fixed point, bounded by
    gamma / (1 - gamma) times the last change, is below ``tolerance``, or the
    change has hit the round-off floor of the values.

    :return: (Q1, Q2) as QTensors.
    :raises PolicyEvaluationError: If the sweep budget is exhausted.
    """
    gamma = game.gamma
    max_sweeps = _max_sweeps(gamma, tolerance)
    threshold = tolerance * (1.0 - gamma) / gamma if gamma > 0.0 else math.inf

    for sweep, residual, q1, q2 in iterate_policy_evaluation(game, pair):
        scale = max(1.0, float(np.max(np.abs(q1))), float(np.max(np.abs(q2))))
        floor = 16 * np.finfo(np.float64).eps * scale
        if residual <= max(threshold, floor):
            logger.debug(f"Policy evaluation of {pair!r} converged after {sweep} sweeps")
            return QTensor(q1, Player.LEADER), QTensor(q2, Player.FOLLOWER)
        if sweep >= max_sweeps:
            break
    error_message = f"policy evaluation of {pair!r} did not converge in {max_sweeps} sweeps"
    logger.error(error_message)
    raise PolicyEvaluationError(error_message)


def verify_equilibrium(
    game: MarkovGame, pair: PolicyPair, q1: QTensor, q2: QTensor
) -> EquilibriumCertificate:
    """
    Residuals of the Stackelberg fixed-point conditions for a policy pair.

    follower: max_{s,a} [max_b Q2(s,a,b) - Q2(s,a,b(s,a))]
    leader:   max_s [max_a Q1(s,a,b(s,a)) - Q1(s,a(s),b(s,a(s)))]
    evaluation: max sup-norm violation of Q^i = r^i + gamma * P @ M @ Q^i
    """
    table = pair.follower.action_for_state_and_leader_action
    chosen_2 = np.take_along_axis(q2.values, table[:, :, None], axis=2)[:, :, 0]
    follower_residual = float(np.max(q2.values.max(axis=2) - chosen_2))

    anticipated = np.take_along_axis(q1.values, table[:, :, None], axis=2)[:, :, 0]
    leader_residual = float(np.max(anticipated.max(axis=1) - selected_values(q1, pair)))

    evaluation_residual = 0.0
    for player, q in ((Player.LEADER, q1), (Player.FOLLOWER, q2)):
        backed_up = bellman_backup(game, player, selected_values(q, pair))
        evaluation_residual = max(evaluation_residual, float(np.max(np.abs(backed_up - q.values))))

    return EquilibriumCertificate(
        pair, q1, q2, follower_residual, leader_residual, evaluation_residual
    )


def candidate_count(dims: tuple) -> int:
    num_states, num_leader_actions, num_follower_actions = dims
    return num_leader_actions**num_states * num_follower_actions ** (num_states * num_leader_actions)


class EquilibriumOracle:
    """
    Exhaustive search for deterministic Stackelberg equilibria.

    The fixed point of a pair only depends on the on-path selection
    (a(s), b(s, a(s))), so each distinct selection is evaluated once. The
    off-path follower actions b(s, a) for a != a(s) can only pass the follower
    check when they lie in the (tolerance-wide) argmax set of Q2(s, a, .), so
    only those completions are verified; every other candidate fails.
    """

    def __init__(self, game: MarkovGame, limit: int = DEFAULT_ENUMERATION_LIMIT):
        self.game = game
        self.limit = limit

    def enumerate(self) -> list:
        """
        :return: Verified certificates in lexicographic pair order.
        :raises EnumerationBudgetError: When |A|^|S| * |B|^(|S||A|) > limit.
        """
        game = self.game
        required = candidate_count(game.dims)
        if required > self.limit:
            logger.error(f"Refusing enumeration: {required} candidates exceed budget {self.limit}")
            raise EnumerationBudgetError(required, self.limit)

        num_states, num_leader_actions, num_follower_actions = game.dims
        logger.debug(f"Enumerating {required} candidate policy pairs for {game!r}")

        certificates = []
        selections = itertools.product(
            itertools.product(range(num_leader_actions), range(num_follower_actions)),
            repeat=num_states,
        )
        for selection in selections:
            leader_actions = np.array([a for a, _ in selection], dtype=np.int64)
            path = np.array([b for _, b in selection], dtype=np.int64)
            table = np.zeros((num_states, num_leader_actions), dtype=np.int64)
            table[np.arange(num_states), leader_actions] = path
            q1, q2 = evaluate_policy_pair(game, PolicyPair(LeaderPolicy(leader_actions), FollowerPolicy(table)))

            options = []
            feasible = True
            for s in range(num_states):
                for a in range(num_leader_actions):
                    best = q2.values[s, a].max()
                    allowed = [
                        b
                        for b in range(num_follower_actions)
                        if best - q2.values[s, a, b] <= VERIFICATION_TOLERANCE
                    ]
                    if a == leader_actions[s]:
                        allowed = [path[s]] if path[s] in allowed else []
                    if not allowed:
                        feasible = False
                        break
                    options.append(allowed)
                if not feasible:
                    break
            if not feasible:
                continue

            for completion in itertools.product(*options):
                follower = FollowerPolicy(np.array(completion, dtype=np.int64).reshape(num_states, num_leader_actions))
                pair = PolicyPair(LeaderPolicy(leader_actions), follower)
                certificate = verify_equilibrium(game, pair, q1, q2)
                if certificate.verified:
                    certificates.append(certificate)

        certificates.sort(key=lambda c: c.pair.key())
        logger.info(f"Found {len(certificates)} verified equilibrium pair(s)")
        return certificates


def enumerate_equilibria(game: MarkovGame, limit: int = DEFAULT_ENUMERATION_LIMIT) -> list:
    return EquilibriumOracle(game, limit).enumerate()


def select_reference(certificates: list):
    """Lexicographically smallest verified pair and the number of verified pairs."""
    if not certificates:
        return None, 0
    return min(certificates, key=lambda c: c.pair.key()), len(certificates)


def closed_form_single_state(game: MarkovGame) -> tuple:
    """
    Equilibrium of a one-state self-loop game from its rewards.

    The follower best-responds to the rewards, the leader optimizes against
    that response, and Q^i(s,a,b) = r^i(s,a,b) + gamma * r^i(s,a*,b*) / (1 - gamma).

    :return: (Q1, Q2, pair)
    :raises ValueError: If the game has more than one state or no self-loop.
    """
    if game.num_states != 1:
        raise ValueError(f"closed form needs a single state, game has {game.num_states}")
    if not np.allclose(game.transition, 1.0, rtol=0.0, atol=1e-12):
        raise ValueError("closed form needs a self-loop transition")

    pair = greedy_pair(
        QTensor(game.reward_leader, Player.LEADER), QTensor(game.reward_follower, Player.FOLLOWER)
    )
    a, b = pair.leader(0), pair.follower(0, pair.leader(0))
    tensors = []
    for player in (Player.LEADER, Player.FOLLOWER):
        reward = game.reward(player)
        tensors.append(QTensor(reward + game.gamma * reward[0, a, b] / (1.0 - game.gamma), player))
    return tensors[0], tensors[1], pair


def certificate_to_dict(certificate: EquilibriumCertificate, multiplicity: int = 1) -> dict:
    pair = certificate.pair
    return {
        "leader_policy": pair.leader_label(),
        "follower_policy": pair.follower_label(),
        "path": pair.path_label(),
        "leader_actions": list(pair.leader.key()),
        "follower_actions": pair.follower.action_for_state_and_leader_action.tolist(),
        "q1_star": flatten(certificate.q1_star).values.tolist(),
        "q2_star": flatten(certificate.q2_star).values.tolist(),
        "follower_residual": certificate.follower_residual,
        "leader_residual": certificate.leader_residual,
        "evaluation_residual": certificate.evaluation_residual,
        "verified": certificate.verified,
        "multiplicity": multiplicity,
    }


def certificate_from_pair(game: MarkovGame, pair: PolicyPair) -> EquilibriumCertificate:
    """Evaluate a candidate pair and verify it; the result may be unverified."""
    q1, q2 = evaluate_policy_pair(game, pair)
    return verify_equilibrium(game, pair, q1, q2)


def find_reference(game: MarkovGame, limit: int = DEFAULT_ENUMERATION_LIMIT, iterations: int = 2000):
    """
    Reference equilibrium for bounds and comparison systems.

    Uses exhaustive enumeration when the game fits the budget. Larger games fall
    back to the greedy pair of a long zero-initialized QVI run, which is kept
    only if it verifies.

    :return: (certificate or None, multiplicity, method)
    """
    if candidate_count(game.dims) <= limit:
        reference, multiplicity = select_reference(enumerate_equilibria(game, limit))
        return reference, multiplicity, "enumeration"

    logger.debug("Game exceeds enumeration budget, verifying converged QVI pair instead")
    q1, q2 = QTensor.zeros(game.dims, Player.LEADER), QTensor.zeros(game.dims, Player.FOLLOWER)
    for _ in range(iterations):
        next_q1, next_q2, _ = qvi_step(game, q1, q2)
        done = max(next_q1.distance(q1), next_q2.distance(q2)) < EVALUATION_TOLERANCE
        q1, q2 = next_q1, next_q2
        if done:
            break
    certificate = certificate_from_pair(game, greedy_pair(q1, q2))
    if not certificate.verified:
        logger.warning("Converged QVI pair does not verify; no reference available")
        return None, 0, "iteration"
    return certificate, 1, "iteration"

"""
Slack of the relaxed best-response condition.

For the greedy pair (a_k, b_k) of the current tensors the condition asks, for
every state and every deterministic deviation mu,

    Q1(s, a_k, b_k(s, a_k)) <= Q1(s, a_k, mu2(s)) + eps
    Q2(s, a_k, b_k(s, a_k)) <= Q2(s, mu1(s), b_k(s, a_k)) + eps

and the same two inequalities for the equilibrium tensors and pair. States
decouple, so the worst deviation is a per-state minimum over single actions.
"""
import itertools
import logging
from dataclasses import dataclass

import numpy as np

from core.iteration.qvi import selected_values
from core.models.game import QTensor
from core.models.policy import PolicyPair

logger = logging.getLogger(__name__)

ENUMERATION_LIMIT = 10**4


@dataclass(frozen=True)
class EpsilonRecord:
    slack_leader_k: float
    slack_follower_k: float
    slack_leader_star: float
    slack_follower_star: float
    eps_k: float

    def to_dict(self) -> dict:
        return {
            "slack_leader_k": self.slack_leader_k,
            "slack_follower_k": self.slack_follower_k,
            "slack_leader_star": self.slack_leader_star,
            "slack_follower_star": self.slack_follower_star,
            "eps_k": self.eps_k,
        }


def _pair_of(leader, follower) -> PolicyPair:
    return leader if isinstance(leader, PolicyPair) else PolicyPair(leader, follower)


def slack_leader(q1: QTensor, leader, follower=None) -> float:
    """
    Smallest eps with Q1(s, a(s), b(s, a(s))) <= Q1(s, a(s), mu2(s)) + eps for all mu2.

    :param q1: Leader tensor.
    :param leader: Leader policy (or a PolicyPair, then ``follower`` is omitted).
    :param follower: Follower policy.
    """
    pair = _pair_of(leader, follower)
    states = np.arange(q1.shape[0])
    row = q1.values[states, pair.leader.action_for_state, :]
    return float(np.max(selected_values(q1, pair) - row.min(axis=1)))


def slack_follower(q2: QTensor, leader, follower=None) -> float:
    """Smallest eps with Q2(s, a(s), b_bar(s)) <= Q2(s, mu1(s), b_bar(s)) + eps, b_bar fixed."""
    pair = _pair_of(leader, follower)
    states = np.arange(q2.shape[0])
    column = q2.values[states, :, pair.path_follower_actions()]
    return float(np.max(selected_values(q2, pair) - column.min(axis=1)))


def star_slacks(q1_star: QTensor, q2_star: QTensor, pair_star: PolicyPair) -> tuple:
    return slack_leader(q1_star, pair_star), slack_follower(q2_star, pair_star)


def epsilon_k(
    q1_k: QTensor,
    q2_k: QTensor,
    pair_k: PolicyPair,
    q1_star: QTensor,
    q2_star: QTensor,
    pair_star: PolicyPair,
    iterates_only: bool = False,
    star: tuple = None,
) -> EpsilonRecord:
    """
    Per-iteration slack eps_k.

    eps_k is the max of the two iterate slacks and the two equilibrium slacks;
    with ``iterates_only`` the equilibrium slacks are reported but excluded
    from eps_k. ``star`` may carry precomputed equilibrium slacks, which are
    constant along a run.
    """
    leader_k = slack_leader(q1_k, pair_k)
    follower_k = slack_follower(q2_k, pair_k)
    leader_star, follower_star = star if star is not None else star_slacks(q1_star, q2_star, pair_star)
    terms = [leader_k, follower_k] if iterates_only else [leader_k, follower_k, leader_star, follower_star]
    return EpsilonRecord(leader_k, follower_k, leader_star, follower_star, max(terms))


def epsilon_existence_bound(gamma: float) -> float:
    """Slack that always suffices when every tensor satisfies ||Q|| <= 1/(1-gamma): 2/(1-gamma)."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must be in [0, 1), got {gamma}")
    return 2.0 / (1.0 - gamma)


def epsilon_global(records) -> float:
    values = [record.eps_k for record in records]
    if not values:
        raise ValueError("no epsilon records")
    return max(values)


def running_max(values) -> list:
    return list(itertools.accumulate(values, max))


def _deviation_policies(num_states: int, num_actions: int):
    count = num_actions**num_states
    if count > ENUMERATION_LIMIT:
        raise ValueError(
            f"{count} deterministic deviation policies exceed the enumeration limit {ENUMERATION_LIMIT}"
        )
    return itertools.product(range(num_actions), repeat=num_states)


def assumption_holds(
    q1_k: QTensor,
    q2_k: QTensor,
    pair_k: PolicyPair,
    q1_star: QTensor,
    q2_star: QTensor,
    pair_star: PolicyPair,
    eps: float,
    tolerance: float = 1e-12,
) -> bool:
    """
    Check the four relaxed best-response inequalities by enumerating every
    deterministic deviation policy mu1: S -> A and mu2: S -> B.
    """
    num_states, num_leader_actions, num_follower_actions = q1_k.shape
    states = np.arange(num_states)

    for q1, q2, pair in ((q1_k, q2_k, pair_k), (q1_star, q2_star, pair_star)):
        leader_actions = pair.leader.action_for_state
        path = pair.path_follower_actions()
        value_1 = selected_values(q1, pair)
        value_2 = selected_values(q2, pair)
        for mu2 in _deviation_policies(num_states, num_follower_actions):
            deviated = q1.values[states, leader_actions, np.array(mu2)]
            if np.any(value_1 > deviated + eps + tolerance):
                return False
        for mu1 in _deviation_policies(num_states, num_leader_actions):
            deviated = q2.values[states, np.array(mu1), path]
            if np.any(value_2 > deviated + eps + tolerance):
                return False
    return True

"""
Upper and lower comparison systems.

With x = flatten(Q - Q*) the two auxiliary iterations are affine switching
systems driven by the policies of the main iteration:

    upper:  x_{k+1} = gamma * P @ M_[a_k, b*] @ x_k + gamma * eps * 1
    lower:  x_{k+1} = gamma * P @ M_[a*, b_k] @ x_k - gamma * eps * 1

Started from Q^U_0 = Q^L_0 = Q_0 they sandwich the main iterate,
Q^L_k <= Q_k <= Q^U_k, as long as eps covers the relaxed best-response slack
of every step.
"""
import logging
from dataclasses import dataclass, field, replace
from numbers import Real

import numpy as np

from core.linear.operators import (
    QVector,
    SelectionMatrix,
    build_transition_matrix,
    flatten,
    switched_step,
    unflatten,
)
from core.models.game import MarkovGame, Player, QTensor
from core.models.policy import FollowerPolicy, LeaderPolicy, PolicyPair
from core.models.trace import IterationTrace

logger = logging.getLogger(__name__)


class TraceMismatchError(ValueError):
    """Raised when a trace cannot drive the comparison systems."""


@dataclass(frozen=True)
class ComparisonState:
    q_upper: QTensor
    q_lower: QTensor
    eps: float
    reference: QTensor
    star_pair: PolicyPair

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError(f"eps must be non-negative, got {self.eps}")
        shape = self.reference.shape
        if self.q_upper.shape != shape or self.q_lower.shape != shape:
            raise ValueError("comparison tensors must share the reference shape")


def _advance(game: MarkovGame, q: QTensor, reference: QTensor, selection: SelectionMatrix, offset: float) -> QTensor:
    transition = build_transition_matrix(game)
    difference = flatten(q).values - flatten(reference).values
    moved = switched_step(transition, selection, difference, game.gamma, offset)
    vector = flatten(reference).values + moved
    return unflatten(QVector(vector, q.shape), q.player)


def upper_step(game: MarkovGame, state: ComparisonState, leader_k: LeaderPolicy) -> QTensor:
    """
    Q^U_{k+1} from Q^U_k, using M_[a_k, b*]: the main iteration's leader policy
    composed with the equilibrium follower policy.
    """
    follower_star = state.star_pair.follower.action_for_state_and_leader_action
    states = np.arange(game.num_states)
    selection = SelectionMatrix.from_selection(
        leader_k.action_for_state, follower_star[states, leader_k.action_for_state], game.dims
    )
    return _advance(game, state.q_upper, state.reference, selection, game.gamma * state.eps)


def lower_step(game: MarkovGame, state: ComparisonState, follower_k: FollowerPolicy) -> QTensor:
    """Q^L_{k+1} from Q^L_k, using M_[a*, b_k] and the affine term -gamma * eps."""
    leader_star = state.star_pair.leader.action_for_state
    states = np.arange(game.num_states)
    selection = SelectionMatrix.from_selection(
        leader_star,
        follower_k.action_for_state_and_leader_action[states, leader_star],
        game.dims,
    )
    return _advance(game, state.q_lower, state.reference, selection, -game.gamma * state.eps)


@dataclass(frozen=True)
class ComparisonRecord:
    k: int
    q_upper: QTensor
    q_lower: QTensor
    eps: float
    violation_upper: float
    violation_lower: float
    err_upper: float
    err_lower: float


@dataclass
class ComparisonTrace:
    player: Player
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, k):
        return self.records[k]

    @property
    def max_violation(self) -> float:
        return max(
            (max(r.violation_upper, r.violation_lower) for r in self.records), default=0.0
        )


def run_comparison(
    game: MarkovGame,
    main_trace: IterationTrace,
    reference,
    eps,
    player: Player = Player.LEADER,
) -> ComparisonTrace:
    """
    Drive both comparison systems with the greedy policies of a main trace.

    :param game: The game.
    :param main_trace: Full-tensor trace of the main iteration.
    :param reference: EquilibriumCertificate supplying Q* and (a*, b*).
    :param eps: Constant slack, or one value per step (len >= K) for a
        time-varying affine term.
    :param player: Which player's tensors are sandwiched.
    :raises TraceMismatchError: If the trace lacks tensors or eps is too short.
    """
    if not main_trace.has_tensors():
        raise TraceMismatchError("comparison systems need every iterate; the trace was thinned")
    steps = len(main_trace) - 1
    if isinstance(eps, Real):
        schedule = [float(eps)] * max(steps, 1)
    else:
        schedule = [float(e) for e in eps] or [0.0]
        if len(schedule) < steps:
            raise TraceMismatchError(
                f"eps schedule has {len(schedule)} entries, trace has {steps} steps"
            )

    q_star = reference.q1_star if player is Player.LEADER else reference.q2_star
    if q_star.shape != game.dims:
        raise TraceMismatchError(f"reference shape {q_star.shape} does not match game {game.dims}")

    def current(record):
        return record.q1 if player is Player.LEADER else record.q2

    initial = current(main_trace[0])
    state = ComparisonState(initial, initial, schedule[0], q_star, reference.pair)
    result = ComparisonTrace(player)
    for k, record in enumerate(main_trace.records):
        state = replace(state, eps=schedule[min(k, len(schedule) - 1)])
        q_k = current(record)
        result.records.append(
            ComparisonRecord(
                k=k,
                q_upper=state.q_upper,
                q_lower=state.q_lower,
                eps=state.eps,
                violation_upper=max(0.0, float(np.max(q_k.values - state.q_upper.values))),
                violation_lower=max(0.0, float(np.max(state.q_lower.values - q_k.values))),
                err_upper=state.q_upper.distance(q_star),
                err_lower=state.q_lower.distance(q_star),
            )
        )
        if k == steps:
            break
        state = replace(
            state,
            q_upper=upper_step(game, state, record.pair.leader),
            q_lower=lower_step(game, state, record.pair.follower),
        )

    worst = result.max_violation
    if worst > 1e-9:
        logger.warning(f"Sandwich violated by {worst:.3e} for the {player.value}")
    return result


def _check(gamma: float, eps: float, k: int) -> None:
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must be in [0, 1), got {gamma}")
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    if eps < 0:
        raise ValueError(f"eps must be non-negative, got {eps}")


def theorem_bound(k: int, gamma: float, eps: float) -> float:
    """Finite-time bound (6 / (1 - gamma)) * gamma^k + 3 * eps / (1 - gamma)."""
    _check(gamma, eps, k)
    return 6.0 / (1.0 - gamma) * gamma**k + 3.0 * eps / (1.0 - gamma)


def upper_bound_norm(k: int, gamma: float, eps: float) -> float:
    """Per-system bound (2 / (1 - gamma)) * gamma^k + eps / (1 - gamma)."""
    _check(gamma, eps, k)
    return 2.0 / (1.0 - gamma) * gamma**k + eps / (1.0 - gamma)


lower_bound_norm = upper_bound_norm


def affine_fixed_point_bound(gamma: float, eps: float) -> float:
    """Sup-norm bound gamma * eps / (1 - gamma) of the upper system's limit under fixed policies."""
    _check(gamma, eps, 0)
    return gamma * eps / (1.0 - gamma)

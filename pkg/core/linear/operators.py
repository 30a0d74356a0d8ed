"""
Vectorized form of the Stackelberg Q-value iteration.

A Q-tensor is stacked into one vector of length |S||A||B| made of blocks
Q_{a,b} = [Q(0,a,b), ..., Q(|S|-1,a,b)], ordered by (a, b). The transition
matrix P stacks the |S| x |S| blocks P_{a,b} in the same order, and the
selection matrix M_[phi,psi] has one row per state picking the entry
(s, phi(s), psi(s)). With psi(s) = b(s, a(s)) the update of every player reads

    Q_{k+1} = r + gamma * P @ M_[a_k, b_k] @ Q_k.

The follower policy of the game is S x A -> B; M needs S -> B, so the follower
table is composed with the leader policy first.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from core.models.game import GameDimensionError, MarkovGame, Player, QTensor
from core.models.policy import FollowerPolicy, LeaderPolicy, PolicyPair

logger = logging.getLogger(__name__)


def flat_index(state, leader_action, follower_action, dims: tuple):
    """Position of Q(s, a, b) in the stacked vector: ((a * |B|) + b) * |S| + s."""
    num_states, _, num_follower_actions = dims
    return (leader_action * num_follower_actions + follower_action) * num_states + state


@dataclass(frozen=True, eq=False)
class QVector:
    values: np.ndarray
    dims: tuple

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        expected = int(np.prod(self.dims))
        if values.shape != (expected,):
            raise GameDimensionError(
                f"Q-vector has shape {values.shape}, expected ({expected},) for dims {self.dims}"
            )
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))


def flatten(q: QTensor) -> QVector:
    # (s, a, b) -> (a, b, s), then row-major ravel gives ((a*|B|)+b)*|S| + s
    return QVector(np.transpose(q.values, (1, 2, 0)).ravel(), q.shape)


def unflatten(vector: QVector, player: Player = Player.LEADER) -> QTensor:
    num_states, num_leader_actions, num_follower_actions = vector.dims
    blocks = vector.values.reshape(num_leader_actions, num_follower_actions, num_states)
    return QTensor(np.transpose(blocks, (2, 0, 1)), player)


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Dense (|S||A||B|) x |S| matrix whose block (a, b) is P_{a,b}."""

    values: np.ndarray
    dims: tuple

    def __matmul__(self, other):
        return self.values @ other


def build_transition_matrix(game: MarkovGame) -> TransitionMatrix:
    # (s, a, b, s') -> rows ordered (a, b, s)
    rows = np.transpose(game.transition, (1, 2, 0, 3)).reshape(-1, game.num_states)
    rows = np.ascontiguousarray(rows)
    rows.flags.writeable = False
    return TransitionMatrix(rows, game.dims)


@dataclass(frozen=True, eq=False)
class SelectionMatrix:
    """
    Sparse |S| x (|S||A||B|) 0/1 matrix, stored as the selected column of each row.
    """

    columns: np.ndarray
    dims: tuple

    def __post_init__(self):
        columns = np.array(self.columns, dtype=np.int64)
        num_states = self.dims[0]
        if columns.shape != (num_states,):
            raise GameDimensionError(
                f"selection needs one column per state, got shape {columns.shape}"
            )
        columns.flags.writeable = False
        object.__setattr__(self, "columns", columns)

    @classmethod
    def from_selection(cls, leader_actions, follower_actions, dims: tuple) -> "SelectionMatrix":
        """M_[phi, psi] for per-state maps phi: S -> A and psi: S -> B."""
        states = np.arange(dims[0])
        return cls(
            flat_index(states, np.asarray(leader_actions), np.asarray(follower_actions), dims),
            dims,
        )

    @property
    def shape(self) -> tuple:
        return (self.dims[0], int(np.prod(self.dims)))

    def apply(self, vector: np.ndarray) -> np.ndarray:
        """M @ v without materializing M."""
        return np.asarray(vector)[self.columns]

    def to_sparse(self) -> sparse.csr_matrix:
        num_states = self.dims[0]
        return sparse.csr_matrix(
            (np.ones(num_states), (np.arange(num_states), self.columns)), shape=self.shape
        )

    def __matmul__(self, vector):
        return self.to_sparse() @ vector


def build_selection_matrix(leader: LeaderPolicy, follower: FollowerPolicy, dims: tuple) -> SelectionMatrix:
    """
    Selection matrix of a policy pair.

    Row s selects (s, phi(s), psi(s)) with phi(s) = leader(s) and
    psi(s) = follower(s, leader(s)).
    """
    pair = PolicyPair(leader, follower)
    pair.check_dims(dims)
    return SelectionMatrix.from_selection(
        leader.action_for_state, pair.path_follower_actions(), dims
    )


def switched_step(
    transition: TransitionMatrix, selection: SelectionMatrix, x: np.ndarray, gamma: float, offset: float = 0.0
) -> np.ndarray:
    """One step of the affine switching system x' = gamma * P @ M @ x + offset * 1."""
    return gamma * (transition @ (selection.to_sparse() @ x)) + offset


def vector_qvi_residual(game: MarkovGame, q1: QTensor, q2: QTensor) -> float:
    """
    Largest deviation between the tensor step and its matrix form.

    :return: max |qvi_step(Q) - (r + gamma * P @ M @ Q)| over both players.
    """
    from core.iteration.qvi import qvi_step

    next_q1, next_q2, pair = qvi_step(game, q1, q2)
    transition = build_transition_matrix(game)
    selection = build_selection_matrix(pair.leader, pair.follower, game.dims)

    residual = 0.0
    for player, q, scalar in (
        (Player.LEADER, q1, next_q1),
        (Player.FOLLOWER, q2, next_q2),
    ):
        reward = flatten(QTensor(game.reward(player), player)).values
        vector = reward + switched_step(transition, selection, flatten(q).values, game.gamma)
        residual = max(residual, float(np.max(np.abs(flatten(scalar).values - vector))))
    logger.debug(f"Scalar/vector step residual: {residual:.3e}")
    return residual

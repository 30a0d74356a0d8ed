import enum
import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

ROW_SUM_TOLERANCE = 1e-9
REWARD_BOUND = 1.0


class GameDimensionError(ValueError):
    """Raised when a tensor does not match the declared game dimensions."""


class Player(enum.Enum):
    LEADER = "leader"
    FOLLOWER = "follower"


def _frozen(array, name: str, shape: tuple) -> np.ndarray:
    values = np.array(array, dtype=np.float64)
    if values.shape != shape:
        raise GameDimensionError(
            f"'{name}' has shape {values.shape}, expected {shape}"
        )
    values.flags.writeable = False
    return values


@dataclass(frozen=True, eq=False)
class MarkovGame:
    """
    Tabular two-player general-sum Markov game.

    States, leader actions and follower actions are 0-based. ``transition`` is
    indexed (s, a, b, s') and holds P(s'|s,a,b); the reward tensors are indexed
    (s, a, b). The game is immutable once built: the arrays are read-only.
    Constructing a game only checks shapes; stochasticity and reward bounds are
    reported by :func:`validate_game`.
    """

    num_states: int
    num_leader_actions: int
    num_follower_actions: int
    gamma: float
    transition: np.ndarray
    reward_leader: np.ndarray
    reward_follower: np.ndarray

    def __post_init__(self):
        for name in ("num_states", "num_leader_actions", "num_follower_actions"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise GameDimensionError(f"'{name}' must be a positive integer, got {value}")
            object.__setattr__(self, name, int(value))
        object.__setattr__(self, "gamma", float(self.gamma))

        dims = self.dims
        object.__setattr__(
            self, "transition", _frozen(self.transition, "transition", dims + (dims[0],))
        )
        object.__setattr__(
            self, "reward_leader", _frozen(self.reward_leader, "reward_leader", dims)
        )
        object.__setattr__(
            self, "reward_follower", _frozen(self.reward_follower, "reward_follower", dims)
        )

    @property
    def dims(self) -> tuple:
        return (self.num_states, self.num_leader_actions, self.num_follower_actions)

    def reward(self, player: Player) -> np.ndarray:
        return self.reward_leader if player is Player.LEADER else self.reward_follower

    def scaled(self, factor: float) -> "MarkovGame":
        """Copy of the game with both reward tensors multiplied by ``factor``."""
        return MarkovGame(
            self.num_states,
            self.num_leader_actions,
            self.num_follower_actions,
            self.gamma,
            self.transition,
            self.reward_leader * factor,
            self.reward_follower * factor,
        )

    def __eq__(self, other):
        if not isinstance(other, MarkovGame):
            return NotImplemented
        return (
            self.dims == other.dims
            and self.gamma == other.gamma
            and np.array_equal(self.transition, other.transition)
            and np.array_equal(self.reward_leader, other.reward_leader)
            and np.array_equal(self.reward_follower, other.reward_follower)
        )

    def __repr__(self):
        return f"MarkovGame(dims={self.dims}, gamma={self.gamma})"


@dataclass(frozen=True, eq=False)
class QTensor:
    """One player's Q-function over (state, leader action, follower action)."""

    values: np.ndarray
    player: Player = Player.LEADER

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 3:
            raise GameDimensionError(
                f"Q-tensor must be indexed (s, a, b), got {values.ndim} axes"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError(f"{self.player.value} Q-tensor contains non-finite entries")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, dims: tuple, player: Player = Player.LEADER) -> "QTensor":
        return cls(np.zeros(dims), player)

    @property
    def shape(self) -> tuple:
        return self.values.shape

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def distance(self, other: "QTensor") -> float:
        """Sup-norm of the difference of two tensors."""
        return float(np.max(np.abs(self.values - other.values)))

    def check_dims(self, game: MarkovGame) -> None:
        if self.shape != game.dims:
            raise GameDimensionError(
                f"{self.player.value} Q-tensor has shape {self.shape}, game expects {game.dims}"
            )

    def __eq__(self, other):
        if not isinstance(other, QTensor):
            return NotImplemented
        return self.player is other.player and np.array_equal(self.values, other.values)


@dataclass(frozen=True)
class Violation:
    kind: str
    index: tuple
    detail: str

    def __str__(self):
        return f"{self.kind} at {self.index}: {self.detail}"


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self):
        if self.ok:
            return "valid"
        return "\n".join(str(v) for v in self.violations)


def validate_game(game: MarkovGame) -> ValidationReport:
    """
    Check the model assumptions of a game.

    Every transition row must be a probability vector (entries in [0, 1],
    sum within 1e-9 of 1), every reward must satisfy |r| <= 1 and the
    discount factor must lie in [0, 1). Violations are returned, not raised.

    :param game: The game to check.
    :return: A report listing each violation with the offending index.
    """
    report = ValidationReport()

    if not 0.0 <= game.gamma < 1.0:
        report.violations.append(
            Violation("gamma_range", (), f"gamma={game.gamma!r} not in [0, 1)")
        )

    for name, tensor in (
        ("transition", game.transition),
        ("reward_leader", game.reward_leader),
        ("reward_follower", game.reward_follower),
    ):
        for index in zip(*np.nonzero(~np.isfinite(tensor))):
            report.violations.append(
                Violation("non_finite", tuple(int(i) for i in index), f"{name} entry is not finite")
            )

    transition = game.transition
    for index in zip(*np.nonzero((transition < 0.0) | (transition > 1.0))):
        index = tuple(int(i) for i in index)
        report.violations.append(
            Violation(
                "transition_entry",
                index,
                f"P(s'={index[3]}|s,a,b)={transition[index]!r} outside [0, 1]",
            )
        )

    row_sums = transition.sum(axis=3)
    for index in zip(*np.nonzero(~(np.abs(row_sums - 1.0) <= ROW_SUM_TOLERANCE))):
        index = tuple(int(i) for i in index)
        report.violations.append(
            Violation(
                "transition_row_sum",
                index,
                f"row sums to {row_sums[index]!r}, expected 1",
            )
        )

    for name, tensor in (
        ("reward_leader", game.reward_leader),
        ("reward_follower", game.reward_follower),
    ):
        for index in zip(*np.nonzero(np.abs(tensor) > REWARD_BOUND)):
            index = tuple(int(i) for i in index)
            report.violations.append(
                Violation("reward_bound", index, f"|{name}|={abs(tensor[index])!r} exceeds 1")
            )

    if report.ok:
        logger.debug(f"Game {game!r} passed validation.")
    else:
        logger.debug(f"Game {game!r} has {len(report.violations)} violation(s).")
    return report

from dataclasses import dataclass

import numpy as np


def _frozen_int(array, ndim: int, name: str) -> np.ndarray:
    values = np.array(array, dtype=np.int64)
    if values.ndim != ndim:
        raise ValueError(f"{name} must have {ndim} axes, got {values.ndim}")
    values.flags.writeable = False
    return values


@dataclass(frozen=True, eq=False)
class LeaderPolicy:
    """Deterministic leader policy S -> A, stored as a dense array of length |S|."""

    action_for_state: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "action_for_state", _frozen_int(self.action_for_state, 1, "leader policy")
        )

    def __call__(self, state: int) -> int:
        return int(self.action_for_state[state])

    @property
    def num_states(self) -> int:
        return self.action_for_state.shape[0]

    def key(self) -> tuple:
        return tuple(int(a) for a in self.action_for_state)

    def __eq__(self, other):
        if not isinstance(other, LeaderPolicy):
            return NotImplemented
        return np.array_equal(self.action_for_state, other.action_for_state)

    def __hash__(self):
        return hash(self.key())


@dataclass(frozen=True, eq=False)
class FollowerPolicy:
    """Deterministic follower policy S x A -> B, stored as a dense |S| x |A| array."""

    action_for_state_and_leader_action: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self,
            "action_for_state_and_leader_action",
            _frozen_int(self.action_for_state_and_leader_action, 2, "follower policy"),
        )

    def __call__(self, state: int, leader_action: int) -> int:
        return int(self.action_for_state_and_leader_action[state, leader_action])

    @property
    def num_states(self) -> int:
        return self.action_for_state_and_leader_action.shape[0]

    def along(self, leader: LeaderPolicy) -> np.ndarray:
        """The follower action on the leader's path, b(s, a(s)), for every state."""
        states = np.arange(self.num_states)
        return self.action_for_state_and_leader_action[states, leader.action_for_state]

    def key(self) -> tuple:
        return tuple(int(b) for b in self.action_for_state_and_leader_action.ravel())

    def __eq__(self, other):
        if not isinstance(other, FollowerPolicy):
            return NotImplemented
        return np.array_equal(
            self.action_for_state_and_leader_action,
            other.action_for_state_and_leader_action,
        )

    def __hash__(self):
        return hash(self.key())


@dataclass(frozen=True)
class PolicyPair:
    leader: LeaderPolicy
    follower: FollowerPolicy

    def __post_init__(self):
        if self.leader.num_states != self.follower.num_states:
            raise ValueError(
                f"leader policy covers {self.leader.num_states} states, "
                f"follower policy covers {self.follower.num_states}"
            )

    def check_dims(self, dims: tuple) -> None:
        num_states, num_leader_actions, num_follower_actions = dims
        leader = self.leader.action_for_state
        follower = self.follower.action_for_state_and_leader_action
        if leader.shape != (num_states,) or follower.shape != (num_states, num_leader_actions):
            raise ValueError(f"policy pair does not match game dimensions {dims}")
        if leader.min() < 0 or leader.max() >= num_leader_actions:
            raise ValueError(f"leader action out of range [0, {num_leader_actions})")
        if follower.min() < 0 or follower.max() >= num_follower_actions:
            raise ValueError(f"follower action out of range [0, {num_follower_actions})")

    def path_follower_actions(self) -> np.ndarray:
        return self.follower.along(self.leader)

    def key(self) -> tuple:
        """Lexicographic ordering key: leader actions, then follower table row-major."""
        return self.leader.key() + self.follower.key()

    def leader_label(self) -> str:
        """Compact 1-based digit string of the leader policy, e.g. ``"2"``."""
        return "".join(str(a + 1) for a in self.leader.key())

    def follower_label(self) -> str:
        """Compact 1-based follower table, one ``|A|``-digit group per state separated by ``/``."""
        rows = self.follower.action_for_state_and_leader_action
        return "/".join("".join(str(b + 1) for b in row) for row in rows)

    def path_label(self) -> str:
        """1-based (a(s), b(s, a(s))) per state, e.g. ``"(2,1)"``."""
        path = self.path_follower_actions()
        return " ".join(
            f"({a + 1},{b + 1})" for a, b in zip(self.leader.key(), path)
        )

    def __repr__(self):
        return f"PolicyPair(leader='{self.leader_label()}', follower='{self.follower_label()}')"

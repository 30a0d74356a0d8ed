import logging

import numpy as np

from core.models.game import MarkovGame, Player, QTensor

logger = logging.getLogger(__name__)

SINGLE_STATE_GAME = "paper-sec5"


def seeded_generator(seed: int, stream: int = 0) -> np.random.Generator:
    """
    Counter-based generator for a seed.

    ``Philox`` keyed by ``SeedSequence(seed)``; independent streams for the same
    seed are obtained by spawning, so the seed -> numbers mapping only depends
    on numpy's documented Philox and SeedSequence algorithms.

    :param seed: Non-negative integer seed.
    :param stream: Index of the spawned child stream.
    """
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    children = np.random.SeedSequence(seed).spawn(stream + 1)
    return np.random.Generator(np.random.Philox(children[stream]))


def random_game(seed: int, dims: tuple, gamma: float) -> MarkovGame:
    """
    Generate a random game that satisfies the model assumptions.

    Rewards are uniform in [-1, 1]; each transition row is a vector of
    independent uniform(0, 1) draws normalized to sum 1.

    :param seed: Seed; the same seed and dims give an identical game.
    :param dims: (|S|, |A|, |B|), all positive.
    :param gamma: Discount factor in [0, 1).
    """
    num_states, num_leader_actions, num_follower_actions = dims
    if min(dims) < 1:
        raise ValueError(f"dimensions must be positive, got {dims}")
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must be in [0, 1), got {gamma}")

    rng = seeded_generator(seed)
    shape = (num_states, num_leader_actions, num_follower_actions)
    reward_leader = rng.uniform(-1.0, 1.0, size=shape)
    reward_follower = rng.uniform(-1.0, 1.0, size=shape)
    weights = rng.uniform(0.0, 1.0, size=shape + (num_states,))
    # uniform(0, 1) can return exactly 0; keep rows strictly positive
    weights = np.maximum(weights, np.finfo(np.float64).tiny)
    transition = weights / weights.sum(axis=3, keepdims=True)

    logger.debug(f"Generated random game seed={seed} dims={shape} gamma={gamma}")
    return MarkovGame(
        num_states,
        num_leader_actions,
        num_follower_actions,
        gamma,
        transition,
        reward_leader,
        reward_follower,
    )


def single_state_game() -> MarkovGame:
    """
    Single-state game with two actions per player and a self-loop, gamma=0.8.

    Its unique Stackelberg pair is a=2, b(.,1)=2, b(.,2)=1 (1-based).
    """
    reward_leader = np.array([[[0.8, 0.2], [0.5, 0.9]]])
    reward_follower = np.array([[[0.3, 0.9], [0.8, 0.1]]])
    transition = np.ones((1, 2, 2, 1))
    return MarkovGame(1, 2, 2, 0.8, transition, reward_leader, reward_follower)


BUILTIN_GAMES = {SINGLE_STATE_GAME: single_state_game}


def builtin_game(name: str) -> MarkovGame:
    try:
        return BUILTIN_GAMES[name]()
    except KeyError:
        raise ValueError(
            f"unknown builtin game '{name}', available: {', '.join(sorted(BUILTIN_GAMES))}"
        ) from None


def random_initial_q(seed: int, dims: tuple) -> tuple:
    """
    Initial tensors for a seed: Q1_0 then Q2_0, each uniform in [-1, 1].

    Uses stream 1 of the seed so that it never overlaps with ``random_game``.
    """
    rng = seeded_generator(seed, stream=1)
    q1 = rng.uniform(-1.0, 1.0, size=dims)
    q2 = rng.uniform(-1.0, 1.0, size=dims)
    return QTensor(q1, Player.LEADER), QTensor(q2, Player.FOLLOWER)

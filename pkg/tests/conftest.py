import numpy as np
import pytest

from core.data.game_generator import SINGLE_STATE_GAME, builtin_game, random_game, seeded_generator
from core.oracle.equilibrium import enumerate_equilibria, select_reference

GAMMAS = (0.5, 0.8, 0.95)


@pytest.fixture
def sec5_game():
    return builtin_game(SINGLE_STATE_GAME)


@pytest.fixture(scope="session")
def sec5_reference():
    reference, multiplicity = select_reference(enumerate_equilibria(builtin_game(SINGLE_STATE_GAME)))
    assert multiplicity == 1
    return reference


@pytest.fixture
def sec5_q_star():
    """Closed-form equilibrium tensors of the builtin single-state game."""
    q1 = np.array([[[2.8, 2.2], [2.5, 2.9]]])
    q2 = np.array([[[3.5, 4.1], [4.0, 3.3]]])
    return q1, q2


def _random_games(count, max_states=5, max_actions=4, seed=0):
    rng = seeded_generator(seed, stream=2)
    for i in range(count):
        dims = (
            int(rng.integers(1, max_states + 1)),
            int(rng.integers(1, max_actions + 1)),
            int(rng.integers(1, max_actions + 1)),
        )
        yield i, random_game(1000 + i, dims, GAMMAS[i % len(GAMMAS)])


@pytest.fixture
def random_games():
    """Factory of seeded random games: ``random_games(count, max_states, max_actions)``."""
    return _random_games

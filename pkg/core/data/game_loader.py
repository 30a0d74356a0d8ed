import hashlib
import json
import logging
import os

import numpy as np

from core.models.game import GameDimensionError, MarkovGame, Player, QTensor
from core.utils.atomic_write import write_text_atomic

logger = logging.getLogger(__name__)

FIELDS = (
    "num_states",
    "num_leader_actions",
    "num_follower_actions",
    "gamma",
    "transition",
    "reward_leader",
    "reward_follower",
)


class GameFormatError(ValueError):
    """Raised when a game document cannot be parsed."""

    def __init__(self, message: str, line: int = None, column: int = None, field: str = None):
        location = []
        if line is not None:
            location.append(f"line {line}")
        if column is not None:
            location.append(f"column {column}")
        if field is not None:
            location.append(f"field '{field}'")
        prefix = f"{', '.join(location)}: " if location else ""
        super().__init__(f"{prefix}{message}")
        self.line = line
        self.column = column
        self.field = field


def format_real(value: float) -> str:
    """Decimal form with 17 significant digits; parses back to the same double."""
    return format(float(value), ".17g")


def _render_array(array: np.ndarray, indent: int) -> str:
    if array.ndim == 1:
        return "[" + ", ".join(format_real(x) for x in array) + "]"
    pad = " " * (indent + 2)
    inner = (",\n" + pad).join(_render_array(sub, indent + 2) for sub in array)
    return "[\n" + pad + inner + "\n" + " " * indent + "]"


def _nested_array(data, name: str, shape: tuple) -> np.ndarray:
    def walk(node, depth, path):
        if depth == len(shape):
            if isinstance(node, bool) or not isinstance(node, (int, float)):
                raise GameFormatError(f"expected a number at {path}", field=name)
            return float(node)
        if not isinstance(node, list):
            raise GameFormatError(f"expected an array at {path}", field=name)
        if len(node) != shape[depth]:
            raise GameDimensionError(
                f"field '{name}' at {path} has length {len(node)}, expected {shape[depth]}"
            )
        return [walk(child, depth + 1, f"{path}[{i}]") for i, child in enumerate(node)]

    return np.array(walk(data, 0, name), dtype=np.float64).reshape(shape)


def save_game(game: MarkovGame) -> str:
    """
    Serialize a game to the JSON game format.

    Reals are written with 17 significant digits so that ``load_game`` restores
    bit-identical tensors.
    """
    lines = [
        "{",
        f'  "num_states": {game.num_states},',
        f'  "num_leader_actions": {game.num_leader_actions},',
        f'  "num_follower_actions": {game.num_follower_actions},',
        f'  "gamma": {format_real(game.gamma)},',
        f'  "transition": {_render_array(game.transition, 2)},',
        f'  "reward_leader": {_render_array(game.reward_leader, 2)},',
        f'  "reward_follower": {_render_array(game.reward_follower, 2)}',
        "}",
    ]
    return "\n".join(lines) + "\n"


def load_game(text: str) -> MarkovGame:
    """
    Parse a JSON game document.

    :param text: Document in the game file format.
    :return: The parsed game (not validated; see ``validate_game``).
    :raises GameFormatError: On malformed JSON or missing/ill-typed fields.
    :raises GameDimensionError: When an array does not match the declared sizes.
    """
    if not text or not text.strip():
        raise GameFormatError("empty game document", line=1, column=1)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise GameFormatError(e.msg, line=e.lineno, column=e.colno) from e

    if not isinstance(data, dict):
        raise GameFormatError("top-level value must be an object", line=1, column=1)
    for name in FIELDS:
        if name not in data:
            raise GameFormatError("missing required field", field=name)

    sizes = []
    for name in FIELDS[:3]:
        value = data[name]
        if isinstance(value, bool) or not isinstance(value, int) or value < 1:
            raise GameFormatError(f"expected a positive integer, got {value!r}", field=name)
        sizes.append(value)
    gamma = data["gamma"]
    if isinstance(gamma, bool) or not isinstance(gamma, (int, float)):
        raise GameFormatError(f"expected a number, got {gamma!r}", field="gamma")

    dims = tuple(sizes)
    return MarkovGame(
        *dims,
        gamma=float(gamma),
        transition=_nested_array(data["transition"], "transition", dims + (dims[0],)),
        reward_leader=_nested_array(data["reward_leader"], "reward_leader", dims),
        reward_follower=_nested_array(data["reward_follower"], "reward_follower", dims),
    )


def load_initial_q(text: str, dims: tuple) -> tuple:
    """
    Parse initial tensors from a JSON object with ``q_leader`` and
    ``q_follower``, each nested [s][a][b].

    :return: (Q1_0, Q2_0)
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise GameFormatError(e.msg, line=e.lineno, column=e.colno) from e
    if not isinstance(data, dict):
        raise GameFormatError("top-level value must be an object", line=1, column=1)
    tensors = []
    for name, player in (("q_leader", Player.LEADER), ("q_follower", Player.FOLLOWER)):
        if name not in data:
            raise GameFormatError("missing required field", field=name)
        tensors.append(QTensor(_nested_array(data[name], name, dims), player))
    return tuple(tensors)


def game_hash(game: MarkovGame) -> str:
    return hashlib.sha256(save_game(game).encode("utf-8")).hexdigest()


class GameLoaderError(Exception):
    """Raised when a game file cannot be read or parsed."""


class GameLoader:
    """
    Loads and saves game files, resolving the builtin game names.
    """

    def load(self, source: str) -> MarkovGame:
        """
        Load a game from a builtin name or a JSON file path.

        :param source: Builtin name (e.g. ``paper-sec5``) or path to a game file.
        :return: Parsed game.
        :raises GameLoaderError: If the file is missing or malformed.
        """
        from core.data.game_generator import BUILTIN_GAMES, builtin_game

        if source in BUILTIN_GAMES:
            logger.debug(f"Using builtin game: {source}")
            return builtin_game(source)

        logger.debug(f"Loading game from file: {source}")
        try:
            with open(source, "r") as file:
                text = file.read()
            game = load_game(text)
            logger.debug(f"Game loaded: {game!r}")
            return game
        except FileNotFoundError:
            error_message = f"Error: The specified game file '{source}' does not exist."
            logger.error(error_message)
            raise GameLoaderError(error_message)
        except (GameFormatError, GameDimensionError) as e:
            error_message = f"Malformed game file '{source}': {e}"
            logger.error(error_message)
            raise GameLoaderError(error_message)

    def save(self, game: MarkovGame, output_file: str) -> None:
        logger.debug(f"Saving game to file: {output_file}")
        folder = os.path.dirname(output_file)
        if folder:
            os.makedirs(folder, exist_ok=True)
        write_text_atomic(output_file, save_game(game))

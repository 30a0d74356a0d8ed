import json
import logging
from typing import Optional

from core.data.game_generator import random_game
from core.data.game_loader import GameLoader, GameLoaderError, game_hash
from core.data.trace_writer import write_json
from core.models.game import validate_game
from core.oracle.equilibrium import (
    DEFAULT_ENUMERATION_LIMIT,
    EnumerationBudgetError,
    candidate_count,
    certificate_to_dict,
    closed_form_single_state,
    enumerate_equilibria,
    select_reference,
)

logger = logging.getLogger(__name__)


def oracle_report(source: str, limit: int = DEFAULT_ENUMERATION_LIMIT) -> dict:
    """
    Enumerate the verified Stackelberg pairs of a game.

    Single-state self-loop games also report the gap between the enumerated
    reference tensors and the closed form.

    :raises EnumerationBudgetError: If the game is too large to enumerate.
    """
    game = GameLoader().load(source)
    certificates = enumerate_equilibria(game, limit)
    reference, multiplicity = select_reference(certificates)
    report = {
        "game": source,
        "game_hash": game_hash(game),
        "candidates": candidate_count(game.dims),
        "multiplicity": multiplicity,
        "equilibria": [
            certificate_to_dict(c, multiplicity) for c in sorted(certificates, key=lambda c: c.pair.key())
        ],
        "closed_form_gap": None,
    }
    if reference is not None:
        try:
            q1, q2, _ = closed_form_single_state(game)
        except ValueError:
            pass
        else:
            report["closed_form_gap"] = max(q1.distance(reference.q1_star), q2.distance(reference.q2_star))
    return report


def cmd_oracle(source: str, limit: int = DEFAULT_ENUMERATION_LIMIT, output_file: Optional[str] = None) -> int:
    """
    Print the certificate report; exit code 1 when no verified pair exists.
    """
    try:
        report = oracle_report(source, limit)
    except EnumerationBudgetError as e:
        logger.error(f"{e}; raise --limit to enumerate this game")
        return 1

    print(json.dumps(report, indent=2, sort_keys=True))
    if output_file:
        write_json(output_file, report)
        print("Saved certificate report to:", output_file)

    if not report["equilibria"]:
        logger.warning(f"No verified Stackelberg equilibrium in '{source}'")
        return 1
    logger.info(f"{report['multiplicity']} verified Stackelberg pair(s) in '{source}'")
    return 0


def cmd_gen(seed: int, dims: tuple, gamma: float, output_file: str) -> int:
    game = random_game(seed, dims, gamma)
    GameLoader().save(game, output_file)
    print("Saved game to:", output_file)
    return 0


def cmd_check(source: str) -> int:
    """Validate a game file; prints each violation and returns 1 if there are any."""
    try:
        game = GameLoader().load(source)
    except GameLoaderError as e:
        print(e)
        return 1
    report = validate_game(game)
    if report.ok:
        print(f"{source}: valid {game!r}")
        return 0
    print(f"{source}: {len(report.violations)} violation(s)")
    for violation in report.violations:
        print(f"  {violation}")
    return 1

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

from core.analysis.comparison import ComparisonTrace, run_comparison, theorem_bound, upper_bound_norm
from core.analysis.epsilon import epsilon_existence_bound, running_max
from core.config.run_config import EPS_ADAPTIVE, EPS_FIXED, RunConfig
from core.data.game_generator import random_initial_q
from core.data.game_loader import GameLoader, game_hash, load_initial_q
from core.data.trace_writer import TRACE_COLUMNS, write_csv, write_json
from core.iteration.cycle_detector import detect_cycle
from core.iteration.qvi import JACOBI, run_qvi
from core.models.game import MarkovGame, Player, QTensor, validate_game
from core.models.trace import IterationTrace
from core.oracle.equilibrium import EquilibriumCertificate, certificate_to_dict, find_reference

logger = logging.getLogger(__name__)

BOUND_TOLERANCE = 1e-9


class ExperimentError(Exception):
    """Raised when a run cannot be set up (bad game, bad initial tensors)."""


@dataclass
class SeedResult:
    seed: int
    trace: IterationTrace
    comparison: Optional[ComparisonTrace]
    rows: list
    summary: dict


@dataclass(frozen=True)
class RunContext:
    """Everything shared by the seeds of one run."""

    game: MarkovGame
    config: RunConfig
    reference: Optional[EquilibriumCertificate]
    multiplicity: int
    method: str


def initial_tensors(init: str, seed: int, dims: tuple) -> tuple:
    """
    Q_0 for a seed.

    :param init: ``uniform`` (seeded, entries in [-1, 1]), ``zero`` or
        ``file:<path>`` (JSON with ``q_leader`` and ``q_follower``).
    """
    if init == "uniform":
        return random_initial_q(seed, dims)
    if init == "zero":
        return QTensor.zeros(dims, Player.LEADER), QTensor.zeros(dims, Player.FOLLOWER)
    path = init[len("file:") :]
    try:
        with open(path, "r") as file:
            return load_initial_q(file.read(), dims)
    except FileNotFoundError:
        raise ExperimentError(f"Error: The specified initial Q file '{path}' does not exist.") from None
    except ValueError as e:
        raise ExperimentError(f"Malformed initial Q file '{path}': {e}") from e


def certified_schedule(config: RunConfig, eps_values: list) -> list:
    """The eps each k is certified with: eps_global, eps_k or the fixed value."""
    if config.eps.kind == EPS_ADAPTIVE:
        return list(eps_values)
    if config.eps.kind == EPS_FIXED:
        return [config.eps.value] * len(eps_values)
    return [max(eps_values)] * len(eps_values)


def trace_rows(
    trace: IterationTrace, gamma: float, certified: Optional[list], comparison: Optional[ComparisonTrace]
) -> list:
    """
    One row per iteration with the columns of ``TRACE_COLUMNS``.

    Bound and comparison columns stay empty without a reference equilibrium.
    """
    rows = []
    eps_values = [r.epsilon.eps_k for r in trace.records] if certified is not None else []
    eps_global = max(eps_values) if eps_values else None
    system_eps = running_max([r.eps for r in comparison.records]) if comparison is not None else []

    for record in trace.records:
        k = record.k
        row = {
            "k": k,
            "err_leader": record.err_leader,
            "err_follower": record.err_follower,
            "norm_q1": record.norm_q1,
            "norm_q2": record.norm_q2,
            "leader_policy": record.pair.leader_label(),
            "follower_policy": record.pair.follower_label(),
        }
        if certified is not None:
            row["eps_k"] = eps_values[k]
            row["bound_eps_k"] = theorem_bound(k, gamma, eps_values[k])
            row["bound_eps_global"] = theorem_bound(k, gamma, eps_global)
            row["bound_theorem_global"] = row["bound_eps_global"]
            row["bound_theorem_adaptive"] = row["bound_eps_k"]
            row["bound_certified"] = theorem_bound(k, gamma, certified[k])
        if comparison is not None:
            system = comparison[k]
            row["bound_system"] = upper_bound_norm(k, gamma, system_eps[k])
            row["err_upper"] = system.err_upper
            row["err_lower"] = system.err_lower
            row["sandwich_violation_upper"] = system.violation_upper
            row["sandwich_violation_lower"] = system.violation_lower
        rows.append(row)
    return rows


def _within(values, bounds) -> bool:
    return all(value <= bound + BOUND_TOLERANCE for value, bound in zip(values, bounds))


def summarize_seed(context: RunContext, result: SeedResult, certified: Optional[list]) -> dict:
    game, config, trace = context.game, context.config, result.trace
    gamma = game.gamma
    last = trace[-1]
    summary = {
        "seed": result.seed,
        "iterations": config.iterations,
        "update_order": config.update_order,
        "eps_mode": str(config.eps),
        "final_norm_q1": last.norm_q1,
        "final_norm_q2": last.norm_q2,
        "converged_at": trace.converged_at,
        "cycle": detect_cycle(trace, config.cycle_window).to_dict() if len(trace) >= 2 else None,
        "norms_bounded": all(
            max(r.norm_q1, r.norm_q2) <= 1.0 / (1.0 - gamma) + BOUND_TOLERANCE for r in trace.records
        ),
    }
    if certified is None:
        summary.update(
            {
                "final_err_leader": None,
                "final_err_follower": None,
                "eps_global": None,
                "bound_satisfied": None,
                "bound_is_certified": False,
                "sandwich": None,
            }
        )
        return summary

    eps_values = [r.epsilon.eps_k for r in trace.records]
    bounds = [row["bound_certified"] for row in result.rows]
    ceiling = epsilon_existence_bound(gamma)
    summary.update(
        {
            "final_err_leader": last.err_leader,
            "final_err_follower": last.err_follower,
            "eps_global": max(eps_values),
            "final_eps_k": eps_values[-1],
            "asymptotic_bound": 3.0 * certified[-1] / (1.0 - gamma),
            "eps_within_existence_bound": all(0.0 <= e <= ceiling + BOUND_TOLERANCE for e in eps_values),
            "bound_satisfied": {
                "leader": _within([r.err_leader for r in trace.records], bounds),
                "follower": _within([r.err_follower for r in trace.records], bounds),
            },
            "bound_is_certified": config.eps.kind != EPS_ADAPTIVE and config.update_order == JACOBI,
            "sandwich": {
                "player": result.comparison.player.value,
                "max_violation": result.comparison.max_violation,
                "holds": result.comparison.max_violation <= BOUND_TOLERANCE,
                "system_bound_satisfied": _within(
                    [max(r.err_upper, r.err_lower) for r in result.comparison.records],
                    [row["bound_system"] for row in result.rows],
                ),
            },
        }
    )
    return summary


def run_seed(context: RunContext, seed: int) -> SeedResult:
    """Run QVI for one seed, then the comparison systems and the bound checks."""
    game, config, reference = context.game, context.config, context.reference
    q1_0, q2_0 = initial_tensors(config.init, seed, game.dims)
    logger.debug(f"Seed {seed}: ||Q1_0||={q1_0.sup_norm():.6g}, ||Q2_0||={q2_0.sup_norm():.6g}")
    trace = run_qvi(
        game,
        q1_0,
        q2_0,
        config.iterations,
        reference=reference,
        eps_iterates_only=config.eps_iterates_only,
        update_order=config.update_order,
        seed=seed,
    )

    certified = comparison = None
    if reference is not None:
        certified = certified_schedule(config, [r.epsilon.eps_k for r in trace.records])
        eps = certified if config.eps.kind == EPS_ADAPTIVE else certified[0]
        comparison = run_comparison(game, trace, reference, eps, Player.LEADER)

    result = SeedResult(seed, trace, comparison, trace_rows(trace, game.gamma, certified, comparison), {})
    result.summary = summarize_seed(context, result, certified)
    return result


def trace_path(output_dir: str, seed: int) -> str:
    return os.path.join(output_dir, f"trace_seed{seed}.csv")


def seed_summary_path(output_dir: str, seed: int) -> str:
    return os.path.join(output_dir, f"summary_seed{seed}.json")


def _run_and_write(context: RunContext, seed: int) -> SeedResult:
    result = run_seed(context, seed)
    output_dir = context.config.output_dir
    write_csv(trace_path(output_dir, seed), TRACE_COLUMNS, result.rows)
    write_json(seed_summary_path(output_dir, seed), result.summary)
    return result


def prepare_context(config: RunConfig) -> RunContext:
    """
    Load and validate the game and find the reference equilibrium.

    :raises ExperimentError: If the game violates the model assumptions.
    """
    game = GameLoader().load(config.game)
    report = validate_game(game)
    if not report.ok:
        for violation in report.violations:
            logger.error(f"Invalid game: {violation}")
        raise ExperimentError(f"game '{config.game}' violates {len(report.violations)} model assumption(s)")

    reference, multiplicity, method = find_reference(game, config.enumeration_limit)
    if reference is None:
        logger.warning("No verified Stackelberg equilibrium; bounds and comparison systems are skipped")
    else:
        logger.info(
            f"Reference equilibrium {reference.pair.path_label()} via {method} "
            f"({multiplicity} verified pair(s))"
        )
    if config.update_order != JACOBI:
        logger.warning(f"Update order '{config.update_order}' is not covered by the finite-time bound")
    return RunContext(game, config, reference, multiplicity, method)


def run_seeds(context: RunContext) -> list:
    """Run every configured seed, possibly on a thread pool; results are ordered by seed."""
    os.makedirs(context.config.output_dir, exist_ok=True)
    seeds = list(context.config.seeds)
    if context.config.workers == 1:
        return [_run_and_write(context, seed) for seed in seeds]
    with ThreadPoolExecutor(max_workers=context.config.workers) as pool:
        return list(pool.map(lambda seed: _run_and_write(context, seed), seeds))


def run_summary(context: RunContext, results: list) -> dict:
    reference = None
    if context.reference is not None:
        reference = certificate_to_dict(context.reference, context.multiplicity)
        reference["method"] = context.method
    return {
        "config": context.config.to_dict(),
        "game_hash": game_hash(context.game),
        "gamma": context.game.gamma,
        "reference": reference,
        "seeds": [result.summary for result in results],
    }


def seed_failures(summary: dict) -> list:
    """Descriptions of every certified check a seed failed."""
    failures = []
    if summary["bound_satisfied"] is None:
        return ["no reference equilibrium"]
    if summary["bound_is_certified"]:
        for player, ok in summary["bound_satisfied"].items():
            if not ok:
                failures.append(f"{player} error exceeds the finite-time bound")
    if not summary["sandwich"]["holds"]:
        failures.append(f"sandwich violated by {summary['sandwich']['max_violation']:.3e}")
    return failures


def cmd_run(config: RunConfig) -> int:
    """
    Run QVI for every seed and write one trace CSV and summary JSON per seed,
    then ``summary.json`` for the whole run.

    :return: 0 when every certified check holds, 1 otherwise.
    """
    context = prepare_context(config)
    results = run_seeds(context)
    for result in results:
        print("Saved trace to:", trace_path(config.output_dir, result.seed))

    summary_file = os.path.join(config.output_dir, "summary.json")
    write_json(summary_file, run_summary(context, results))
    print("Saved summary to:", summary_file)

    exit_code = 0
    for result in results:
        for failure in seed_failures(result.summary):
            logger.warning(f"Seed {result.seed}: {failure}")
            exit_code = 1
    return exit_code

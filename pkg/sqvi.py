from cli.parser_sqvi import parse_arguments
from core.config.run_config import (
    RunConfig,
    RunConfigError,
    RunConfigManager,
    parse_eps_mode,
    parse_seeds,
)
from core.data.game_loader import GameLoaderError
from core.experiment.figures import cmd_experiment
from core.experiment.game_commands import cmd_check, cmd_gen, cmd_oracle
from core.experiment.runner import ExperimentError, cmd_run
from core.iteration.qvi import GAUSS_SEIDEL
from core.logging_config import configure_logging
from core.oracle.equilibrium import DEFAULT_ENUMERATION_LIMIT, PolicyEvaluationError
import os
import sys
import logging

logger = logging.getLogger(__name__)

USAGE_ERROR = 2


def build_run_config(args) -> RunConfig:
    """
    Merge the run configuration: command-line flags override the environment,
    which overrides the YAML file.

    :param args: Parsed ``run`` / ``experiment`` arguments.
    :raises RunConfigError: If a flag or the file holds an invalid value.
    """
    config = RunConfigManager(args.config).load()
    return config.with_overrides(
        game=args.game,
        iterations=args.iters,
        seeds=parse_seeds(args.seeds) if args.seeds is not None else None,
        init=args.init,
        eps=parse_eps_mode(args.eps) if args.eps is not None else None,
        eps_iterates_only=args.eps_iterates_only,
        update_order=GAUSS_SEIDEL if args.gauss_seidel else None,
        output_dir=args.out or os.environ.get("SQVI_OUT_DIR") or None,
        cycle_window=args.window,
        workers=args.workers,
        enumeration_limit=args.limit,
    )


def main(argv=None) -> int:
    """
    Entry point of the sqvi tool.

    :param argv: Argument list (defaults to ``sys.argv[1:]``).
    :return: Exit code: 0 on success, 1 on a violated check, a missing
        equilibrium or a failure, 2 on a usage error.
    """
    args = parse_arguments(argv)

    # Configure logging at startup
    configure_logging(level=logging.DEBUG if args.verbose else logging.INFO)
    logger.debug(f"Starting sqvi {args.command}.")

    try:
        if args.command == "run":
            return cmd_run(build_run_config(args))
        if args.command == "experiment":
            return cmd_experiment(build_run_config(args))
        if args.command == "oracle":
            limit = DEFAULT_ENUMERATION_LIMIT if args.limit is None else args.limit
            return cmd_oracle(args.game, limit, args.output)
        if args.command == "gen":
            return cmd_gen(args.seed, args.dims, args.gamma, args.output)
        return cmd_check(args.game)
    except RunConfigError as e:
        logger.error(f"Invalid run configuration: {e}")
        return USAGE_ERROR
    except GameLoaderError:
        logger.error("Failed to load game. Exiting.")
        return 1
    except (ExperimentError, PolicyEvaluationError, ValueError) as e:
        logger.error(str(e))
        return 1


if __name__ == "__main__":
    sys.exit(main())

import argparse


def _dims(text: str) -> tuple:
    try:
        dims = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"dims must be S,A,B integers, got '{text}'") from None
    if len(dims) != 3 or min(dims) < 1:
        raise argparse.ArgumentTypeError(f"dims must be three positive integers, got '{text}'")
    return dims


def _gamma(text: str) -> float:
    try:
        gamma = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"gamma must be a number, got '{text}'") from None
    if not 0.0 <= gamma < 1.0:
        raise argparse.ArgumentTypeError(f"gamma must lie in [0, 1), got {text}")
    return gamma


def _seed(text: str) -> int:
    try:
        seed = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got '{text}'") from None
    if seed < 0:
        raise argparse.ArgumentTypeError(f"seed must be non-negative, got {seed}")
    return seed


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--game", help="Builtin game name (paper-sec5) or path to a game JSON file.")
    parser.add_argument("--iters", type=int, help="Number of QVI iterations K.")
    parser.add_argument("--seeds", help="Seeds: a range '0..4', a list '0,2,5' or one integer.")
    parser.add_argument("--init", help="Initial Q-tensors: uniform, zero or file:<path>.")
    parser.add_argument("--eps", help="Slack certifying the bound: global, adaptive or fixed:<value>.")
    parser.add_argument(
        "--eps-iterates-only",
        action="store_true",
        default=None,
        help="Exclude the equilibrium slacks from eps_k.",
    )
    parser.add_argument(
        "--gauss-seidel",
        action="store_true",
        help="Recompute the follower policy from Q2_{k+1} before the leader update (not covered by the bound).",
    )
    parser.add_argument("--out", help="Output directory (overrides SQVI_OUT_DIR and the config file).")
    parser.add_argument("--window", type=int, help="Largest policy cycle period searched for.")
    parser.add_argument("--workers", type=int, help="Number of seeds run in parallel.")
    parser.add_argument("--limit", type=int, help="Enumeration budget of the equilibrium oracle.")
    parser.add_argument("--config", help="Run configuration YAML file.")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Stackelberg Q-value iteration with finite-time error bounds."
    )
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="Enable verbose output."
    )
    # accepted after the subcommand too, without resetting the top-level value
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser(
        "run", parents=[common], help="Run QVI per seed and write trace CSVs and summaries."
    )
    _add_run_options(run)

    experiment = commands.add_parser(
        "experiment",
        parents=[common],
        help="Reproduce the single-state experiment as figure datasets."
    )
    _add_run_options(experiment)

    oracle = commands.add_parser(
        "oracle", parents=[common], help="Enumerate the verified Stackelberg equilibria of a game."
    )
    oracle.add_argument("--game", required=True, help="Builtin game name or game JSON file.")
    oracle.add_argument("--limit", type=int, default=None, help="Enumeration budget.")
    oracle.add_argument("-o", "--output", help="Also write the certificate report to this JSON file.")

    gen = commands.add_parser("gen", parents=[common], help="Generate a random game file.")
    gen.add_argument("--seed", type=_seed, required=True, help="Generator seed.")
    gen.add_argument("--dims", type=_dims, required=True, help="Sizes S,A,B, e.g. 3,2,2.")
    gen.add_argument("--gamma", type=_gamma, required=True, help="Discount factor in [0, 1).")
    gen.add_argument("-o", "--output", required=True, help="The output game JSON file.")

    check = commands.add_parser(
        "check", parents=[common], help="Validate a game file against the model assumptions."
    )
    check.add_argument("--game", required=True, help="Builtin game name or game JSON file.")
    return parser


def parse_arguments(argv=None):
    """
    Parse command-line arguments for the sqvi tool.

    :param argv: Argument list (defaults to ``sys.argv[1:]``).
    :return: argparse.Namespace object with parsed arguments.
    """
    return build_parser().parse_args(argv)

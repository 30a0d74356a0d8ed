"""
Figure datasets of the single-state experiment.

Three plot-ready CSVs are produced from the per-seed runs: the eps_k curves
across seeds, and for each player the sup-norm error against the
finite-time bound under eps_global and under the adaptive eps_k.
"""
import logging
import os

import numpy as np

from core.analysis.comparison import theorem_bound
from core.config.run_config import RunConfig
from core.data.trace_writer import write_csv, write_json
from core.experiment.runner import (
    BOUND_TOLERANCE,
    ExperimentError,
    prepare_context,
    run_seeds,
    run_summary,
)

logger = logging.getLogger(__name__)

EPSILON_FILE = "fig1_epsilon.csv"
LEADER_ERROR_FILE = "fig2_leader_error.csv"
FOLLOWER_ERROR_FILE = "fig3_follower_error.csv"


def epsilon_dataset(eps: np.ndarray) -> tuple:
    """
    :param eps: eps_k per seed, shape (seeds, K + 1).
    :return: (columns, rows) with the max, mean and min curve and the eps_global line.
    """
    eps_global = float(eps.max())
    columns = ("k", "eps_max", "eps_mean", "eps_min", "eps_global")
    rows = [
        {
            "k": k,
            "eps_max": float(eps[:, k].max()),
            "eps_mean": float(eps[:, k].mean()),
            "eps_min": float(eps[:, k].min()),
            "eps_global": eps_global,
        }
        for k in range(eps.shape[1])
    ]
    return columns, rows


def error_dataset(errors: np.ndarray, eps: np.ndarray, seeds: list, gamma: float) -> tuple:
    """
    Error curves of one player with the global and adaptive bounds.

    The adaptive bounds at k use the largest and the mean eps_k over seeds.
    """
    eps_global = float(eps.max())
    columns = ("k",) + tuple(f"err_seed{seed}" for seed in seeds) + (
        "err_max",
        "err_mean",
        "bound_global",
        "bound_adaptive_max",
        "bound_adaptive_mean",
    )
    rows = []
    for k in range(errors.shape[1]):
        row = {f"err_seed{seed}": float(errors[i, k]) for i, seed in enumerate(seeds)}
        row.update(
            {
                "k": k,
                "err_max": float(errors[:, k].max()),
                "err_mean": float(errors[:, k].mean()),
                "bound_global": theorem_bound(k, gamma, eps_global),
                "bound_adaptive_max": theorem_bound(k, gamma, float(eps[:, k].max())),
                "bound_adaptive_mean": theorem_bound(k, gamma, float(eps[:, k].mean())),
            }
        )
        rows.append(row)
    return columns, rows


def qualitative_checks(eps: np.ndarray, leader: np.ndarray, follower: np.ndarray, gamma: float, burn_in: int) -> dict:
    """
    Shape checks on the figure data.

    :return: Mapping of check name to bool, plus the late eps_k and the
        asymptotic bound values they rest on.
    """
    eps_max = eps.max(axis=0)
    eps_mean = eps.mean(axis=0)
    eps_global = float(eps.max())
    steps = eps.shape[1]
    bound_global = np.array([theorem_bound(k, gamma, eps_global) for k in range(steps)])
    bound_adaptive_max = np.array([theorem_bound(k, gamma, float(e)) for k, e in enumerate(eps_max)])
    bound_adaptive_mean = np.array([theorem_bound(k, gamma, float(e)) for k, e in enumerate(eps_mean)])

    tail = eps_max[burn_in:]
    return {
        "eps_nonincreasing_after_burn_in": bool(np.all(np.diff(tail) <= 1e-12)),
        "max_curve_dominates_mean": bool(np.all(eps_max >= eps_mean - 1e-15)),
        "errors_below_global_bound": bool(
            np.all(leader <= bound_global + BOUND_TOLERANCE) and np.all(follower <= bound_global + BOUND_TOLERANCE)
        ),
        "errors_below_adaptive_max_bound": bool(
            np.all(leader <= bound_adaptive_max + BOUND_TOLERANCE)
            and np.all(follower <= bound_adaptive_max + BOUND_TOLERANCE)
        ),
        "errors_below_adaptive_mean_bound": bool(
            np.all(leader <= bound_adaptive_mean + BOUND_TOLERANCE)
            and np.all(follower <= bound_adaptive_mean + BOUND_TOLERANCE)
        ),
        "bounds_non_vanishing": bool(bound_global[-1] > 0.0 and bound_adaptive_max[-1] > 0.0),
        "eps_global": eps_global,
        "late_eps": float(eps_max[-1]),
        "asymptotic_bound_global": 3.0 * eps_global / (1.0 - gamma),
        "asymptotic_bound_adaptive": 3.0 * float(eps_max[-1]) / (1.0 - gamma),
    }


REQUIRED_CHECKS = (
    "eps_nonincreasing_after_burn_in",
    "max_curve_dominates_mean",
    "errors_below_global_bound",
    "bounds_non_vanishing",
)


def cmd_experiment(config: RunConfig) -> int:
    """
    Reproduce the multi-seed experiment and write the figure datasets.

    :return: 0 when every qualitative check holds, 1 otherwise.
    """
    context = prepare_context(config)
    if context.reference is None:
        raise ExperimentError("the experiment needs a verified reference equilibrium")
    results = run_seeds(context)

    def matrix(getter):
        return np.array([[getter(r) for r in result.trace.records] for result in results])

    eps = matrix(lambda r: r.epsilon.eps_k)
    leader = matrix(lambda r: r.err_leader)
    follower = matrix(lambda r: r.err_follower)
    seeds = [result.seed for result in results]
    gamma = context.game.gamma

    datasets = (
        (EPSILON_FILE, epsilon_dataset(eps)),
        (LEADER_ERROR_FILE, error_dataset(leader, eps, seeds, gamma)),
        (FOLLOWER_ERROR_FILE, error_dataset(follower, eps, seeds, gamma)),
    )
    for name, (columns, rows) in datasets:
        path = os.path.join(config.output_dir, name)
        write_csv(path, columns, rows)
        print("Saved figure data to:", path)

    checks = qualitative_checks(eps, leader, follower, gamma, config.burn_in)
    summary = run_summary(context, results)
    summary["checks"] = checks
    summary_file = os.path.join(config.output_dir, "summary.json")
    write_json(summary_file, summary)
    print("Saved summary to:", summary_file)

    failed = [name for name in REQUIRED_CHECKS if not checks[name]]
    for name in failed:
        logger.warning(f"Experiment check failed: {name}")
    logger.info(
        f"eps_global={checks['eps_global']:.6g}, late eps_k={checks['late_eps']:.6g}, "
        f"asymptotic bound={checks['asymptotic_bound_adaptive']:.6g}"
    )
    return 1 if failed else 0

import csv
import io
import json
import logging
import os
from numbers import Real

from core.data.game_loader import format_real
from core.utils.atomic_write import write_text_atomic

logger = logging.getLogger(__name__)

TRACE_COLUMNS = (
    "k",
    "err_leader",
    "err_follower",
    "eps_k",
    "bound_eps_k",
    "bound_eps_global",
    "norm_q1",
    "norm_q2",
    "leader_policy",
    "follower_policy",
    "bound_theorem_global",
    "bound_theorem_adaptive",
    "bound_certified",
    "bound_system",
    "err_upper",
    "err_lower",
    "sandwich_violation_upper",
    "sandwich_violation_lower",
)


def format_cell(value) -> str:
    """CSV cell text: empty for None, 17 significant digits for reals."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, Real):
        return format_real(value)
    return str(value)


def render_csv(columns, rows) -> str:
    """
    :param columns: Header names, in output order.
    :param rows: Mappings from column name to value; missing names are empty.
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_cell(row.get(name)) for name in columns])
    return buffer.getvalue()


def write_csv(path: str, columns, rows) -> None:
    _ensure_folder(path)
    write_text_atomic(path, render_csv(columns, rows))
    logger.debug(f"Wrote CSV: {path}")


def write_json(path: str, data) -> None:
    _ensure_folder(path)
    write_text_atomic(path, json.dumps(data, indent=2, sort_keys=True, allow_nan=False) + "\n")
    logger.debug(f"Wrote JSON: {path}")


def _ensure_folder(path: str) -> None:
    folder = os.path.dirname(path)
    if folder:
        os.makedirs(folder, exist_ok=True)

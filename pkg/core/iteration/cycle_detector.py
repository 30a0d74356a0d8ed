import logging
from dataclasses import dataclass
from typing import Optional

from core.models.trace import IterationTrace

logger = logging.getLogger(__name__)

NONE = "none"
PERIODIC = "periodic"
APERIODIC = "aperiodic"


@dataclass(frozen=True)
class CycleReport:
    status: str
    period: Optional[int] = None
    examined: int = 0

    def to_dict(self) -> dict:
        return {"status": self.status, "period": self.period, "examined": self.examined}


def detect_cycle(trace: IterationTrace, window: int) -> CycleReport:
    """
    Classify the tail of the greedy policy sequence.

    Only the last ``2 * window`` records are examined (fewer when the trace is
    shorter). A constant tail reports ``none``; otherwise the smallest period
    p <= window with pi_{k+p} == pi_k across the tail is reported, or
    ``aperiodic`` when no such p exists.

    :param trace: Trace with at least two records.
    :param window: Largest period searched for.
    """
    if len(trace) < 2:
        raise ValueError("cycle detection needs at least two records")
    if window < 1:
        raise ValueError(f"window must be positive, got {window}")

    tail = [pair.key() for pair in trace.pairs[-2 * window :]]
    if all(key == tail[0] for key in tail):
        return CycleReport(NONE, None, len(tail))

    for period in range(2, min(window, len(tail) - 1) + 1):
        if all(tail[k + period] == tail[k] for k in range(len(tail) - period)):
            logger.debug(f"Greedy policies cycle with period {period}")
            return CycleReport(PERIODIC, period, len(tail))
    return CycleReport(APERIODIC, None, len(tail))

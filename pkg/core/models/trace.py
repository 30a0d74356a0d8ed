from dataclasses import dataclass, field
from typing import Optional

from core.models.game import QTensor
from core.models.policy import PolicyPair

CONVERGENCE_THRESHOLD = 1e-10


@dataclass(frozen=True)
class IterationRecord:
    """
    State of the iteration at step k.

    ``pair`` is the greedy pair induced by (Q1_k, Q2_k), i.e. the pair used to
    produce Q_{k+1}. Tensors may be None when the trace is thinned. ``epsilon``
    is an EpsilonRecord when slacks were requested.
    """

    k: int
    pair: PolicyPair
    norm_q1: float
    norm_q2: float
    q1: Optional[QTensor] = None
    q2: Optional[QTensor] = None
    err_leader: Optional[float] = None
    err_follower: Optional[float] = None
    delta: Optional[float] = None
    epsilon: Optional[object] = None


@dataclass
class IterationTrace:
    records: list = field(default_factory=list)
    game_hash: str = ""
    seed: Optional[int] = None
    iterations: int = 0
    update_order: str = "jacobi"

    def __len__(self):
        return len(self.records)

    def __getitem__(self, k):
        return self.records[k]

    def append(self, record: IterationRecord) -> None:
        if record.k != len(self.records):
            raise ValueError(f"record k={record.k} appended at position {len(self.records)}")
        self.records.append(record)

    @property
    def pairs(self) -> list:
        return [record.pair for record in self.records]

    @property
    def converged_at(self) -> Optional[int]:
        """First k whose step to k+1 moved both tensors by less than 1e-10."""
        for record in self.records[1:]:
            if record.delta is not None and record.delta < CONVERGENCE_THRESHOLD:
                return record.k - 1
        return None

    @property
    def epsilons(self) -> list:
        return [record.epsilon for record in self.records if record.epsilon is not None]

    def has_tensors(self) -> bool:
        return all(r.q1 is not None and r.q2 is not None for r in self.records)

from dataclasses import dataclass, field

import numpy as np

CONVERGED_GRADIENT = "converged-by-gradient"
CONVERGED_OBJECTIVE = "converged-by-objective"
MAX_ITERS = "max-iters"


@dataclass(frozen=True)
class TraceRecord:
    iter: int
    objective: float
    grad_norm: float
    alpha: float
    ls_evals: int


@dataclass
class SolveTrace:
    """Per-iteration history of a CP solve.

    Record 0 is the starting point. ``wall_time`` is kept in memory only and
    is never written to the trace CSV, so trace files stay reproducible.
    """

    solver: str
    records: list = field(default_factory=list)
    status: str = MAX_ITERS
    wall_time: float = 0.0

    def append(self, it, objective, grad_norm, alpha=0.0, ls_evals=0):
        self.records.append(
            TraceRecord(int(it), float(objective), float(grad_norm), float(alpha), int(ls_evals))
        )

    @property
    def objectives(self):
        return np.array([r.objective for r in self.records])

    @property
    def final_objective(self):
        return self.records[-1].objective

    @property
    def iterations(self):
        return self.records[-1].iter if self.records else 0

"""Portfolio SAT backends: a CDCL kernel and a WalkSAT-style local search.

Both backends run cooperatively: work happens in bounded step() calls so a
simulated cluster can interleave many solvers on one thread, while real
threads just call step() in a loop and park on the shared control cell.
"""
from __future__ import annotations

from dataclasses import dataclass, field

SAT = "SAT"
UNSAT = "UNSAT"
UNKNOWN = "UNKNOWN"


@dataclass
class SolverStats:
    conflicts: int = 0
    propagations: int = 0
    decisions: int = 0
    restarts: int = 0
    flips: int = 0
    learned: int = 0
    exported: int = 0
    imported: int = 0

    def merged_with(self, other: "SolverStats") -> "SolverStats":
        return SolverStats(
            self.conflicts + other.conflicts,
            self.propagations + other.propagations,
            self.decisions + other.decisions,
            self.restarts + other.restarts,
            self.flips + other.flips,
            self.learned + other.learned,
            self.exported + other.exported,
            self.imported + other.imported,
        )


@dataclass
class SolveResult:
    """Outcome of one solver or one whole run."""

    verdict: str  # SAT | UNSAT | UNKNOWN
    model: dict[int, bool] | None = None
    stats: SolverStats = field(default_factory=SolverStats)
    wallclock_s: float | None = None


from .control import RUNNING, SUSPENDED, TERMINATED, SolverControl  # noqa: E402
from .ring import ImportRing  # noqa: E402
from .config import (  # noqa: E402
    CdclParams,
    SlsParams,
    SolverConfig,
    CDCL_PRESETS,
    PORTFOLIO_CYCLE,
    make_portfolio_config,
    throttled_thread_count,
)
from .cdcl import CdclSolver, cdcl_solve  # noqa: E402
from .sls import SlsSolver, sls_solve  # noqa: E402

__all__ = [
    "SAT", "UNSAT", "UNKNOWN",
    "SolverStats", "SolveResult",
    "RUNNING", "SUSPENDED", "TERMINATED", "SolverControl",
    "ImportRing",
    "CdclParams", "SlsParams", "SolverConfig", "CDCL_PRESETS",
    "PORTFOLIO_CYCLE", "make_portfolio_config", "throttled_thread_count",
    "CdclSolver", "cdcl_solve", "SlsSolver", "sls_solve",
]

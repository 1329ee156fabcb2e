"""
helpers/budget.py — Budget tracker for training loops.
Tracks iterations and wall-clock time against optional limits.
"""

import time
from dataclasses import dataclass, field


@dataclass
class TrainingBudget:
    """Shared by the step loop to decide when to stop early."""
    max_iterations: int
    max_seconds: float | None = None
    iterations: int = 0
    started_at: float = field(default_factory=time.monotonic)

    def record(self) -> None:
        """Record one completed iteration."""
        self.iterations += 1

    @property
    def elapsed_seconds(self) -> float:
        return time.monotonic() - self.started_at

    @property
    def exceeded(self) -> bool:
        if self.iterations >= self.max_iterations:
            return True
        return self.max_seconds is not None and self.elapsed_seconds >= self.max_seconds

    @property
    def stopped_early(self) -> bool:
        return self.exceeded and self.iterations < self.max_iterations

    @property
    def exceeded_message(self) -> str:
        return (
            f"Training time budget reached ({self.elapsed_seconds:.0f}s, "
            f"{self.iterations}/{self.max_iterations} iterations)."
        )

"""
helpers/progress.py — Rolling training progress for long-running loops.

Instead of logging every iteration, keeps the last few loss lines and emits
one log record every ``every`` steps with elapsed time and throughput.
"""

from __future__ import annotations

import logging
import time

log = logging.getLogger(__name__)

# How many recent status lines to keep for summary()
_MAX_HISTORY = 5


def _elapsed(seconds: float) -> str:
    """Format elapsed seconds as a compact duration string."""
    if seconds < 60:
        return f"{seconds:.0f}s"
    minutes = int(seconds) // 60
    secs = int(seconds) % 60
    return f"{minutes}m{secs:02d}s"


class TrainingProgress:
    """Periodic progress reporting for an iteration loop.

    Usage::

        progress = TrainingProgress(total=2000, title="translate", every=50)
        for i in range(2000):
            ...
            progress.update(i + 1, loss_D=ld, loss_G=lg)
        progress.close()
    """

    def __init__(self, total: int, *, title: str = "", every: int = 50, logger: logging.Logger | None = None):
        self._total = total
        self._title = title
        self._every = max(1, every)
        self._log = logger or log
        self._history: list[str] = []
        self._start_time = time.monotonic()
        self._last_step = 0

    @property
    def elapsed_seconds(self) -> float:
        return time.monotonic() - self._start_time

    def _line(self, step: int, losses: dict[str, float]) -> str:
        parts = " ".join(f"{k}={v:.4f}" for k, v in losses.items())
        return f"[{_elapsed(self.elapsed_seconds)}] {step}/{self._total} {parts}".rstrip()

    def update(self, step: int, **losses: float) -> None:
        self._last_step = step
        if step % self._every and step != self._total:
            return
        line = self._line(step, losses)
        self._history.append(line)
        if len(self._history) > _MAX_HISTORY:
            self._history = self._history[-_MAX_HISTORY:]
        rate = step / self.elapsed_seconds if self.elapsed_seconds > 0 else 0.0
        self._log.info("%s: %s (%.2f it/s)", self._title or "progress", line, rate)

    def summary(self) -> str:
        lines = [self._title] if self._title else []
        lines.extend(self._history)
        return "\n".join(lines) or "no progress recorded"

    def close(self) -> None:
        self._log.info("%s: finished %d/%d in %s", self._title or "progress", self._last_step,
                       self._total, _elapsed(self.elapsed_seconds))

"""
errors.py — Exception families shared by every stage.

Each family carries the CLI exit code it maps to:
    ConfigError  → 1 (validation)
    Sim2RealError → 2 (runtime)
    NumericError → 3 (NaN/Inf reached)
"""

from __future__ import annotations


class Sim2RealError(Exception):
    exit_code: int = 2


class ConfigError(Sim2RealError, ValueError):
    """Invalid configuration. Carries every finding, not only the first."""

    exit_code = 1

    def __init__(self, findings: list[str] | str):
        if isinstance(findings, str):
            findings = [findings]
        self.findings = list(findings)
        super().__init__("; ".join(self.findings))


class NumericError(Sim2RealError, ArithmeticError):
    exit_code = 3


class StageError(Sim2RealError):
    """A pipeline stage failed. Exit code follows the underlying cause."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 2)
        super().__init__(f"stage '{stage}' failed: {cause}")

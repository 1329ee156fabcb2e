"""Tests for the training-loop helpers (helpers/progress.py, helpers/budget.py)."""

import logging
from unittest.mock import patch

from helpers.budget import TrainingBudget
from helpers.progress import TrainingProgress, _elapsed


# ── Progress ────────────────────────────────────────────────────────────────

def test_elapsed_format():
    assert _elapsed(5.4) == "5s"
    assert _elapsed(61) == "1m01s"
    assert _elapsed(3600) == "60m00s"


def test_progress_logs_every_n_steps(caplog):
    progress = TrainingProgress(10, title="train", every=4)
    with caplog.at_level(logging.INFO, logger="helpers.progress"):
        for step in range(1, 11):
            progress.update(step, loss=0.5)
    lines = [r.getMessage() for r in caplog.records]
    assert len(lines) == 3
    assert " 4/10 loss=0.5000" in lines[0]
    assert " 10/10 loss=0.5000" in lines[-1]


def test_progress_keeps_recent_history():
    progress = TrainingProgress(100, title="train", every=1)
    for step in range(1, 9):
        progress.update(step, loss=float(step))
    summary = progress.summary().splitlines()
    assert summary[0] == "train"
    assert len(summary) == 6
    assert summary[-1].endswith("8/100 loss=8.0000")


def test_progress_summary_when_empty():
    assert TrainingProgress(5).summary() == "no progress recorded"


# ── Budget ──────────────────────────────────────────────────────────────────

def test_budget_iteration_limit():
    budget = TrainingBudget(3)
    for _ in range(3):
        assert not budget.exceeded
        budget.record()
    assert budget.exceeded
    assert not budget.stopped_early


def test_budget_zero_iterations_is_exceeded():
    assert TrainingBudget(0).exceeded


def test_budget_time_limit():
    budget = TrainingBudget(10, max_seconds=5.0, started_at=100.0)
    with patch("helpers.budget.time.monotonic", return_value=106.0):
        assert budget.exceeded
        assert budget.stopped_early
        assert "0/10 iterations" in budget.exceeded_message

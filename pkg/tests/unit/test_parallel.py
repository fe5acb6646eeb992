"""Unit tests for parallel module."""

from __future__ import annotations

import time

import pytest

from markov_poisson.errors import SingularSystemError
from markov_poisson.parallel import (
    BatchProcessor,
    BatchResult,
    ProcessingResult,
    default_workers,
    describe,
    map_ordered,
)


def _slow_square(n: int) -> int:
    # later items finish first
    time.sleep(0.002 * (5 - n))
    return n * n


def _fail_on_odd(n: int) -> int:
    if n % 2:
        raise ValueError(f"odd item {n}")
    return n


def test_processing_result():
    """Test ProcessingResult dataclass."""
    success_result = ProcessingResult(success=True, item=3, value=9, duration_ms=1.5)
    assert success_result.value == 9
    assert success_result.error is None
    assert success_result.exception is None

    failure_result = ProcessingResult(success=False, item=4, error="boom")
    assert failure_result.value is None
    assert failure_result.error == "boom"
    assert failure_result.duration_ms == 0.0


def test_batch_result():
    """Test BatchResult dataclass."""
    results = [
        ProcessingResult(success=True, item=1, value=1),
        ProcessingResult(success=False, item=2, error="x"),
        ProcessingResult(success=True, item=3, value=9),
    ]
    batch = BatchResult(total=3, success=2, failed=1, results=results)
    assert batch.success_rate == pytest.approx(2 / 3)
    assert batch.failed_items == [2]
    assert batch.values == [1, None, 9]


def test_batch_result_empty():
    """Test BatchResult with no items."""
    batch: BatchResult[int, int] = BatchResult(total=0, success=0, failed=0)
    assert batch.success_rate == 0.0
    assert batch.failed_items == []
    assert batch.values == []


async def test_process_batch_preserves_order():
    """Results come back in input order whatever the completion order."""
    processor = BatchProcessor(max_workers=4, show_progress=False)
    batch = await processor.process_batch(list(range(5)), _slow_square)
    assert batch.total == batch.success == 5
    assert batch.failed == 0
    assert batch.values == [0, 1, 4, 9, 16]
    assert all(r.duration_ms >= 0.0 for r in batch.results)


async def test_process_batch_with_failures():
    """A failing item does not stop the batch."""
    processor = BatchProcessor(max_workers=2, show_progress=False)
    batch = await processor.process_batch(list(range(6)), _fail_on_odd)
    assert batch.success == 3
    assert batch.failed == 3
    assert batch.failed_items == [1, 3, 5]
    failed = batch.results[1]
    assert failed.error == "odd item 1"
    assert isinstance(failed.exception, ValueError)


async def test_process_batch_empty():
    """Test processing empty batch."""
    processor = BatchProcessor(max_workers=2, show_progress=False)
    batch = await processor.process_batch([], _slow_square)
    assert batch.total == 0
    assert batch.results == []


async def test_batch_processor_with_progress_bar():
    """The progress bar is torn down after the batch."""
    processor = BatchProcessor(max_workers=2, show_progress=True)
    batch = await processor.process_batch([1, 2, 3], _slow_square, task_name="Levels")
    assert batch.values == [1, 4, 9]
    assert processor.progress is None


def test_run_blocking():
    """run() drives the event loop itself."""
    batch = BatchProcessor(max_workers=3, show_progress=False).run([2, 3], _slow_square)
    assert batch.values == [4, 9]


def test_map_ordered():
    """map_ordered returns plain values in order."""
    assert map_ordered([3, 1, 2], _slow_square, max_workers=3) == [9, 1, 4]
    assert map_ordered([3, 1, 2], _slow_square, max_workers=1) == [9, 1, 4]
    assert map_ordered([], _slow_square) == []


def test_map_ordered_reraises():
    """The first failure is re-raised with its own type."""

    def fail(n: int) -> int:
        if n == 2:
            raise SingularSystemError("singular", details={"n": n})
        return n

    with pytest.raises(SingularSystemError) as info:
        map_ordered([0, 1, 2, 3], fail, max_workers=2)
    assert info.value.details["n"] == 2


def test_default_workers(monkeypatch):
    """Worker count follows the environment, falling back to the core count."""
    monkeypatch.setenv("MARKOV_POISSON_THREADS", "5")
    assert default_workers() == 5
    assert BatchProcessor(show_progress=False).max_workers == 5

    monkeypatch.setenv("MARKOV_POISSON_THREADS", "0")
    assert default_workers() == 1

    monkeypatch.setenv("MARKOV_POISSON_THREADS", "many")
    assert default_workers() >= 1

    monkeypatch.delenv("MARKOV_POISSON_THREADS")
    assert default_workers() >= 1


def test_describe():
    """Batches summarize to one line."""
    batch = BatchResult(total=4, success=3, failed=1, total_duration_ms=2500.0)
    assert describe(batch) == "3/4 succeeded in 2.5s"

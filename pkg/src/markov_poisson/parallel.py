"""Concurrent evaluation of independent jobs.

Sweep levels and simulation blocks are independent, CPU-bound numpy work. They
run through an asyncio semaphore with each job in a worker thread; results come
back in input order with per-item failure isolation.
"""

from __future__ import annotations

import asyncio
import logging
import os
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Any, Generic, TypeVar

import psutil
from rich.console import Console
from rich.progress import (
    BarColumn,
    Progress,
    SpinnerColumn,
    TaskID,
    TaskProgressColumn,
    TextColumn,
    TimeRemainingColumn,
)

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "MARKOV_POISSON_THREADS"


def default_workers() -> int:
    """Worker count from MARKOV_POISSON_THREADS, else the physical core count."""
    if value := os.getenv(THREADS_ENV):
        try:
            return max(1, int(value))
        except ValueError:
            logger.warning(f"Ignoring non-integer {THREADS_ENV}={value!r}")
    return psutil.cpu_count(logical=False) or os.cpu_count() or 1


@dataclass
class ProcessingResult(Generic[T, R]):
    """Result of processing a single item."""

    success: bool
    item: T
    value: R | None = None
    error: str | None = None
    exception: BaseException | None = None
    duration_ms: float = 0.0


@dataclass
class BatchResult(Generic[T, R]):
    """Result of batch processing, in input order."""

    total: int
    success: int
    failed: int
    results: list[ProcessingResult[T, R]] = field(default_factory=list)
    total_duration_ms: float = 0.0

    @property
    def success_rate(self) -> float:
        """Calculate success rate."""
        if self.total == 0:
            return 0.0
        return self.success / self.total

    @property
    def failed_items(self) -> list[T]:
        """Get list of failed items."""
        return [r.item for r in self.results if not r.success]

    @property
    def values(self) -> list[R | None]:
        return [r.value for r in self.results]


class BatchProcessor:
    """Batch processor with concurrency control.

    Features:
    - Semaphore-bounded concurrency, one worker thread per running job
    - Rich progress bar display
    - Error isolation (one failure doesn't stop the batch)
    - Results in input order regardless of completion order
    """

    def __init__(
        self,
        max_workers: int | None = None,
        show_progress: bool = True,
        console: Console | None = None,
    ):
        """Initialize batch processor.

        Args:
            max_workers: Maximum concurrent jobs (default: physical cores)
            show_progress: Whether to show progress bar
            console: Rich console instance
        """
        self.max_workers = max_workers or default_workers()
        self.show_progress = show_progress
        self.console = console or Console(stderr=True)
        self.progress: Progress | None = None
        self._task_id: TaskID | None = None

    async def process_batch(
        self,
        items: Sequence[T],
        process_fn: Callable[[T], R],
        *,
        task_name: str = "Processing",
    ) -> BatchResult[T, R]:
        """Process a batch of items concurrently.

        Args:
            items: Items to process
            process_fn: Synchronous function applied to each item
            task_name: Name for progress display

        Returns:
            BatchResult with processing statistics
        """
        if not items:
            return BatchResult(total=0, success=0, failed=0)

        start_time = time.perf_counter()
        semaphore = asyncio.Semaphore(self.max_workers)

        if self.show_progress:
            self.progress = Progress(
                SpinnerColumn(),
                TextColumn("[bold blue]{task.description}"),
                BarColumn(),
                TaskProgressColumn(),
                TimeRemainingColumn(),
                console=self.console,
            )
            self.progress.start()
            self._task_id = self.progress.add_task(
                f"[cyan]{task_name}", total=len(items)
            )

        async def process_with_semaphore(item: T) -> ProcessingResult[T, R]:
            async with semaphore:
                result = await self._process_one(item, process_fn)
                if self.progress and self._task_id is not None:
                    self.progress.update(self._task_id, advance=1)
                return result

        try:
            results = await asyncio.gather(
                *(process_with_semaphore(item) for item in items)
            )
        finally:
            if self.progress is not None:
                self.progress.stop()
                self.progress = None

        success_count = sum(1 for r in results if r.success)
        return BatchResult(
            total=len(items),
            success=success_count,
            failed=len(items) - success_count,
            results=list(results),
            total_duration_ms=(time.perf_counter() - start_time) * 1000,
        )

    async def _process_one(
        self, item: T, process_fn: Callable[[T], R]
    ) -> ProcessingResult[T, R]:
        start_time = time.perf_counter()
        try:
            value = await asyncio.to_thread(process_fn, item)
        except Exception as e:
            logger.debug(f"Processing failed for {item!r}: {e}")
            return ProcessingResult(
                success=False,
                item=item,
                error=str(e),
                exception=e,
                duration_ms=(time.perf_counter() - start_time) * 1000,
            )
        return ProcessingResult(
            success=True,
            item=item,
            value=value,
            duration_ms=(time.perf_counter() - start_time) * 1000,
        )

    def run(
        self,
        items: Sequence[T],
        process_fn: Callable[[T], R],
        *,
        task_name: str = "Processing",
    ) -> BatchResult[T, R]:
        """Blocking wrapper around :meth:`process_batch`."""
        return asyncio.run(self.process_batch(items, process_fn, task_name=task_name))


def map_ordered(
    items: Sequence[T],
    process_fn: Callable[[T], R],
    max_workers: int | None = None,
    show_progress: bool = False,
    task_name: str = "Processing",
) -> list[R]:
    """Apply ``process_fn`` to every item concurrently; re-raise the first failure.

    Args:
        items: Items to process
        process_fn: Synchronous function
        max_workers: Maximum concurrent jobs
        show_progress: Show progress bar
        task_name: Name for progress display

    Returns:
        Results in input order
    """
    if max_workers == 1 or len(items) <= 1:
        return [process_fn(item) for item in items]
    processor = BatchProcessor(max_workers=max_workers, show_progress=show_progress)
    batch = processor.run(items, process_fn, task_name=task_name)
    for result in batch.results:
        if not result.success and result.exception is not None:
            raise result.exception
    return [r.value for r in batch.results]  # type: ignore[misc]


def describe(batch: BatchResult[Any, Any]) -> str:
    """One-line summary of a batch."""
    return (
        f"{batch.success}/{batch.total} succeeded in "
        f"{batch.total_duration_ms / 1000:.1f}s"
    )

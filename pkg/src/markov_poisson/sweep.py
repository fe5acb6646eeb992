"""Truncation sweeps and convergence diagnosis.

For every level n of the grid the chain is truncated, completed by the configured
scheme and solved exactly; the resulting columns (pi^T g, f at the probe states and
sigma^2) are then classified as converged, diverging or oscillating. The
classification is a heuristic on finitely many rows and is labelled as such.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np
from rich.console import Console

from markov_poisson.chain import ChainSpec, ForcingFunction, make_builtin
from markov_poisson.config import SweepConfig
from markov_poisson.errors import (
    ErrorCode,
    FileError,
    MarkovPoissonError,
    TooFewRowsError,
    handle_error,
)
from markov_poisson.parallel import BatchProcessor, describe
from markov_poisson.solver import analyze, forcing_vector, invariant_gth
from markov_poisson.truncation import build_kernel

logger = logging.getLogger(__name__)

DEFAULT_WINDOW = 4
DEFAULT_RTOL = 1e-6
# Diverging: the window grew at least this much, or its increments did not shrink below
_GROWTH_FACTOR = 2.0
_INCREMENT_RATIO = 0.5


class Verdict(str, Enum):
    """Convergence verdict of one column."""

    CONVERGED = "converged"
    DIVERGING = "diverging"
    OSCILLATING = "oscillating"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class Diagnosis:
    """Verdict with the evidence it rests on.

    Attributes:
        verdict: Classification of the column
        limit: Last value when converged
        window: Number of trailing rows examined
        detail: Human readable explanation
        even: Verdict of the even-level subsequence, when examined
        odd: Verdict of the odd-level subsequence, when examined
    """

    verdict: Verdict
    limit: float | None = None
    window: int = DEFAULT_WINDOW
    detail: str = ""
    even: Verdict | None = None
    odd: Verdict | None = None

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "verdict": self.verdict.value,
            "window": self.window,
            "detail": self.detail,
        }
        if self.limit is not None:
            data["limit"] = self.limit
        if self.even is not None:
            data["even"] = self.even.value
        if self.odd is not None:
            data["odd"] = self.odd.value
        return data


def _classify(
    values: np.ndarray, window: int, rtol: float, *, increments: bool = False
) -> Verdict | None:
    tail = values[-window:]
    last = float(tail[-1])
    if float(np.max(tail) - np.min(tail)) <= rtol * (1.0 + abs(last)):
        return Verdict.CONVERGED
    size = np.abs(tail)
    steps = np.diff(size)
    if np.all(steps > 0) and np.all(np.sign(tail) == np.sign(last)):
        if size[-1] >= _GROWTH_FACTOR * size[0]:
            return Verdict.DIVERGING
        # parity halves only: linear growth that is not slowing down
        if increments and steps[-1] >= _INCREMENT_RATIO * steps[0]:
            return Verdict.DIVERGING
    return None


def diagnose(
    values: Sequence[float],
    window: int = DEFAULT_WINDOW,
    rtol: float = DEFAULT_RTOL,
    levels: Sequence[int] | None = None,
) -> Diagnosis:
    """Classify a column of sweep values.

    Converged when the last ``window`` values lie within rtol (1 + |last|) of each
    other. Diverging when |value| increases strictly over the window and at least
    doubles. Oscillating when the even-level and odd-level subsequences each classify
    but disagree; within a parity half, strictly increasing |value| whose last
    increment is at least half the first also counts as diverging. NaNs (failed rows)
    are dropped first.

    Args:
        values: Column values in level order
        window: Trailing rows examined
        rtol: Relative spread tolerance
        levels: Levels of the rows, used for the parity split (default: positions)

    Returns:
        Diagnosis

    Raises:
        TooFewRowsError: If fewer than ``window`` finite values remain
    """
    data = np.asarray(values, dtype=float)
    tags = np.arange(data.size) if levels is None else np.asarray(levels)
    keep = np.isfinite(data)
    data, tags = data[keep], tags[keep]
    if data.size < window:
        raise TooFewRowsError(
            f"Diagnosis needs at least {window} finite rows, got {data.size}",
            details={"rows": int(data.size), "window": window},
        )

    whole = _classify(data, window, rtol)
    if whole is Verdict.CONVERGED:
        return Diagnosis(
            Verdict.CONVERGED,
            limit=float(data[-1]),
            window=window,
            detail=f"last {window} values agree within rtol {rtol:g}",
        )

    even_vals, odd_vals = data[tags % 2 == 0], data[tags % 2 == 1]
    if even_vals.size >= window and odd_vals.size >= window:
        even = _classify(even_vals, window, rtol, increments=True)
        odd = _classify(odd_vals, window, rtol, increments=True)
        if even is not None and odd is not None:
            split = even is not odd or (
                even is Verdict.CONVERGED
                and abs(even_vals[-1] - odd_vals[-1])
                > rtol * (1.0 + max(abs(even_vals[-1]), abs(odd_vals[-1])))
            )
            if split:
                return Diagnosis(
                    Verdict.OSCILLATING,
                    window=window,
                    detail=f"even levels {even.value}, odd levels {odd.value}",
                    even=even,
                    odd=odd,
                )

    if whole is Verdict.DIVERGING:
        return Diagnosis(
            Verdict.DIVERGING,
            window=window,
            detail=f"|value| grows monotonically over the last {window} rows",
        )
    return Diagnosis(
        Verdict.INCONCLUSIVE,
        window=window,
        detail="no rule matched; the diagnosis is heuristic",
    )


@dataclass
class SweepRow:
    """One level of a sweep.

    Failed levels keep whatever was computed before the failure and NaN elsewhere.
    """

    n: int
    pi_g: float = math.nan
    f_probes: tuple[float, ...] = ()
    sigma2: float = math.nan
    residual: float = math.nan
    ms: float = 0.0
    return_times: tuple[float, ...] = ()
    outer_level: int | None = None
    error: str | None = None
    error_code: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def evaluate_level(
    spec: ChainSpec, cfg: SweepConfig, g: ForcingFunction, n: int
) -> SweepRow:
    """Build the level-n kernel and solve it; module errors are recorded on the row."""
    tol = cfg.tolerances
    nan_probes = tuple(math.nan for _ in cfg.probes)
    row = SweepRow(n=n, f_probes=nan_probes, return_times=nan_probes)
    start = time.perf_counter()
    try:
        kernel = build_kernel(
            spec, cfg.scheme, n, clip_tol=tol.clip, censor_tol=tol.censor_stability
        )
        row.outer_level = kernel.outer_level
        gvec = forcing_vector(g, n)
        row.pi_g = math.fsum(invariant_gth(kernel).pi * gvec)
        analysis = analyze(
            kernel,
            gvec,
            cfg.anchor,
            residual_tol=tol.residual,
            route_tol=tol.route,
            consistency_tol=tol.consistency,
        )
        row.f_probes = tuple(float(analysis.solution.f[p]) for p in cfg.probes)
        row.sigma2 = analysis.variance.sigma2
        row.residual = analysis.solution.residual
        row.return_times = tuple(float(analysis.moments.m1[p]) for p in cfg.probes)
    except MarkovPoissonError as e:
        logger.warning(f"Level {n} failed: {e}")
        row.error = e.message
        row.error_code = e.error_code.name
    row.ms = (time.perf_counter() - start) * 1000
    return row


def _column_names(probes: Sequence[int]) -> list[str]:
    return ["pi_g", *(f"f_{p}" for p in probes), "sigma2"]


def _fmt(value: float) -> str:
    return "nan" if math.isnan(value) else format(value, ".10g")


@dataclass
class SweepReport:
    """Rows of a sweep in level order plus the per-column diagnoses."""

    config: SweepConfig
    rows: list[SweepRow]
    columns: dict[str, Diagnosis] = field(default_factory=dict)
    overall: Verdict = Verdict.INCONCLUSIVE

    @property
    def failed(self) -> list[SweepRow]:
        return [r for r in self.rows if not r.ok]

    def column(self, name: str) -> list[float]:
        """Values of ``pi_g``, ``sigma2`` or ``f_<probe>`` in level order."""
        if name == "pi_g":
            return [r.pi_g for r in self.rows]
        if name == "sigma2":
            return [r.sigma2 for r in self.rows]
        if name.startswith("f_"):
            idx = self.config.probes.index(int(name[2:]))
            return [r.f_probes[idx] for r in self.rows]
        raise KeyError(name)

    def to_csv(self) -> str:
        """CSV with header n,pi_g,f_<probe>...,sigma2,residual,ms and 10 significant digits."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["n", *_column_names(self.config.probes), "residual", "ms"])
        timing = self.config.output.timing
        for r in self.rows:
            writer.writerow(
                [
                    r.n,
                    _fmt(r.pi_g),
                    *(_fmt(v) for v in r.f_probes),
                    _fmt(r.sigma2),
                    _fmt(r.residual),
                    _fmt(r.ms) if timing else "0",
                ]
            )
        return buffer.getvalue()

    def to_dict(self) -> dict[str, Any]:
        timing = self.config.output.timing

        def number(value: float) -> float | None:
            return None if math.isnan(value) else value

        rows = []
        for r in self.rows:
            rows.append(
                {
                    "n": r.n,
                    "pi_g": number(r.pi_g),
                    "f": {str(p): number(v) for p, v in zip(self.config.probes, r.f_probes)},
                    "sigma2": number(r.sigma2),
                    "residual": number(r.residual),
                    "ms": r.ms if timing else 0,
                    "return_times": {
                        str(p): number(v)
                        for p, v in zip(self.config.probes, r.return_times)
                    },
                    "outer_level": r.outer_level,
                    "error": r.error,
                    "error_code": r.error_code,
                }
            )
        return {
            "model": self.config.model.model_dump(mode="json"),
            "scheme": self.config.scheme.model_dump(mode="json"),
            "anchor": self.config.anchor,
            "probes": self.config.probes,
            "rows": rows,
            "diagnosis": {
                "overall": self.overall.value,
                "heuristic": True,
                "columns": {k: d.to_dict() for k, d in self.columns.items()},
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def write(self, csv_path: Path | None = None, json_path: Path | None = None) -> list[Path]:
        """Write the configured (or given) CSV and JSON reports.

        Raises:
            FileError: If a report cannot be written
        """
        targets = [
            (csv_path or self.config.output.csv, self.to_csv),
            (json_path or self.config.output.json_path, self.to_json),
        ]
        written = []
        for path, render in targets:
            if path is None:
                continue
            try:
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_text(render(), encoding="utf-8")
            except OSError as e:
                raise FileError(
                    f"Failed to write report {path}: {e}",
                    ErrorCode.FILE_WRITE_ERROR,
                    {"path": str(path)},
                    e,
                )
            written.append(path)
        return written


def overall_verdict(columns: dict[str, Diagnosis]) -> Verdict:
    """Oscillating beats diverging; converged only when every column converged."""
    verdicts = [d.verdict for d in columns.values()]
    if Verdict.OSCILLATING in verdicts:
        return Verdict.OSCILLATING
    if Verdict.DIVERGING in verdicts:
        return Verdict.DIVERGING
    if verdicts and all(v is Verdict.CONVERGED for v in verdicts):
        return Verdict.CONVERGED
    return Verdict.INCONCLUSIVE


def diagnose_rows(report: SweepReport) -> None:
    """Fill in the per-column diagnoses and the overall verdict of ``report``."""
    tol = report.config.tolerances
    levels = [r.n for r in report.rows]
    columns: dict[str, Diagnosis] = {}
    for name in _column_names(report.config.probes):
        try:
            columns[name] = diagnose(report.column(name), tol.window, tol.rtol, levels)
        except TooFewRowsError as e:
            columns[name] = Diagnosis(Verdict.INCONCLUSIVE, window=tol.window, detail=e.message)
    report.columns = columns
    report.overall = overall_verdict(columns)


def run_sweep(
    cfg: SweepConfig,
    threads: int | None = None,
    show_progress: bool = False,
    console: Console | None = None,
) -> SweepReport:
    """Evaluate every grid level and diagnose the resulting columns.

    Args:
        cfg: Validated run configuration
        threads: Concurrent levels (default: cfg.threads, then the core count)
        show_progress: Show a progress bar
        console: Console for the progress bar

    Returns:
        SweepReport with rows in level order, independent of the thread count
    """
    family = cfg.family()
    spec = make_builtin(family)
    g = cfg.g.build(family)
    levels = cfg.grid.levels()
    logger.info(f"Sweeping {spec.description} over {len(levels)} level(s)")

    processor = BatchProcessor(
        max_workers=threads or cfg.threads,
        show_progress=show_progress,
        console=console,
    )
    batch = processor.run(
        levels, lambda n: evaluate_level(spec, cfg, g, n), task_name="Sweeping"
    )
    logger.debug(describe(batch))

    rows = []
    for result in batch.results:
        if result.success and result.value is not None:
            rows.append(result.value)
            continue
        err = handle_error(result.exception or RuntimeError(result.error))
        logger.warning(f"Level {result.item} failed: {err}")
        nan_probes = tuple(math.nan for _ in cfg.probes)
        rows.append(
            SweepRow(
                n=result.item,
                f_probes=nan_probes,
                return_times=nan_probes,
                error=err.message,
                error_code=err.error_code.name,
            )
        )

    report = SweepReport(config=cfg, rows=rows)
    diagnose_rows(report)
    return report

"""Augmented truncations: turn a northwest corner into a proper finite kernel.

Three completions are provided:

- linear column augmentation, which pours each row's missing mass into one column;
- last-column augmentation, the linear scheme anchored at the level itself;
- censoring, which watches the chain only while it sits in {0, ..., n}.

Censoring an infinite chain is done either exactly (single-death generators and
finite chains) or by censoring a last-column augmented outer kernel at a larger
level N, doubling N until the censored entries settle.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Annotated, Literal

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, Field
from scipy import sparse
from scipy.sparse import csgraph

from markov_poisson.chain import ChainKind, ChainSpec, Structure, SubKernel, truncate
from markov_poisson.errors import (
    ErrorCode,
    InvalidParamsError,
    NegativeDeficitError,
    NotSingleDeathError,
    SingularComplementError,
)

logger = logging.getLogger(__name__)

CLIP_TOL = 1e-12
CENSOR_STABILITY_TOL = 1e-10
MAX_OUTER_LEVEL = 2048


class SchemeKind(str, Enum):
    """Provenance tag of a finite kernel."""

    LINEAR = "linear"
    LAST_COLUMN = "last_column"
    CENSORED = "censored"
    EXACT = "exact"


@dataclass(frozen=True)
class FiniteKernel:
    """A finite stochastic matrix or conservative generator on {0, ..., n}.

    Attributes:
        kind: Discrete- or continuous-time
        n: Level; the matrix is (n+1) x (n+1)
        entries: Transition probabilities or generator entries
        scheme_tag: How the kernel was produced
        outer_level: Level of the outer kernel used by approximate censoring
    """

    kind: ChainKind
    n: int
    entries: np.ndarray
    scheme_tag: SchemeKind = SchemeKind.EXACT
    outer_level: int | None = None

    @property
    def is_continuous(self) -> bool:
        return self.kind is ChainKind.CONTINUOUS

    @property
    def size(self) -> int:
        return self.n + 1

    def row_sum_error(self) -> float:
        """Largest row-sum violation, relative to the row's total rate for generators."""
        sums = self.entries.sum(axis=1)
        if self.is_continuous:
            scale = np.maximum(1.0, np.abs(np.diag(self.entries)))
            return float(np.max(np.abs(sums) / scale))
        return float(np.max(np.abs(sums - 1.0)))

    @classmethod
    def from_matrix(
        cls, matrix: np.ndarray | list[list[float]], kind: ChainKind = ChainKind.DISCRETE
    ) -> FiniteKernel:
        """Wrap a full finite matrix."""
        a = np.array(matrix, dtype=float)
        return cls(kind=kind, n=a.shape[0] - 1, entries=a)


class LinearColumn(BaseModel):
    """Add every row's deficit to column ``anchor``."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    scheme: Literal["linear"] = "linear"
    anchor: int = Field(default=0, ge=0)


class LastColumn(BaseModel):
    """Add every row's deficit to the last column."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    scheme: Literal["last_column"] = "last_column"


class Censored(BaseModel):
    """Censor on {0, ..., n}.

    ``outer`` is ``"exact"``, ``"auto"`` (exact when possible, else doubling from
    N = max(4n, n + 8)) or a fixed outer level N > n.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    scheme: Literal["censored"] = "censored"
    outer: Literal["auto", "exact"] | int = "auto"


AugmentationScheme = Annotated[
    LinearColumn | LastColumn | Censored, Field(discriminator="scheme")
]


def reaching_mask(entries: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Boolean mask of states that reach ``targets`` along positive off-diagonal entries.

    Targets themselves are included.
    """
    m = entries.shape[0]
    targets = np.asarray(targets, dtype=int)
    rows, cols = np.nonzero(entries > 0)
    keep = rows != cols
    # reversed edges k -> i plus a virtual source m feeding every target
    src = np.concatenate([cols[keep], np.full(targets.size, m)])
    dst = np.concatenate([rows[keep], targets])
    graph = sparse.csr_matrix(
        (np.ones(src.size), (src, dst)), shape=(m + 1, m + 1)
    )
    order = csgraph.breadth_first_order(
        graph, m, directed=True, return_predecessors=False
    )
    mask = np.zeros(m + 1, dtype=bool)
    mask[order] = True
    return mask[:m]


def _deficits(sub: SubKernel, clip_tol: float) -> np.ndarray:
    if sub.deficit is not None:
        deficit = sub.deficit.astype(float, copy=True)
    elif sub.is_continuous:
        deficit = -sub.entries.sum(axis=1)
    else:
        deficit = 1.0 - sub.entries.sum(axis=1)

    scale = np.maximum(1.0, np.abs(np.diag(sub.entries))) if sub.is_continuous else 1.0
    worst = deficit / scale
    if np.any(worst < -clip_tol):
        i = int(np.argmin(worst))
        raise NegativeDeficitError(
            f"Row {i} of the level-{sub.n} corner has negative deficit {deficit[i]:.3e}",
            details={"row": i, "deficit": float(deficit[i])},
        )
    if np.any(deficit < 0):
        logger.debug(f"Clipping {int(np.sum(deficit < 0))} tiny negative deficit(s)")
    return np.clip(deficit, 0.0, None)


def augment_linear(
    sub: SubKernel, j: int, *, clip_tol: float = CLIP_TOL
) -> FiniteKernel:
    """Linear column augmentation anchored at ``j``.

    Args:
        sub: Northwest-corner truncation
        j: Column receiving every row's deficit
        clip_tol: Deficits in [-clip_tol, 0) are treated as 0

    Returns:
        FiniteKernel with rows summing to 1 (discrete) or 0 (continuous)

    Raises:
        InvalidParamsError: If j is outside {0, ..., n}
        NegativeDeficitError: If a row carries more mass than the full row
    """
    if not 0 <= j <= sub.n:
        raise InvalidParamsError(
            f"Augmentation column {j} is outside 0..{sub.n}",
            ErrorCode.LEVEL_OUT_OF_RANGE,
            {"anchor": j, "level": sub.n},
        )
    entries = sub.entries.copy()
    entries[:, j] += _deficits(sub, clip_tol)
    tag = SchemeKind.LAST_COLUMN if j == sub.n else SchemeKind.LINEAR
    return FiniteKernel(kind=sub.kind, n=sub.n, entries=entries, scheme_tag=tag)


def augment_last_column(sub: SubKernel, *, clip_tol: float = CLIP_TOL) -> FiniteKernel:
    """Last-column augmentation (linear augmentation at column n)."""
    return augment_linear(sub, sub.n, clip_tol=clip_tol)


def censor(
    outer: FiniteKernel, n: int, *, clip_tol: float = CLIP_TOL
) -> FiniteKernel:
    """Censor a proper finite kernel on {0, ..., n}.

    Computes P_AA + P_AB (I - P_BB)^{-1} P_BA for stochastic matrices and
    Q_AA + Q_AB (-Q_BB)^{-1} Q_BA for generators, with A = {0..n}, B = {n+1..N}.

    Raises:
        InvalidParamsError: If n exceeds the outer level
        SingularComplementError: If some state of B cannot reach A
    """
    big = outer.n
    if not 0 <= n <= big:
        raise InvalidParamsError(
            f"Cannot censor a level-{big} kernel to level {n}",
            ErrorCode.LEVEL_OUT_OF_RANGE,
            {"level": n, "outer_level": big},
        )
    if n == big:
        return FiniteKernel(
            kind=outer.kind,
            n=n,
            entries=outer.entries.copy(),
            scheme_tag=SchemeKind.CENSORED,
            outer_level=big,
        )

    a = outer.entries
    reach = reaching_mask(a, np.arange(n + 1))
    if not reach[n + 1 :].all():
        stuck = int(np.flatnonzero(~reach[n + 1 :])[0]) + n + 1
        raise SingularComplementError(
            f"State {stuck} cannot reach the censoring set 0..{n}",
            details={"state": stuck, "level": n, "outer_level": big},
        )

    p_aa = a[: n + 1, : n + 1]
    p_ab = a[: n + 1, n + 1 :]
    p_ba = a[n + 1 :, : n + 1]
    p_bb = a[n + 1 :, n + 1 :]
    inner = -p_bb if outer.is_continuous else np.eye(big - n) - p_bb
    try:
        x = scipy.linalg.solve(inner, p_ba, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise SingularComplementError(
            f"Censoring solve failed at level {n}: {e}",
            details={"level": n, "outer_level": big},
            original_error=e,
        )
    if not np.all(np.isfinite(x)):
        raise SingularComplementError(
            f"Censoring solve produced non-finite values at level {n}",
            details={"level": n, "outer_level": big},
        )

    c = p_aa + p_ab @ x
    if outer.is_continuous:
        off = c - np.diag(np.diag(c))
        off[(off < 0) & (off > -clip_tol * np.max(np.abs(np.diag(c)), initial=1.0))] = 0.0
        c = off - np.diag(off.sum(axis=1))
    else:
        c[(c < 0) & (c > -clip_tol)] = 0.0
        c = c / c.sum(axis=1, keepdims=True)
    return FiniteKernel(
        kind=outer.kind,
        n=n,
        entries=c,
        scheme_tag=SchemeKind.CENSORED,
        outer_level=big,
    )


def censor_single_death(spec: ChainSpec, n: int) -> FiniteKernel:
    """Exact censored generator of a single-death chain on {0, ..., n}.

    Every jump from i < n to a state >= n re-enters {0..n} at n, so the censored
    generator is the northwest corner with column n replaced by the tail sums
    q_i^{(n)} and bottom row {n-1: q_(n,n-1), n: -q_(n,n-1)}.

    Raises:
        NotSingleDeathError: If the chain is not a single-death generator
    """
    if not spec.is_continuous or spec.structure not in (
        Structure.SINGLE_DEATH,
        Structure.BIRTH_DEATH,
    ):
        raise NotSingleDeathError(
            f"Exact censoring needs a single-death generator, got {spec.description!r}",
            details={"structure": spec.structure.value, "kind": spec.kind.value},
        )
    sub = truncate(spec, n)
    q = sub.entries.copy()
    for i in range(1, n + 1):
        if np.any(q[i, : i - 1] != 0) or q[i, i - 1] <= 0:
            raise NotSingleDeathError(
                f"Row {i} is not single-death", details={"state": i}
            )
    if n == 0:
        q[0, 0] = 0.0
        return FiniteKernel(kind=spec.kind, n=0, entries=q, scheme_tag=SchemeKind.CENSORED)

    for i in range(n):
        q[i, n] = spec.tail(i, n)
    down = q[n, n - 1]
    q[n, :] = 0.0
    q[n, n - 1] = down
    q[n, n] = -down
    return FiniteKernel(kind=spec.kind, n=n, entries=q, scheme_tag=SchemeKind.CENSORED)


def _full_kernel(spec: ChainSpec) -> FiniteKernel:
    assert spec.size is not None
    sub = truncate(spec, spec.size - 1)
    return FiniteKernel(kind=spec.kind, n=sub.n, entries=sub.entries)


def censor_exact(spec: ChainSpec, n: int) -> FiniteKernel:
    """Exact censoring for finite chains and single-death generators.

    Raises:
        InvalidParamsError: If neither applies
    """
    if spec.size is not None:
        return censor(_full_kernel(spec), n)
    if spec.is_continuous and spec.structure in (
        Structure.SINGLE_DEATH,
        Structure.BIRTH_DEATH,
    ):
        return censor_single_death(spec, n)
    raise InvalidParamsError(
        "Exact censoring needs a finite chain or a single-death generator",
        details={"description": spec.description},
    )


def censor_with_outer(spec: ChainSpec, n: int, outer_level: int) -> FiniteKernel:
    """Censor the last-column augmented kernel at ``outer_level`` down to ``n``."""
    if outer_level <= n:
        raise InvalidParamsError(
            f"Outer level {outer_level} must exceed level {n}",
            ErrorCode.LEVEL_OUT_OF_RANGE,
            {"level": n, "outer_level": outer_level},
        )
    if spec.size is not None and outer_level >= spec.size:
        return censor(_full_kernel(spec), n)
    outer = augment_last_column(truncate(spec, outer_level))
    return censor(outer, n)


def censor_auto(
    spec: ChainSpec,
    n: int,
    *,
    tol: float = CENSOR_STABILITY_TOL,
    max_outer: int = MAX_OUTER_LEVEL,
) -> FiniteKernel:
    """Approximate censoring with outer level doubled until entries settle.

    Starts from N = max(4n, n + 8) and doubles N until successive censored kernels
    differ entrywise by less than ``tol`` (relative to the row's total rate for
    generators), or until N reaches ``max_outer``.
    """
    if spec.size is not None or (
        spec.is_continuous
        and spec.structure in (Structure.SINGLE_DEATH, Structure.BIRTH_DEATH)
    ):
        return censor_exact(spec, n)

    level = max(4 * n, n + 8)
    current = censor_with_outer(spec, n, level)
    while True:
        if level >= max_outer:
            logger.warning(
                f"Censoring outer level hit its cap {max_outer} at level {n}; "
                "entries may not have settled"
            )
            return current
        level = min(2 * level, max_outer)
        nxt = censor_with_outer(spec, n, level)
        scale = (
            np.maximum(1.0, np.abs(np.diag(nxt.entries)))[:, None]
            if spec.is_continuous
            else 1.0
        )
        change = float(np.max(np.abs(nxt.entries - current.entries) / scale))
        logger.debug(f"Level {n}: outer {level} changed censored entries by {change:.3e}")
        current = nxt
        if change < tol:
            return current


def build_kernel(
    spec: ChainSpec,
    scheme: LinearColumn | LastColumn | Censored,
    n: int,
    *,
    clip_tol: float = CLIP_TOL,
    censor_tol: float = CENSOR_STABILITY_TOL,
) -> FiniteKernel:
    """Build the level-``n`` finite kernel of ``spec`` under ``scheme``.

    Args:
        spec: Chain to approximate
        scheme: Augmentation scheme
        n: Level
        clip_tol: Deficit clipping tolerance
        censor_tol: Stability tolerance for approximate censoring

    Returns:
        Proper FiniteKernel on {0, ..., n}
    """
    if isinstance(scheme, LinearColumn):
        return augment_linear(truncate(spec, n), scheme.anchor, clip_tol=clip_tol)
    if isinstance(scheme, LastColumn):
        return augment_last_column(truncate(spec, n), clip_tol=clip_tol)
    if scheme.outer == "exact":
        return censor_exact(spec, n)
    if scheme.outer == "auto":
        return censor_auto(spec, n, tol=censor_tol)
    return censor_with_outer(spec, n, int(scheme.outer))

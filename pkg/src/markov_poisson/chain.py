"""Countable-state chain models.

A chain is represented by lazy row oracles on the state space Z_+ = {0, 1, 2, ...}.
Rows are emitted as iterators of ``(target, value)`` pairs in increasing target
order, so infinite rows with geometric tails never have to be cut: whoever consumes
a row stops once the targets leave the window they care about.

Discrete rows list transition probabilities, self-loops included. Continuous rows
list the off-diagonal rates only; the total rate ``q_i`` comes from ``diag_oracle``.
"""

from __future__ import annotations

import itertools
import logging
import math
from collections.abc import Callable, Iterable, Iterator
from dataclasses import dataclass, field
from enum import Enum
from typing import Annotated, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from markov_poisson.errors import ErrorCode, InvalidParamsError

logger = logging.getLogger(__name__)

SparseRow = Iterator[tuple[int, float]]

ROW_SUM_TOL = 1e-12
# Rows of user-supplied rule families checked eagerly at construction
_VALIDATION_ROWS = 64
_TAIL_SUM_RTOL = 1e-14
_TAIL_SUM_MAX_TERMS = 1_000_000


class ChainKind(str, Enum):
    """Time type of a chain."""

    DISCRETE = "discrete"
    CONTINUOUS = "continuous"


class Structure(str, Enum):
    """Skip-free structure of a chain, used by the structured solvers."""

    GENERAL = "general"
    SINGLE_BIRTH = "single_birth"
    SINGLE_DEATH = "single_death"
    BIRTH_DEATH = "birth_death"


@dataclass(frozen=True)
class ChainSpec:
    """A countable-state chain given by pure row oracles.

    Attributes:
        kind: Discrete- or continuous-time
        row_oracle: State -> iterable of (target, value) sorted by target
        diag_oracle: State -> total rate q_i (continuous chains only)
        tail_oracle: (i, k) -> sum of row i over targets >= k, for k > i
        description: Human readable label
        structure: Declared skip-free structure
        size: Number of states for finite chains, None for Z_+
    """

    kind: ChainKind
    row_oracle: Callable[[int], Iterable[tuple[int, float]]]
    diag_oracle: Callable[[int], float] | None = None
    tail_oracle: Callable[[int, int], float] | None = None
    description: str = ""
    structure: Structure = Structure.GENERAL
    size: int | None = None

    def __post_init__(self) -> None:
        if self.kind is ChainKind.CONTINUOUS and self.diag_oracle is None:
            raise InvalidParamsError(
                "Continuous chains need a total-rate oracle",
                details={"description": self.description},
            )

    @property
    def is_continuous(self) -> bool:
        return self.kind is ChainKind.CONTINUOUS

    def row(self, i: int) -> SparseRow:
        """Return a fresh iterator over row ``i``."""
        self._check_state(i)
        return iter(self.row_oracle(i))

    def total_rate(self, i: int) -> float:
        """Total rate q_i of a continuous chain (1 - p_ii is not used for DTMCs)."""
        self._check_state(i)
        if self.diag_oracle is None:
            raise InvalidParamsError("Discrete chains have no total-rate oracle")
        return float(self.diag_oracle(i))

    def tail(self, i: int, k: int) -> float:
        """Mass (or rate) of row ``i`` on targets ``>= k``; requires ``k > i``."""
        self._check_state(i)
        if self.tail_oracle is not None:
            return float(self.tail_oracle(i, k))
        return math.fsum(v for t, v in self.row(i) if t >= k)

    def _check_state(self, i: int) -> None:
        if i < 0 or (self.size is not None and i >= self.size):
            raise InvalidParamsError(
                f"State {i} is outside the state space",
                ErrorCode.LEVEL_OUT_OF_RANGE,
                {"state": i, "size": self.size},
            )


@dataclass(frozen=True)
class ForcingFunction:
    """Forcing (reward) function g on the state space.

    Attributes:
        eval: State -> real value
        known_mean: Closed-form stationary mean pi^T g, when available
        description: Human readable label
    """

    eval: Callable[[int], float]
    known_mean: float | None = None
    description: str = ""

    def __call__(self, i: int) -> float:
        return float(self.eval(i))

    def values(self, n: int) -> np.ndarray:
        """Vector (g(0), ..., g(n))."""
        return np.array([self.eval(i) for i in range(n + 1)], dtype=float)

    def with_mean(self, mean: float) -> ForcingFunction:
        return ForcingFunction(self.eval, mean, self.description)

    @classmethod
    def identity(cls) -> ForcingFunction:
        return cls(float, description="g(i) = i")

    @classmethod
    def constant(cls, value: float = 1.0) -> ForcingFunction:
        return cls(lambda i: value, known_mean=value, description=f"g(i) = {value}")

    @classmethod
    def indicator(cls, state: int) -> ForcingFunction:
        return cls(lambda i: 1.0 if i == state else 0.0, description=f"g = e_{state}")

    @classmethod
    def power(cls, exponent: float) -> ForcingFunction:
        return cls(lambda i: float(i) ** exponent, description=f"g(i) = i^{exponent}")

    @classmethod
    def from_values(cls, values: Iterable[float]) -> ForcingFunction:
        table = tuple(float(v) for v in values)
        return cls(lambda i: table[i], description="explicit values")


# ---------------------------------------------------------------------------
# Family parameters
# ---------------------------------------------------------------------------


class SequenceSpec(BaseModel):
    """A positive sequence indexed by states.

    ``geometric`` gives ``scale * ratio**i``. ``explicit`` lists values from index 0;
    beyond the list the last value repeats when ``repeat_last`` is set, else 0.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["geometric", "explicit"] = "geometric"
    scale: float = Field(default=1.0, gt=0.0)
    ratio: float = Field(default=1.0, gt=0.0)
    values: tuple[float, ...] = ()
    repeat_last: bool = True

    @model_validator(mode="after")
    def _check_values(self) -> SequenceSpec:
        if self.kind == "explicit":
            if not self.values:
                raise ValueError("explicit sequence needs at least one value")
            if any(v < 0 for v in self.values):
                raise ValueError("sequence values must be non-negative")
        return self

    def at(self, i: int) -> float:
        if self.kind == "geometric":
            return self.scale * self.ratio**i
        if i < len(self.values):
            return self.values[i]
        return self.values[-1] if self.repeat_last else 0.0

    def tail(self, k: int) -> float:
        """Sum over indices >= k (finite only for ratio < 1 or finite support)."""
        if self.kind == "geometric":
            if self.ratio >= 1.0:
                return math.inf
            return self.scale * self.ratio**k / (1.0 - self.ratio)
        if self.repeat_last and self.values[-1] > 0:
            return math.inf
        return math.fsum(self.values[k:])

    def support_end(self) -> int | None:
        """Last index with a possibly nonzero value, None when unbounded."""
        if self.kind == "explicit" and not self.repeat_last:
            return len(self.values) - 1
        return None


class Section2Example(BaseModel):
    """Single-birth DTMC with p_i = 1/2 (i = 0 or odd) and 1 - 3^{-i/2} (i even)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    family: Literal["section2"] = "section2"
    g_choice: Literal[1, 2] = 1


class Example52(BaseModel):
    """Single-death q-matrix with geometric upward jumps, b > 2."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    family: Literal["example52"] = "example52"
    b: float = Field(default=3.0, gt=2.0)


class Example53(BaseModel):
    """Extended branching process with geometric offspring law."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    family: Literal["example53"] = "example53"
    alpha: float = Field(default=1.0, gt=0.0)


class Remark42(BaseModel):
    """Star-shaped q-matrix: 0 -> i at rate lambda_0 p_i, i -> 0 at rate lambda_i.

    ``p`` is read from index 1; its index-0 value is ignored.
    """

    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)

    family: Literal["remark42"] = "remark42"
    lam: SequenceSpec = Field(
        default_factory=lambda: SequenceSpec(kind="geometric", scale=1.0, ratio=2.0),
        alias="lambda",
    )
    p: SequenceSpec = Field(
        default_factory=lambda: SequenceSpec(kind="geometric", scale=1.0, ratio=0.5)
    )

    @model_validator(mode="after")
    def _check_law(self) -> Remark42:
        total = self.p.tail(1)
        if not math.isfinite(total) or abs(total - 1.0) > ROW_SUM_TOL:
            raise ValueError(f"p_1 + p_2 + ... must equal 1, got {total}")
        return self


class BirthDeath(BaseModel):
    """Birth-death q-matrix; ``death`` is read from index 1."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    family: Literal["birth_death"] = "birth_death"
    birth: SequenceSpec
    death: SequenceSpec


class FiniteExplicit(BaseModel):
    """A finite stochastic matrix or conservative generator given in full."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    family: Literal["finite"] = "finite"
    kind: ChainKind = ChainKind.DISCRETE
    matrix: tuple[tuple[float, ...], ...]

    @model_validator(mode="after")
    def _check_matrix(self) -> FiniteExplicit:
        m = len(self.matrix)
        if m == 0 or any(len(row) != m for row in self.matrix):
            raise ValueError("matrix must be square and non-empty")
        a = np.asarray(self.matrix, dtype=float)
        off = a - np.diag(np.diag(a))
        if self.kind is ChainKind.DISCRETE:
            if np.any(a < 0) or np.any(a > 1):
                raise ValueError("transition probabilities must lie in [0, 1]")
            if np.any(np.abs(a.sum(axis=1) - 1.0) > ROW_SUM_TOL):
                raise ValueError("rows of a stochastic matrix must sum to 1")
        else:
            if np.any(off < 0):
                raise ValueError("off-diagonal rates must be non-negative")
            scale = np.maximum(1.0, np.abs(np.diag(a)))
            if np.any(np.abs(a.sum(axis=1)) > ROW_SUM_TOL * scale):
                raise ValueError("rows of a generator must sum to 0")
        return self


class SingleBirthCustom(BaseModel):
    """Single-birth DTMC from rules: up(i) = p_{i,i+1}, down(i, k) = p_{ik} for k <= i."""

    model_config = ConfigDict(frozen=True, extra="forbid", arbitrary_types_allowed=True)

    family: Literal["single_birth"] = "single_birth"
    up: Callable[[int], float]
    down: Callable[[int, int], float]


class SingleDeathCustom(BaseModel):
    """Single-death CTMC from rules.

    ``down(i)`` is q_{i,i-1}; ``up(i, k)`` is q_{i,i+k} for k >= 1; ``up_tail(i, k)``
    optionally gives sum_{l >= k} q_{i,i+l} in closed form.
    """

    model_config = ConfigDict(frozen=True, extra="forbid", arbitrary_types_allowed=True)

    family: Literal["single_death"] = "single_death"
    down: Callable[[int], float]
    up: Callable[[int, int], float]
    up_tail: Callable[[int, int], float] | None = None


FamilyParams = (
    Section2Example
    | Example52
    | Example53
    | Remark42
    | BirthDeath
    | FiniteExplicit
    | SingleBirthCustom
    | SingleDeathCustom
)

# Families that can be described in a JSON/YAML config
ConfigFamily = Annotated[
    Section2Example | Example52 | Example53 | Remark42 | BirthDeath | FiniteExplicit,
    Field(discriminator="family"),
]

BUILTIN_FAMILIES: dict[str, str] = {
    "section2": "Single-birth DTMC with non-convergent last-column truncation",
    "example52": "Single-death CTMC with geometric jumps (b > 2)",
    "example53": "Extended branching process, geometric offspring",
    "remark42": "Star-shaped CTMC with decreasing return time under augmentation",
    "birth_death": "Birth-death CTMC from rate sequences",
    "finite": "Finite stochastic matrix or generator",
}


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def section2_up(i: int) -> float:
    """p_i of the section-2 family (p_0 = 1/2; odd i: 1/2; even i >= 2: 1 - 3^{-i/2})."""
    if i == 0 or i % 2 == 1:
        return 0.5
    return 1.0 - 3.0 ** (-(i // 2))


def section2_down(i: int) -> float:
    """q_i = 1 - p_i, evaluated without cancellation."""
    if i == 0 or i % 2 == 1:
        return 0.5
    return 3.0 ** (-(i // 2))


def _build_section2(params: Section2Example) -> ChainSpec:
    def row(i: int) -> list[tuple[int, float]]:
        return [(0, section2_down(i)), (i + 1, section2_up(i))]

    def tail(i: int, k: int) -> float:
        return section2_up(i) if i + 1 >= k else 0.0

    return ChainSpec(
        kind=ChainKind.DISCRETE,
        row_oracle=row,
        tail_oracle=tail,
        description=f"section-2 single-birth chain (g choice {params.g_choice})",
        structure=Structure.SINGLE_BIRTH,
    )


def _build_example52(params: Example52) -> ChainSpec:
    b = params.b

    def row(i: int) -> Iterator[tuple[int, float]]:
        if i == 0:
            return ((j, (b - 1) / b ** (j + 1)) for j in itertools.count(1))
        up = ((i + k, (b - 1) / b ** (k + 2)) for k in itertools.count(1))
        return itertools.chain([(i - 1, (b - 1) / b)], up)

    def total(i: int) -> float:
        return 1.0 / b if i == 0 else (b * b - b + 1) / (b * b)

    def tail(i: int, k: int) -> float:
        if i == 0:
            return b ** (-k)
        return b ** (-(k - i + 1))

    return ChainSpec(
        kind=ChainKind.CONTINUOUS,
        row_oracle=row,
        diag_oracle=total,
        tail_oracle=tail,
        description=f"single-death chain with geometric jumps, b={b:g}",
        structure=Structure.SINGLE_DEATH,
    )


def _build_example53(params: Example53) -> ChainSpec:
    alpha = params.alpha

    def row(i: int) -> Iterator[tuple[int, float]]:
        if i == 0:
            return ((j, 2.0 / 3.0**j) for j in itertools.count(1))
        scale = float(i) ** alpha
        up = ((i + k, scale / 3.0 ** (k + 1)) for k in itertools.count(1))
        return itertools.chain([(i - 1, scale)], up)

    def total(i: int) -> float:
        return 1.0 if i == 0 else float(i) ** alpha * 7.0 / 6.0

    def tail(i: int, k: int) -> float:
        if i == 0:
            return 3.0 ** (-(k - 1))
        return float(i) ** alpha / (2.0 * 3.0 ** (k - i))

    return ChainSpec(
        kind=ChainKind.CONTINUOUS,
        row_oracle=row,
        diag_oracle=total,
        tail_oracle=tail,
        description=f"extended branching process, alpha={alpha:g}",
        structure=Structure.SINGLE_DEATH,
    )


def _build_remark42(params: Remark42) -> ChainSpec:
    lam, p = params.lam, params.p
    end = p.support_end()

    def row(i: int) -> Iterator[tuple[int, float]]:
        if i == 0:
            targets = itertools.count(1) if end is None else range(1, end + 1)
            return ((t, lam.at(0) * p.at(t)) for t in targets if p.at(t) > 0)
        return iter([(0, lam.at(i))])

    def total(i: int) -> float:
        return lam.at(i)

    def tail(i: int, k: int) -> float:
        return lam.at(0) * p.tail(max(k, 1)) if i == 0 else 0.0

    return ChainSpec(
        kind=ChainKind.CONTINUOUS,
        row_oracle=row,
        diag_oracle=total,
        tail_oracle=tail,
        description="star-shaped chain of the return-time counterexample",
    )


def _build_birth_death(params: BirthDeath) -> ChainSpec:
    birth, death = params.birth, params.death

    def row(i: int) -> list[tuple[int, float]]:
        entries = [(i + 1, birth.at(i))]
        if i > 0:
            entries.insert(0, (i - 1, death.at(i)))
        return entries

    def total(i: int) -> float:
        return birth.at(i) + (death.at(i) if i > 0 else 0.0)

    def tail(i: int, k: int) -> float:
        return birth.at(i) if i + 1 >= k else 0.0

    return ChainSpec(
        kind=ChainKind.CONTINUOUS,
        row_oracle=row,
        diag_oracle=total,
        tail_oracle=tail,
        description="birth-death chain",
        structure=Structure.BIRTH_DEATH,
    )


def detect_structure(matrix: np.ndarray) -> Structure:
    """Skip-free structure of a finite matrix (off-diagonal pattern only)."""
    m = matrix.shape[0]
    if m < 2:
        return Structure.GENERAL
    off = matrix - np.diag(np.diag(matrix))
    no_long_up = not np.any(np.triu(off, 2))
    no_long_down = not np.any(np.tril(off, -2))
    up_ok = bool(np.all(np.diag(off, 1) > 0))
    down_ok = bool(np.all(np.diag(off, -1) > 0))
    if no_long_up and no_long_down and up_ok and down_ok:
        return Structure.BIRTH_DEATH
    if no_long_up and up_ok:
        return Structure.SINGLE_BIRTH
    if no_long_down and down_ok:
        return Structure.SINGLE_DEATH
    return Structure.GENERAL


def _build_finite(params: FiniteExplicit) -> ChainSpec:
    a = np.asarray(params.matrix, dtype=float)
    m = a.shape[0]
    continuous = params.kind is ChainKind.CONTINUOUS
    rows: list[tuple[tuple[int, float], ...]] = []
    for i in range(m):
        rows.append(
            tuple(
                (k, float(a[i, k]))
                for k in range(m)
                if a[i, k] != 0 and not (continuous and k == i)
            )
        )

    def row(i: int) -> tuple[tuple[int, float], ...]:
        return rows[i]

    def total(i: int) -> float:
        return float(-a[i, i])

    def tail(i: int, k: int) -> float:
        return math.fsum(v for t, v in rows[i] if t >= k)

    return ChainSpec(
        kind=params.kind,
        row_oracle=row,
        diag_oracle=total if continuous else None,
        tail_oracle=tail,
        description=f"finite {params.kind.value} chain on {m} states",
        structure=detect_structure(a),
        size=m,
    )


def _build_single_birth(params: SingleBirthCustom) -> ChainSpec:
    up, down = params.up, params.down

    def row(i: int) -> list[tuple[int, float]]:
        entries = [(k, float(down(i, k))) for k in range(i + 1)]
        entries = [(k, v) for k, v in entries if v != 0.0]
        entries.append((i + 1, float(up(i))))
        return entries

    def tail(i: int, k: int) -> float:
        return float(up(i)) if i + 1 >= k else 0.0

    for i in range(_VALIDATION_ROWS):
        values = [v for _, v in row(i)]
        if up(i) <= 0 or any(v < 0 for v in values):
            raise InvalidParamsError(
                f"single-birth row {i} needs p_(i,i+1) > 0 and non-negative entries",
                details={"state": i},
            )
        if abs(math.fsum(values) - 1.0) > ROW_SUM_TOL:
            raise InvalidParamsError(
                f"single-birth row {i} does not sum to 1", details={"state": i}
            )

    return ChainSpec(
        kind=ChainKind.DISCRETE,
        row_oracle=row,
        tail_oracle=tail,
        description="custom single-birth chain",
        structure=Structure.SINGLE_BIRTH,
    )


def summed_tail(term: Callable[[int], float], start: int) -> float:
    """Sum term(start) + term(start+1) + ... to relative tolerance 1e-14.

    Stops after eight consecutive terms below the tolerance.
    """
    terms: list[float] = []
    small = 0
    for idx in range(start, start + _TAIL_SUM_MAX_TERMS):
        t = float(term(idx))
        terms.append(t)
        total = math.fsum(terms)
        if abs(t) <= _TAIL_SUM_RTOL * abs(total):
            small += 1
            if small >= 8:
                return total
        else:
            small = 0
    logger.warning(f"Tail sum from {start} did not settle after {_TAIL_SUM_MAX_TERMS} terms")
    return math.fsum(terms)


def _build_single_death(params: SingleDeathCustom) -> ChainSpec:
    down, up, up_tail = params.down, params.up, params.up_tail

    def row(i: int) -> Iterator[tuple[int, float]]:
        ups = ((i + k, float(up(i, k))) for k in itertools.count(1))
        ups = ((t, v) for t, v in ups if v != 0.0)
        if i == 0:
            return ups
        return itertools.chain([(i - 1, float(down(i)))], ups)

    def tail(i: int, k: int) -> float:
        offset = max(k - i, 1)
        if up_tail is not None:
            return float(up_tail(i, offset))
        return summed_tail(lambda l: up(i, l), offset)

    def total(i: int) -> float:
        return (float(down(i)) if i > 0 else 0.0) + tail(i, i + 1)

    for i in range(1, _VALIDATION_ROWS):
        if down(i) <= 0:
            raise InvalidParamsError(
                f"single-death row {i} needs q_(i,i-1) > 0", details={"state": i}
            )

    return ChainSpec(
        kind=ChainKind.CONTINUOUS,
        row_oracle=row,
        diag_oracle=total,
        tail_oracle=tail,
        description="custom single-death chain",
        structure=Structure.SINGLE_DEATH,
    )


def make_builtin(family: FamilyParams) -> ChainSpec:
    """Build the chain of a model family.

    Args:
        family: Validated family parameters

    Returns:
        ChainSpec reproducing the family's rows

    Raises:
        InvalidParamsError: If the family parameters are inconsistent
    """
    if isinstance(family, Section2Example):
        spec = _build_section2(family)
    elif isinstance(family, Example52):
        spec = _build_example52(family)
    elif isinstance(family, Example53):
        spec = _build_example53(family)
    elif isinstance(family, Remark42):
        spec = _build_remark42(family)
    elif isinstance(family, BirthDeath):
        spec = _build_birth_death(family)
    elif isinstance(family, FiniteExplicit):
        spec = _build_finite(family)
    elif isinstance(family, SingleBirthCustom):
        spec = _build_single_birth(family)
    elif isinstance(family, SingleDeathCustom):
        spec = _build_single_death(family)
    else:
        raise InvalidParamsError(f"Unknown family: {family!r}")
    logger.debug(f"Built chain: {spec.description}")
    return spec


def family_from_dict(data: dict[str, object]) -> FamilyParams:
    """Parse ``{"family": name, "params": {...}}`` into family parameters.

    Raises:
        InvalidParamsError: On unknown families or constraint violations
    """
    from pydantic import TypeAdapter

    payload = {"family": data.get("family"), **dict(data.get("params") or {})}  # type: ignore[arg-type]
    try:
        return TypeAdapter(ConfigFamily).validate_python(payload)
    except ValidationError as e:
        raise InvalidParamsError(
            f"Invalid parameters for family {data.get('family')!r}",
            details={"errors": [err["msg"] for err in e.errors()]},
            original_error=e,
        )


def row(spec: ChainSpec, i: int) -> SparseRow:
    """Sparse row ``i`` of ``spec`` (lazy, sorted by target)."""
    return spec.row(i)


@dataclass(frozen=True)
class SubKernel:
    """Northwest-corner truncation of a chain.

    Attributes:
        kind: Time type of the chain
        n: Truncation level; the matrix is (n+1) x (n+1)
        entries: p_ik (or q_ik, with q_ii = -q_i on the diagonal) for i, k <= n
        deficit: Mass (or rate) each row sends beyond level n, when known exactly
    """

    kind: ChainKind
    n: int
    entries: np.ndarray
    deficit: np.ndarray | None = field(default=None)

    @property
    def is_continuous(self) -> bool:
        return self.kind is ChainKind.CONTINUOUS


def truncate(spec: ChainSpec, n: int) -> SubKernel:
    """(n+1) x (n+1) northwest corner of the transition matrix or generator.

    Args:
        spec: Chain to truncate
        n: Level (largest kept state)

    Returns:
        SubKernel whose entries equal the row entries restricted to targets <= n
    """
    if n < 0:
        raise InvalidParamsError(
            f"Truncation level must be non-negative, got {n}", ErrorCode.LEVEL_OUT_OF_RANGE
        )
    if spec.size is not None and n >= spec.size:
        raise InvalidParamsError(
            f"Level {n} exceeds the {spec.size}-state space",
            ErrorCode.LEVEL_OUT_OF_RANGE,
            {"level": n, "size": spec.size},
        )
    entries = np.zeros((n + 1, n + 1))
    for i in range(n + 1):
        for target, value in spec.row(i):
            if target > n:
                break
            entries[i, target] = value
        if spec.is_continuous:
            entries[i, i] = -spec.total_rate(i)

    deficit = None
    if spec.tail_oracle is not None:
        if spec.size is not None and n == spec.size - 1:
            deficit = np.zeros(n + 1)
        else:
            deficit = np.array([spec.tail(i, n + 1) for i in range(n + 1)])
    return SubKernel(kind=spec.kind, n=n, entries=entries, deficit=deficit)

"""Series solvers for skip-free chains.

Single-birth DTMCs (up by at most one) admit a forward recursion for the
differences d(m) = f(m) - f(m+1); single-death CTMCs (down by at most one) admit a
backward recursion for d(m) = f(m) - f(m-1) whose infinite tail is cut at a
cutoff K and doubled until the result settles. The F and G tables are exposed
for inspection; the solvers contract them against the centered forcing through
the equivalent recursions instead of storing them.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from markov_poisson.chain import ChainKind, ChainSpec, ForcingFunction
from markov_poisson.errors import (
    InvalidParamsError,
    NotBirthDeathError,
    NotSingleBirthError,
    NotSingleDeathError,
    TailNotConvergedError,
)

logger = logging.getLogger(__name__)

PiLike = Callable[[int], float] | np.ndarray


@dataclass(frozen=True)
class TailControl:
    """Cutoff policy for infinite sums.

    Attributes:
        tol: Largest relative change accepted when the cutoff doubles
        initial: First cutoff tried
        max_cutoff: Cutoff at which doubling gives up
    """

    tol: float = 1e-12
    initial: int = 64
    max_cutoff: int = 8192


@dataclass(frozen=True)
class SeriesValue:
    """A tail-controlled result.

    Attributes:
        value: Scalar or vector result at the final cutoff
        cutoff: Final cutoff K
        change: Relative change from the previous cutoff (0 when exact)
    """

    value: np.ndarray | float
    cutoff: int
    change: float


@dataclass(frozen=True)
class FTable:
    """F_m^{(i)} for 0 <= i <= m <= M with the partial sums p_m^{(k)}."""

    up: np.ndarray
    partial: np.ndarray
    values: np.ndarray

    def recursion_residual(self) -> float:
        """Largest violation of F_m^{(i)} p_(m,m+1) = sum_{k=i}^{m-1} p_m^{(k)} F_k^{(i)}."""
        size = self.values.shape[0]
        worst = 0.0
        for m in range(1, size):
            for i in range(m):
                rhs = self.partial[m, i:m] @ self.values[i:m, i]
                worst = max(worst, abs(self.values[m, i] * self.up[m] - rhs))
        return worst


@dataclass(frozen=True)
class GTable:
    """G_m^{(i)} for 1 <= m <= i <= K with the tail sums q_m^{(k)}."""

    down: np.ndarray
    tails: np.ndarray
    values: np.ndarray

    def recursion_residual(self) -> float:
        """Largest violation of G_m^{(i)} q_(m,m-1) = sum_{l=m+1}^{i} q_m^{(l)} G_l^{(i)}."""
        size = self.values.shape[0]
        worst = 0.0
        for i in range(1, size):
            for m in range(1, i):
                rhs = self.tails[m, m + 1 : i + 1] @ self.values[m + 1 : i + 1, i]
                worst = max(worst, abs(self.values[m, i] * self.down[m] - rhs))
        return worst


def _until_stable(
    evaluate: Callable[[int], np.ndarray],
    start: int,
    control: TailControl,
    exact_at: int | None = None,
) -> SeriesValue:
    """Evaluate with doubling cutoffs until the relative change is within tol."""
    if exact_at is not None and start >= exact_at:
        return SeriesValue(evaluate(exact_at), exact_at, 0.0)
    cutoff = max(start, control.initial)
    previous = evaluate(cutoff)
    while True:
        nxt = 2 * cutoff
        if exact_at is not None and nxt >= exact_at:
            return SeriesValue(evaluate(exact_at), exact_at, 0.0)
        if nxt > control.max_cutoff:
            raise TailNotConvergedError(
                f"Series did not settle by cutoff {control.max_cutoff}",
                details={"cutoff": cutoff, "tol": control.tol},
            )
        current = evaluate(nxt)
        scale = 1.0 + float(np.max(np.abs(current)))
        change = float(np.max(np.abs(current - previous))) / scale
        logger.debug(f"Tail cutoff {cutoff} -> {nxt}: change {change:.3e}")
        if change <= control.tol:
            return SeriesValue(current, nxt, change)
        previous, cutoff = current, nxt


def _last_state(spec: ChainSpec) -> int | None:
    return None if spec.size is None else spec.size - 1


# ---------------------------------------------------------------------------
# Single-birth DTMC
# ---------------------------------------------------------------------------


def _single_birth_row(spec: ChainSpec, m: int) -> tuple[float, np.ndarray]:
    """p_(m,m+1) and the partial sums p_m^{(k)} for k < m."""
    probs = np.zeros(m + 2)
    for target, value in spec.row(m):
        if target > m + 1:
            if value != 0:
                raise NotSingleBirthError(
                    f"Row {m} jumps up to {target}", details={"state": m}
                )
            break
        probs[target] = value
    up = probs[m + 1]
    if up <= 0:
        raise NotSingleBirthError(
            f"Row {m} has no upward step", details={"state": m}
        )
    return up, np.cumsum(probs[:m])


def _check_single_birth(spec: ChainSpec) -> None:
    if spec.kind is not ChainKind.DISCRETE:
        raise NotSingleBirthError(
            "Single-birth solver needs a discrete-time chain",
            details={"kind": spec.kind.value},
        )


def f_table(spec: ChainSpec, size: int) -> FTable:
    """Tabulate F_m^{(i)} for 0 <= i <= m < size."""
    _check_single_birth(spec)
    up = np.zeros(size)
    partial = np.zeros((size, size))
    values = np.zeros((size, size))
    for m in range(size):
        up[m], sums = _single_birth_row(spec, m)
        partial[m, :m] = sums
        values[m, m] = 1.0
        for i in range(m):
            values[m, i] = partial[m, i:m] @ values[i:m, i] / up[m]
    return FTable(up=up, partial=partial, values=values)


def single_birth_differences(
    spec: ChainSpec, g: ForcingFunction, mean: float, count: int
) -> np.ndarray:
    """d(m) = f(m) - f(m+1) = sum_{k<=m} F_m^{(k)} gbar(k) / p_(k,k+1), m < count."""
    _check_single_birth(spec)
    d = np.zeros(count)
    for m in range(count):
        up, sums = _single_birth_row(spec, m)
        d[m] = (g(m) - mean + sums @ d[:m]) / up
    return d


def single_birth_poisson(
    spec: ChainSpec, g: ForcingFunction, j: int, mean: float, size: int
) -> np.ndarray:
    """Solution f_j on {0, ..., size - 1} of a single-birth chain.

    f_j(i) = sum_{m=i}^{j-1} d(m) for i < j and -sum_{m=j}^{i-1} d(m) for i > j.

    Args:
        spec: Single-birth DTMC
        g: Forcing function
        j: Anchor state
        mean: Stationary mean pi^T g
        size: Number of states to return

    Returns:
        Vector (f_j(0), ..., f_j(size - 1))

    Raises:
        NotSingleBirthError: If some row jumps up by more than one
    """
    if size < 1 or j < 0:
        raise InvalidParamsError(f"Need size >= 1 and j >= 0, got {size}, {j}")
    d = single_birth_differences(spec, g, mean, max(size, j + 1))
    prefix = np.concatenate([[0.0], np.cumsum(d)])
    # f(i) - f(j) = prefix[j] - prefix[i]
    return prefix[j] - prefix[:size]


# ---------------------------------------------------------------------------
# Single-death CTMC
# ---------------------------------------------------------------------------


def _down_rate(spec: ChainSpec, m: int) -> float:
    target, value = next(spec.row(m), (m, 0.0))
    if target != m - 1 or value <= 0:
        raise NotSingleDeathError(
            f"Row {m} does not step down to {m - 1}", details={"state": m}
        )
    return value


def _check_single_death(spec: ChainSpec) -> None:
    if spec.kind is not ChainKind.CONTINUOUS:
        raise NotSingleDeathError(
            "Single-death solver needs a continuous-time chain",
            details={"kind": spec.kind.value},
        )


def g_table(spec: ChainSpec, size: int) -> GTable:
    """Tabulate G_m^{(i)} for 1 <= m <= i < size."""
    _check_single_death(spec)
    down = np.zeros(size)
    tails = np.zeros((size, size))
    values = np.zeros((size, size))
    for m in range(1, size):
        down[m] = _down_rate(spec, m)
        for k in range(m + 1, size):
            tails[m, k] = spec.tail(m, k)
    for i in range(1, size):
        values[i, i] = 1.0
        for m in range(i - 1, 0, -1):
            values[m, i] = tails[m, m + 1 : i + 1] @ values[m + 1 : i + 1, i] / down[m]
    return GTable(down=down, tails=tails, values=values)


def _death_differences(
    spec: ChainSpec, gbar: np.ndarray, cutoff: int
) -> np.ndarray:
    """d(m) for 1 <= m <= cutoff with the G-sum cut at ``cutoff``; d[0] = 0."""
    d = np.zeros(cutoff + 1)
    for m in range(cutoff, 0, -1):
        tails = np.array([spec.tail(m, l) for l in range(m + 1, cutoff + 1)])
        d[m] = (gbar[m] + tails @ d[m + 1 :]) / _down_rate(spec, m)
    return d


def single_death_differences(
    spec: ChainSpec,
    g: ForcingFunction,
    mean: float,
    count: int,
    tail: TailControl | None = None,
) -> SeriesValue:
    """d(m) = f(m) - f(m-1) = sum_{k>=m} G_m^{(k)} gbar(k) / q_(k,k-1) for m <= count."""
    _check_single_death(spec)
    control = tail or TailControl()
    last = _last_state(spec)

    def evaluate(cutoff: int) -> np.ndarray:
        gbar = g.values(cutoff) - mean
        return _death_differences(spec, gbar, cutoff)[: count + 1]

    return _until_stable(evaluate, 2 * count + 32, control, last)


def single_death_poisson(
    spec: ChainSpec,
    g: ForcingFunction,
    j: int,
    mean: float,
    size: int,
    tail: TailControl | None = None,
) -> SeriesValue:
    """Solution f_j on {0, ..., size - 1} of a single-death chain.

    f_j(i) = -sum_{m=i+1}^{j} d(m) for i < j and sum_{m=j+1}^{i} d(m) for i > j.

    Raises:
        NotSingleDeathError: If some row jumps down by more than one
        TailNotConvergedError: If the G-sums do not settle
    """
    if size < 1 or j < 0:
        raise InvalidParamsError(f"Need size >= 1 and j >= 0, got {size}, {j}")
    diffs = single_death_differences(spec, g, mean, max(size - 1, j), tail)
    d = np.asarray(diffs.value)
    level = np.cumsum(d)  # level[i] = f(i) - f(0)
    f = level[:size] - level[j]
    return SeriesValue(f, diffs.cutoff, diffs.change)


def _pi_values(pi: PiLike, count: int) -> np.ndarray:
    if callable(pi):
        return np.array([pi(i) for i in range(count)], dtype=float)
    values = np.asarray(pi, dtype=float)
    if values.size < count:
        return np.concatenate([values, np.zeros(count - values.size)])
    return values[:count]


def single_death_variance(
    spec: ChainSpec,
    g: ForcingFunction,
    pi: PiLike,
    mean: float | None = None,
    tail: TailControl | None = None,
) -> SeriesValue:
    """Variance constant 2 sum_{i>=1} pi(i) gbar(i) sum_{m=1}^{i} d(m).

    Args:
        spec: Single-death CTMC
        g: Forcing function
        pi: Invariant vector as a callable or array
        mean: pi^T g; defaults to ``g.known_mean`` or the sum over the cutoff
        tail: Cutoff policy

    Returns:
        SeriesValue with the variance constant
    """
    _check_single_death(spec)
    control = tail or TailControl()
    last = _last_state(spec)

    def evaluate(cutoff: int) -> np.ndarray:
        half = cutoff if last is not None and cutoff >= last else cutoff // 2
        weights = _pi_values(pi, cutoff + 1)
        gvec = g.values(cutoff)
        mu = _resolve_mean(mean, g, weights, gvec)
        gbar = gvec - mu
        f0 = np.cumsum(_death_differences(spec, gbar, cutoff))
        terms = weights[1 : half + 1] * gbar[1 : half + 1] * f0[1 : half + 1]
        return np.array([2.0 * math.fsum(terms)])

    result = _until_stable(evaluate, control.initial, control, last)
    return SeriesValue(float(np.asarray(result.value)[0]), result.cutoff, result.change)


def single_death_variance_partial_sums(
    spec: ChainSpec,
    g: ForcingFunction,
    pi: PiLike,
    levels: list[int],
    mean: float | None = None,
    tail: TailControl | None = None,
) -> np.ndarray:
    """Partial sums 2 sum_{i=1}^{n} pi(i) gbar(i) f_0(i) for each n in ``levels``."""
    top = max(levels)
    diffs = single_death_differences(
        spec, g, mean if mean is not None else _mean_or_fail(g), top, tail
    )
    mu = mean if mean is not None else _mean_or_fail(g)
    f0 = np.cumsum(np.asarray(diffs.value))
    weights = _pi_values(pi, top + 1)
    gbar = g.values(top) - mu
    terms = 2.0 * weights * gbar * f0
    return np.array([math.fsum(terms[1 : n + 1]) for n in levels])


def _mean_or_fail(g: ForcingFunction) -> float:
    if g.known_mean is None:
        raise InvalidParamsError("Partial sums need the stationary mean of g")
    return g.known_mean


def _resolve_mean(
    mean: float | None, g: ForcingFunction, weights: np.ndarray, gvec: np.ndarray
) -> float:
    if mean is not None:
        return mean
    if g.known_mean is not None:
        return g.known_mean
    return math.fsum(weights * gvec)


# ---------------------------------------------------------------------------
# Birth-death CTMC
# ---------------------------------------------------------------------------


def _birth_death_rates(spec: ChainSpec, i: int) -> tuple[float, float]:
    """(q_(i,i+1), q_(i,i-1)) with checks; births past a finite chain's end are 0."""
    birth = death = 0.0
    for target, value in spec.row(i):
        if target == i + 1:
            birth = value
        elif target == i - 1:
            death = value
        elif value != 0:
            raise NotBirthDeathError(
                f"Row {i} jumps to {target}", details={"state": i}
            )
    if (i > 0 and death <= 0) or (birth <= 0 and i != _last_state(spec)):
        raise NotBirthDeathError(
            f"Row {i} lacks a birth or death rate", details={"state": i}
        )
    return birth, death


def birth_death_pi(spec: ChainSpec, count: int) -> np.ndarray:
    """Unnormalised product-form weights prod_{k=1}^{i} q_(k-1,k) / q_(k,k-1)."""
    if spec.kind is not ChainKind.CONTINUOUS:
        raise NotBirthDeathError("Birth-death solver needs a continuous-time chain")
    weights = np.zeros(count)
    weights[0] = 1.0
    birth_prev, _ = _birth_death_rates(spec, 0)
    for i in range(1, count):
        birth, death = _birth_death_rates(spec, i)
        weights[i] = weights[i - 1] * birth_prev / death
        birth_prev = birth
    return weights


def birth_death_variance(
    spec: ChainSpec,
    g: ForcingFunction,
    pi: PiLike | None = None,
    mean: float | None = None,
    tail: TailControl | None = None,
) -> SeriesValue:
    """Variance constant 2 sum_i (sum_{k<=i} pi(k) gbar(k))^2 / (q_(i,i+1) pi(i)).

    The inner sums are evaluated as -sum_{k>i} pi(k) gbar(k) to avoid cancellation.
    When ``pi`` is omitted it comes from the product formula.

    Raises:
        NotBirthDeathError: If some row jumps by more than one
        TailNotConvergedError: If the series does not settle
    """
    control = tail or TailControl()
    last = _last_state(spec)

    def evaluate(cutoff: int) -> np.ndarray:
        count = cutoff + 1
        if pi is None:
            weights = birth_death_pi(spec, count)
            weights = weights / math.fsum(weights)
        else:
            weights = _pi_values(pi, count)
        gvec = g.values(cutoff)
        gbar = gvec - _resolve_mean(mean, g, weights, gvec)
        flux = weights * gbar
        # suffix[i] = sum_{k>i} pi(k) gbar(k)
        suffix = np.concatenate([np.cumsum(flux[::-1])[::-1][1:], [0.0]])
        half = cutoff if last is not None and cutoff >= last else cutoff // 2
        terms = []
        for i in range(min(half, count - 1) + 1):
            birth, _ = _birth_death_rates(spec, i)
            if birth <= 0 or weights[i] <= 0:
                continue
            terms.append(suffix[i] ** 2 / (birth * weights[i]))
        return np.array([2.0 * math.fsum(terms)])

    result = _until_stable(evaluate, control.initial, control, last)
    return SeriesValue(float(np.asarray(result.value)[0]), result.cutoff, result.change)

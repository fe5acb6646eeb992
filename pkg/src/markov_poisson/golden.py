"""Closed-form references for the built-in families.

Each record exposes the exact invariant vector, stationary mean, Poisson solution
and variance constant of a family under its reference forcing function, so
truncation sweeps and series solvers can be checked against known limits.
"""

from __future__ import annotations

import functools
import math
from collections.abc import Callable
from dataclasses import dataclass, field

from markov_poisson.chain import (
    Example52,
    Example53,
    FamilyParams,
    ForcingFunction,
    Remark42,
    Section2Example,
    section2_down,
    section2_up,
)
from markov_poisson.errors import InvalidParamsError

_SERIES_EPS = 1e-18
_SERIES_MAX = 10_000


def _converged_sum(term: Callable[[int], float], start: int = 0) -> float:
    """Sum term(start), term(start+1), ... until terms fall below 1e-18 of the total."""
    parts: list[float] = []
    for i in range(start, start + _SERIES_MAX):
        t = term(i)
        parts.append(t)
        if i > start + 4 and abs(t) <= _SERIES_EPS * abs(math.fsum(parts)):
            break
    return math.fsum(parts)


@dataclass(frozen=True)
class Example52Golden:
    """Geometric-jump single-death chain with g(i) = i."""

    b: float = 3.0

    def pi(self, i: int) -> float:
        b = self.b
        return (b - 2) / (b - 1) ** (i + 1)

    @property
    def mean(self) -> float:
        return 1.0 / (self.b - 2)

    @property
    def abs_third_moment(self) -> float:
        """pi^T |g|^3."""
        b = self.b
        return (b * b + 2 * b - 2) / (b - 2) ** 3

    def tail_sum(self, m: int, k: int) -> float:
        """q_m^{(k)} = sum_{l>=k} q_(m,l) for k > m."""
        if m == 0:
            return self.b ** (-k)
        return self.b ** (-(k - m + 1))

    def g_coefficient(self, m: int, i: int) -> float:
        """G_m^{(i)}: 1 on the diagonal, 1 / (b (b-1)^{i-m}) for i > m."""
        if i == m:
            return 1.0
        return 1.0 / (self.b * (self.b - 1) ** (i - m))

    def f(self, j: int, i: int) -> float:
        """f_j(i) = (i - j) [(i + j + 1)(b - 1) - 2] / (2 (b - 2))."""
        b = self.b
        return (i - j) * ((i + j + 1) * (b - 1) - 2) / (2 * (b - 2))

    @property
    def sigma2(self) -> float:
        b = self.b
        return (2 * b**3 - 6 * b**2 + 8 * b - 4) / (b - 2) ** 4

    def forcing(self) -> ForcingFunction:
        return ForcingFunction(float, known_mean=self.mean, description="g(i) = i")


@dataclass(frozen=True)
class Example53Golden:
    """Extended branching process (alpha = 1) with g(i) = i."""

    normaliser: float = field(default=1.0 + math.log(4.0))

    def pi(self, i: int) -> float:
        if i == 0:
            return 1.0 / self.normaliser
        return 1.0 / (i * 2.0 ** (i - 1) * self.normaliser)

    @property
    def mean(self) -> float:
        return 2.0 / self.normaliser

    @property
    def abs_third_moment(self) -> float:
        return 12.0 / self.normaliser

    def tail_sum(self, m: int, k: int) -> float:
        if m == 0:
            return 3.0 ** (-(k - 1))
        return m / (2.0 * 3.0 ** (k - m))

    def g_coefficient(self, m: int, i: int) -> float:
        if i == m:
            return 1.0
        return 1.0 / (3.0 * 2.0 ** (i - m))

    @functools.lru_cache(maxsize=None)  # noqa: B019
    def h(self, n: int) -> float:
        """h_n = 1/n + (1/3) sum_{l>=1} 1 / ((n + l) 2^l)."""
        tail = _converged_sum(lambda l: 1.0 / ((n + l) * 2.0**l), 1)
        return 1.0 / n + tail / 3.0

    def _h_prefix(self, i: int) -> float:
        return math.fsum(self.h(n) for n in range(1, i + 1))

    def f(self, j: int, i: int) -> float:
        """f_j(i) = f_0(i) - f_0(j) with f_0(i) = (4/3) i - mean * sum_{n<=i} h_n."""

        def f0(k: int) -> float:
            return 4.0 * k / 3.0 - self.mean * self._h_prefix(k)

        return f0(i) - f0(j)

    def _series_term(self, i: int) -> float:
        mu = self.mean
        return (i - mu) * (4.0 * i / 3.0 - mu * self._h_prefix(i)) / (i * 2.0 ** (i - 1))

    def partial_sum(self, n: int) -> float:
        """Variance series summed over its first n terms (i = 1..n)."""
        return self.mean * math.fsum(self._series_term(i) for i in range(1, n + 1))

    @property
    def sigma2(self) -> float:
        return self.mean * _converged_sum(self._series_term, 1)

    @staticmethod
    def error_bound(n: int) -> float:
        """Bound sum_{i>=n} i / 2^{i-2} = (n + 1) / 2^{n-3} on the tail of the series."""
        return (n + 1) / 2.0 ** (n - 3)

    def forcing(self) -> ForcingFunction:
        return ForcingFunction(float, known_mean=self.mean, description="g(i) = i")


@dataclass(frozen=True)
class Section2Golden:
    """Single-birth chain with alternating up-probabilities."""

    g_choice: int = 1

    @staticmethod
    def a(i: int) -> float:
        """a_i = p_0 p_1 ... p_{i-1}."""
        return math.prod(section2_up(k) for k in range(i))

    @functools.cached_property
    def _weights(self) -> list[float]:
        weights = [1.0]
        while weights[-1] > _SERIES_EPS * sum(weights) or len(weights) < 8:
            weights.append(weights[-1] * section2_up(len(weights) - 1))
        return weights

    @functools.cached_property
    def odd_constant(self) -> float:
        """c = sum (2i+1) a_{2i+1} / sum a_{2i+1}."""
        odd = range(1, len(self._weights), 2)
        top = math.fsum(k * self._weights[k] for k in odd)
        return top / math.fsum(self._weights[k] for k in odd)

    def g(self, i: int) -> float:
        if self.g_choice == 1 or i % 2 == 1:
            return float(i)
        return self.odd_constant

    def pi(self, i: int) -> float:
        return self.a(i) / math.fsum(self._weights)

    @functools.cached_property
    def mean(self) -> float:
        w = self._weights
        return math.fsum(self.g(i) * w[i] for i in range(len(w))) / math.fsum(w)

    def f0(self, i: int, mean: float | None = None) -> float:
        """f_0(i) = -sum_{m<i} gbar(m) / (p_m p_{m+1} ... p_{i-1})."""
        mu = self.mean if mean is None else mean
        terms = []
        for m in range(i):
            ratio = math.prod(section2_up(k) for k in range(m, i))
            terms.append((self.g(m) - mu) / ratio)
        return -math.fsum(terms)

    def last_column_pi0(self, n: int) -> float:
        """pi_n(0) = 1 / (sum_{i<n} a_i + a_n / q_n) under last-column augmentation, n >= 1."""
        return 1.0 / (
            math.fsum(self.a(i) for i in range(n)) + self.a(n) / section2_down(n)
        )

    def last_column_mean(self, n: int) -> float:
        """Stationary mean of g under the level-n last-column augmentation."""
        pi0 = self.last_column_pi0(n)
        head = math.fsum(self.g(i) * self.a(i) for i in range(n))
        return pi0 * (head + self.g(n) * self.a(n) / section2_down(n))

    def last_column_f0(self, n: int, i: int) -> float:
        """f_0 of the level-n last-column augmentation, valid for i <= n."""
        return self.f0(i, mean=self.last_column_mean(n))

    def forcing(self) -> ForcingFunction:
        label = "g(i) = i" if self.g_choice == 1 else "g(i) = i (odd), c (even)"
        return ForcingFunction(self.g, known_mean=self.mean, description=label)


@dataclass(frozen=True)
class Remark42Golden:
    """Star-shaped chain whose return time shrinks under linear augmentation."""

    params: Remark42 = field(default_factory=Remark42)

    def linear_return_time(self, n: int) -> float:
        """E_0[delta_0] of the level-n linear augmentation at column 0."""
        lam, p = self.params.lam, self.params.p
        mass = math.fsum(p.at(i) for i in range(1, n + 1))
        visits = math.fsum(p.at(i) / lam.at(i) for i in range(1, n + 1))
        return (1.0 / lam.at(0) + visits) / mass

    @staticmethod
    def geometric_return_time(n: int) -> float:
        """(4/3)(1 - 4^{-(n+1)}) / (1 - 2^{-n}) for lambda_i = 2^i, p_i = 2^{-i}."""
        return (4.0 / 3.0) * (1.0 - 4.0 ** (-(n + 1))) / (1.0 - 2.0 ** (-n))

    def return_time(self) -> float:
        """E_0[delta_0] of the full chain."""
        lam, p = self.params.lam, self.params.p
        return 1.0 / lam.at(0) + _converged_sum(lambda i: p.at(i) / lam.at(i), 1)

    def forcing(self) -> ForcingFunction:
        return ForcingFunction(float, description="g(i) = i")


GoldenRecord = Example52Golden | Example53Golden | Section2Golden | Remark42Golden


def example_closed_forms(family: FamilyParams) -> GoldenRecord:
    """Closed-form reference record of a built-in family.

    Raises:
        InvalidParamsError: If the family has no closed forms
    """
    if isinstance(family, Example52):
        return Example52Golden(b=family.b)
    if isinstance(family, Example53):
        if family.alpha != 1.0:
            raise InvalidParamsError(
                "Closed forms for the branching family need alpha = 1",
                details={"alpha": family.alpha},
            )
        return Example53Golden()
    if isinstance(family, Section2Example):
        return Section2Golden(g_choice=family.g_choice)
    if isinstance(family, Remark42):
        return Remark42Golden(params=family)
    raise InvalidParamsError(
        f"No closed forms for family {getattr(family, 'family', family)!r}"
    )

"""Unit tests for structured module."""

from __future__ import annotations

import numpy as np
import pytest

from markov_poisson.chain import (
    BirthDeath,
    ChainKind,
    Example52,
    Example53,
    FiniteExplicit,
    ForcingFunction,
    Section2Example,
    SequenceSpec,
    SingleDeathCustom,
    make_builtin,
    truncate,
)
from markov_poisson.errors import (
    InvalidParamsError,
    NotBirthDeathError,
    NotSingleBirthError,
    NotSingleDeathError,
    TailNotConvergedError,
)
from markov_poisson.golden import Example52Golden, Example53Golden, Section2Golden
from markov_poisson.solver import poisson_solve, stationary_mean, variance_ctmc
from markov_poisson.structured import (
    TailControl,
    birth_death_pi,
    birth_death_variance,
    f_table,
    g_table,
    single_birth_poisson,
    single_death_poisson,
    single_death_variance,
    single_death_variance_partial_sums,
)
from markov_poisson.truncation import (
    FiniteKernel,
    augment_last_column,
    censor_single_death,
)

PARTIAL_SUM_ROW = [
    1.4448, 1.4585, 1.4627, 1.4640, 1.4643, 1.4644, 1.4645, 1.4645, 1.4645
]


def test_f_table_recursion():
    """F coefficients satisfy their defining recursion."""
    table = f_table(make_builtin(Section2Example()), 12)
    np.testing.assert_array_equal(np.diag(table.values), np.ones(12))
    assert table.recursion_residual() <= 1e-12
    assert table.up[0] == 0.5


@pytest.mark.parametrize(
    ("family", "golden"),
    [(Example52(b=3.0), Example52Golden(b=3.0)), (Example53(), Example53Golden())],
)
def test_g_table_matches_closed_form(family, golden):
    """G coefficients agree with the closed forms of both single-death families."""
    table = g_table(make_builtin(family), 12)
    for i in range(1, 12):
        for m in range(1, i + 1):
            assert table.values[m, i] == pytest.approx(
                golden.g_coefficient(m, i), rel=1e-12
            )
    assert table.recursion_residual() <= 1e-12


def test_single_birth_matches_closed_form():
    """Series solution of the section-2 chain against its closed form."""
    golden = Section2Golden()
    spec = make_builtin(Section2Example())
    f = single_birth_poisson(spec, golden.forcing(), 0, golden.mean, 16)
    expected = [golden.f0(i) for i in range(16)]
    np.testing.assert_allclose(f, expected, rtol=1e-10, atol=1e-10)


def test_single_birth_matches_finite_solver():
    """Rows below the level are shared with the last-column kernel."""
    golden = Section2Golden()
    spec = make_builtin(Section2Example())
    n = 9
    kernel = augment_last_column(truncate(spec, n))
    g = golden.forcing()
    mean = stationary_mean(kernel, g)
    for j in (0, 4):
        finite = poisson_solve(kernel, g, j).f
        series = single_birth_poisson(spec, g, j, mean, n + 1)
        np.testing.assert_allclose(series, finite, rtol=1e-9, atol=1e-9)


def test_single_birth_rejects_other_chains():
    """Single-birth solver needs upward steps of one in discrete time."""
    with pytest.raises(NotSingleBirthError):
        f_table(make_builtin(Example52()), 4)
    jumpy = make_builtin(
        FiniteExplicit(matrix=((0.0, 0.0, 1.0), (0.5, 0.0, 0.5), (0.5, 0.5, 0.0)))
    )
    with pytest.raises(NotSingleBirthError):
        single_birth_poisson(jumpy, ForcingFunction.identity(), 0, 1.0, 3)
    with pytest.raises(InvalidParamsError):
        single_birth_poisson(
            make_builtin(Section2Example()), ForcingFunction.identity(), -1, 1.0, 3
        )


@pytest.mark.parametrize("j", [0, 3])
def test_single_death_example52(j):
    """Series solution of the geometric-jump chain is quadratic."""
    golden = Example52Golden(b=3.0)
    spec = make_builtin(Example52(b=3.0))
    result = single_death_poisson(spec, golden.forcing(), j, golden.mean, 11)
    expected = [golden.f(j, i) for i in range(11)]
    np.testing.assert_allclose(result.value, expected, rtol=1e-9, atol=1e-9)
    assert result.change <= 1e-12


def test_single_death_example53():
    """Series solution of the branching process against its closed form."""
    golden = Example53Golden()
    spec = make_builtin(Example53())
    result = single_death_poisson(spec, golden.forcing(), 2, golden.mean, 10)
    expected = [golden.f(2, i) for i in range(10)]
    np.testing.assert_allclose(result.value, expected, rtol=1e-8, atol=1e-9)


def test_single_death_matches_censored_solver():
    """Censored levels well above a state reproduce the series solution."""
    golden = Example53Golden()
    spec = make_builtin(Example53())
    series = single_death_poisson(spec, golden.forcing(), 0, golden.mean, 6).value
    kernel = censor_single_death(spec, 40)
    finite = poisson_solve(kernel, ForcingFunction.identity(), 0).f
    np.testing.assert_allclose(finite[:6], series, atol=1e-8)


def test_single_death_custom_rules():
    """Rule-based chains reproduce the built-in geometric-jump chain."""

    def up(i: int, k: int) -> float:
        return 2.0 / 3.0 ** (k + 1) if i == 0 else 2.0 / 3.0 ** (k + 2)

    def up_tail(i: int, k: int) -> float:
        return 3.0 ** (-k) if i == 0 else 3.0 ** (-(k + 1))

    spec = make_builtin(
        SingleDeathCustom(down=lambda i: 2.0 / 3.0, up=up, up_tail=up_tail)
    )
    golden = Example52Golden(b=3.0)
    result = single_death_poisson(spec, golden.forcing(), 0, golden.mean, 8)
    np.testing.assert_allclose(result.value, [i * i for i in range(8)], atol=1e-9)


def test_single_death_finite_chain():
    """On a finite generator the series is exact."""
    matrix = ((-1.0, 1.0, 0.0), (2.0, -3.0, 1.0), (0.0, 2.0, -2.0))
    spec = make_builtin(FiniteExplicit(kind=ChainKind.CONTINUOUS, matrix=matrix))
    full = FiniteKernel.from_matrix(matrix, ChainKind.CONTINUOUS)
    g = ForcingFunction.identity()
    mean = stationary_mean(full, g)
    result = single_death_poisson(spec, g, 1, mean, 3)
    assert result.cutoff == 2
    assert result.change == 0.0
    np.testing.assert_allclose(result.value, poisson_solve(full, g, 1).f, atol=1e-12)


def test_single_death_rejects_other_chains():
    """Single-death solver needs a continuous chain stepping down by one."""
    with pytest.raises(NotSingleDeathError):
        single_death_poisson(
            make_builtin(Section2Example()), ForcingFunction.identity(), 0, 1.0, 3
        )
    with pytest.raises(NotSingleDeathError):
        g_table(make_builtin(Section2Example()), 3)


def test_single_death_tail_not_converged():
    """A cutoff cap below the first doubling reports non-convergence."""
    golden = Example53Golden()
    control = TailControl(tol=1e-15, initial=16, max_cutoff=32)
    with pytest.raises(TailNotConvergedError):
        single_death_poisson(
            make_builtin(Example53()), golden.forcing(), 0, golden.mean, 4, control
        )


def test_single_death_variance_example52():
    """Variance series of the geometric-jump chain sums to 20 at b = 3."""
    golden = Example52Golden(b=3.0)
    result = single_death_variance(
        make_builtin(Example52(b=3.0)), golden.forcing(), golden.pi
    )
    assert result.value == pytest.approx(20.0, rel=1e-9)


def test_single_death_variance_example53():
    """Variance series of the branching process."""
    golden = Example53Golden()
    result = single_death_variance(
        make_builtin(Example53()), golden.forcing(), golden.pi
    )
    assert result.value == pytest.approx(golden.sigma2, rel=1e-8)
    assert result.value == pytest.approx(1.4645, abs=5e-5)


def test_single_death_variance_partial_sums():
    """Partial sums through the structured solver reproduce the reference row."""
    golden = Example53Golden()
    levels = list(range(10, 27, 2))
    sums = single_death_variance_partial_sums(
        make_builtin(Example53()), golden.forcing(), golden.pi, levels
    )
    np.testing.assert_allclose(sums, [golden.partial_sum(n) for n in levels], rtol=1e-9)
    np.testing.assert_allclose(sums, PARTIAL_SUM_ROW, atol=5e-5)


def test_partial_sums_need_mean():
    """Without a known mean the partial sums cannot be formed."""
    with pytest.raises(InvalidParamsError):
        single_death_variance_partial_sums(
            make_builtin(Example53()), ForcingFunction.identity(), lambda i: 0.0, [4]
        )


def _constant_birth_death() -> BirthDeath:
    return BirthDeath(
        birth=SequenceSpec(scale=1.0, ratio=1.0),
        death=SequenceSpec(scale=2.0, ratio=1.0),
    )


def test_birth_death_pi():
    """Product-form weights of a constant-rate birth-death chain are geometric."""
    weights = birth_death_pi(make_builtin(_constant_birth_death()), 5)
    np.testing.assert_allclose(weights, 0.5 ** np.arange(5))


def test_birth_death_variance_matches_finite_solver():
    """Birth-death series against the finite solver on a deep censored level."""
    spec = make_builtin(_constant_birth_death())
    g = ForcingFunction.identity()
    series = birth_death_variance(spec, g)
    finite = variance_ctmc(censor_single_death(spec, 100), g, 0)
    assert series.value == pytest.approx(finite.sigma2, rel=1e-8)


def test_birth_death_variance_queue_length():
    """Queue length of M/M/1 with rho = 1/2 has 2 rho (1 + rho) / (mu (1 - rho)^4) = 12."""
    spec = make_builtin(_constant_birth_death())
    series = birth_death_variance(spec, ForcingFunction.identity())
    assert series.value == pytest.approx(12.0, rel=1e-9)


def test_birth_death_variance_with_given_pi():
    """Explicit invariant vectors and means are used as given."""
    spec = make_builtin(_constant_birth_death())
    g = ForcingFunction.identity()
    implicit = birth_death_variance(spec, g)
    explicit = birth_death_variance(spec, g, pi=lambda i: 0.5 ** (i + 1), mean=1.0)
    assert explicit.value == pytest.approx(implicit.value, rel=1e-10)


def test_birth_death_rejects_long_jumps():
    """Chains with jumps longer than one are not birth-death."""
    with pytest.raises(NotBirthDeathError):
        birth_death_variance(make_builtin(Example52()), ForcingFunction.identity())
    with pytest.raises(NotBirthDeathError):
        birth_death_pi(make_builtin(Section2Example()), 3)

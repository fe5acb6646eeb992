"""Unit tests for golden module."""

from __future__ import annotations

import math

import numpy as np
import pytest

from markov_poisson.chain import (
    BirthDeath,
    Example52,
    Example53,
    Remark42,
    Section2Example,
    SequenceSpec,
    make_builtin,
    truncate,
)
from markov_poisson.errors import InvalidParamsError
from markov_poisson.golden import (
    Example52Golden,
    Example53Golden,
    Remark42Golden,
    Section2Golden,
    example_closed_forms,
)
from markov_poisson.solver import (
    invariant_gth,
    poisson_solve,
    return_moments_ctmc,
    stationary_mean,
)
from markov_poisson.truncation import augment_last_column, augment_linear

# Partial sums of the branching-process variance series at n = 10, 12, ..., 26
PARTIAL_SUM_ROW = [
    1.4448, 1.4585, 1.4627, 1.4640, 1.4643, 1.4644, 1.4645, 1.4645, 1.4645
]


def test_example52_closed_forms():
    """Geometric-jump chain at b = 3."""
    golden = Example52Golden(b=3.0)
    assert [golden.pi(i) for i in range(4)] == [0.5, 0.25, 0.125, 0.0625]
    assert math.fsum(golden.pi(i) for i in range(200)) == pytest.approx(1.0)
    assert golden.mean == 1.0
    assert golden.sigma2 == pytest.approx(20.0)
    assert [golden.f(0, i) for i in range(6)] == [0.0, 1.0, 4.0, 9.0, 16.0, 25.0]
    assert golden.f(2, 2) == 0.0
    assert golden.abs_third_moment == pytest.approx(13.0)


def test_example52_tails_match_chain():
    """Closed-form tail sums agree with the chain's tail oracle."""
    spec = make_builtin(Example52(b=4.0))
    golden = Example52Golden(b=4.0)
    for m in range(5):
        for k in range(m + 1, m + 6):
            assert golden.tail_sum(m, k) == pytest.approx(spec.tail(m, k), rel=1e-14)


def test_example53_closed_forms():
    """Branching process invariant vector, mean and h values."""
    golden = Example53Golden()
    assert golden.mean == pytest.approx(2 / (1 + math.log(4)))
    assert math.fsum(golden.pi(i) for i in range(200)) == pytest.approx(1.0)
    assert golden.h(1) == pytest.approx(1 + (2 * math.log(2) - 1) / 3, rel=1e-12)
    assert golden.sigma2 == pytest.approx(1.4645, abs=5e-5)
    assert golden.g_coefficient(2, 5) == pytest.approx(1 / 24)


@pytest.mark.parametrize("n", range(1, 11))
def test_example53_h_closed_form(n):
    """h_n = 1/n + (2^n / 3)(ln 2 - sum_{k<=n} 1 / (k 2^k))."""
    partial = math.fsum(1 / (k * 2.0**k) for k in range(1, n + 1))
    expected = 1 / n + 2.0**n / 3 * (math.log(2) - partial)
    assert Example53Golden().h(n) == pytest.approx(expected, rel=1e-9)


def test_example53_partial_sums():
    """Partial sums of the variance series reproduce the reference row."""
    golden = Example53Golden()
    for n, expected in zip(range(10, 27, 2), PARTIAL_SUM_ROW, strict=True):
        assert golden.partial_sum(n) == pytest.approx(expected, abs=5e-5)


def test_example53_error_bound():
    """The tail bound holds and drops below 1e-4 past n = 22."""
    golden = Example53Golden()
    assert golden.error_bound(23) == pytest.approx(2.2888e-5, rel=1e-4)
    assert golden.error_bound(23) <= 1e-4
    for n in range(10, 27):
        assert 0.0 <= golden.sigma2 - golden.partial_sum(n) <= golden.error_bound(n)


def test_section2_invariant_vector():
    """The section-2 invariant vector is a probability vector."""
    golden = Section2Golden()
    total = math.fsum(golden.pi(i) for i in range(300))
    assert total == pytest.approx(1.0)
    assert golden.a(0) == 1.0
    assert golden.a(3) == pytest.approx(0.5 * 0.5 * (2 / 3))


def test_section2_second_forcing_mean():
    """With the second forcing the mean equals the odd-state constant."""
    golden = Section2Golden(g_choice=2)
    assert golden.mean == pytest.approx(golden.odd_constant, rel=1e-12)
    assert golden.g(4) == golden.odd_constant
    assert golden.g(5) == 5.0


@pytest.mark.parametrize("n", [1, 2, 5, 10, 11, 30])
def test_section2_last_column_matches_solver(n):
    """Closed forms for the last-column kernel agree with the finite solver."""
    golden = Section2Golden()
    kernel = augment_last_column(truncate(make_builtin(Section2Example()), n))
    g = golden.forcing()

    pi = invariant_gth(kernel).pi
    assert pi[0] == pytest.approx(golden.last_column_pi0(n), rel=1e-12)
    assert stationary_mean(kernel, g) == pytest.approx(
        golden.last_column_mean(n), rel=1e-10
    )
    f = poisson_solve(kernel, g, 0).f
    expected = [golden.last_column_f0(n, i) for i in range(n + 1)]
    np.testing.assert_allclose(f, expected, rtol=1e-9, atol=1e-9)


def test_section2_even_levels_diverge():
    """Even last-column levels overshoot the true mean; odd ones approach it."""
    golden = Section2Golden()
    assert golden.last_column_mean(60) > 2 * golden.mean
    assert golden.last_column_mean(61) == pytest.approx(golden.mean, rel=1e-3)


def test_remark42_return_times():
    """Return times under linear augmentation decrease towards 4/3."""
    golden = Remark42Golden()
    assert golden.linear_return_time(1) == pytest.approx(2.5)
    assert golden.linear_return_time(2) == pytest.approx(1.75)
    assert golden.return_time() == pytest.approx(4 / 3)
    for n in range(1, 12):
        assert golden.geometric_return_time(n) == pytest.approx(
            golden.linear_return_time(n)
        )
        assert golden.linear_return_time(n + 1) < golden.linear_return_time(n)


@pytest.mark.parametrize("n", range(1, 11))
def test_remark42_return_time_matches_solver(n):
    """The finite solver reproduces both closed forms of the return time."""
    golden = Remark42Golden()
    kernel = augment_linear(truncate(make_builtin(Remark42()), n), 0)
    moments = return_moments_ctmc(kernel, golden.forcing(), 0)
    assert moments.m1[0] == pytest.approx(golden.linear_return_time(n), rel=1e-12)
    assert moments.m1[0] == pytest.approx(golden.geometric_return_time(n), rel=1e-12)


def test_example_closed_forms_dispatch():
    """Records are returned for the families with closed forms."""
    assert isinstance(example_closed_forms(Example52(b=5.0)), Example52Golden)
    assert example_closed_forms(Example52(b=5.0)).b == 5.0
    assert isinstance(example_closed_forms(Example53()), Example53Golden)
    assert example_closed_forms(Section2Example(g_choice=2)).g_choice == 2
    assert isinstance(example_closed_forms(Remark42()), Remark42Golden)

    with pytest.raises(InvalidParamsError):
        example_closed_forms(Example53(alpha=2.0))
    with pytest.raises(InvalidParamsError):
        example_closed_forms(
            BirthDeath(birth=SequenceSpec(), death=SequenceSpec(scale=2.0))
        )


def test_forcing_carries_known_mean():
    """Reference forcing functions carry their closed-form mean."""
    assert Example52Golden().forcing().known_mean == 1.0
    assert Example53Golden().forcing().known_mean == pytest.approx(
        2 / (1 + math.log(4))
    )
    assert Remark42Golden().forcing().known_mean is None

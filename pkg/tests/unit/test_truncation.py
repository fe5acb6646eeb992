"""Unit tests for truncation module."""

from __future__ import annotations

import numpy as np
import pytest

from markov_poisson.chain import (
    ChainKind,
    Example52,
    Example53,
    FiniteExplicit,
    Remark42,
    Section2Example,
    SubKernel,
    make_builtin,
    truncate,
)
from markov_poisson.errors import (
    ErrorCode,
    InvalidParamsError,
    NegativeDeficitError,
    NotSingleDeathError,
    SingularComplementError,
)
from markov_poisson.truncation import (
    Censored,
    FiniteKernel,
    LastColumn,
    LinearColumn,
    SchemeKind,
    augment_last_column,
    augment_linear,
    build_kernel,
    censor,
    censor_auto,
    censor_exact,
    censor_single_death,
    censor_with_outer,
    reaching_mask,
)


def test_last_column_section2():
    """Last-column kernel of the section-2 chain at level 2."""
    kernel = augment_last_column(truncate(make_builtin(Section2Example()), 2))
    np.testing.assert_allclose(
        kernel.entries,
        [[0.5, 0.5, 0.0], [0.5, 0.0, 0.5], [1 / 3, 0.0, 2 / 3]],
        atol=1e-15,
    )
    assert kernel.scheme_tag is SchemeKind.LAST_COLUMN
    assert kernel.row_sum_error() <= 1e-15


def test_linear_augmentation_star_chain():
    """Mass leaving {0..n} from 0 is sent back to 0."""
    spec = make_builtin(Remark42())
    for n in (1, 2, 5):
        kernel = augment_linear(truncate(spec, n), 0)
        assert kernel.is_continuous
        assert kernel.scheme_tag is SchemeKind.LINEAR
        assert kernel.entries[0, 0] == pytest.approx(-(1 - 2.0**-n))
        assert kernel.row_sum_error() <= 1e-12


def test_linear_anchor_out_of_range():
    """Anchor must lie in 0..n."""
    sub = truncate(make_builtin(Section2Example()), 2)
    with pytest.raises(InvalidParamsError) as info:
        augment_linear(sub, 3)
    assert info.value.error_code is ErrorCode.LEVEL_OUT_OF_RANGE


def test_negative_deficit_rejected():
    """A corner carrying more than a full row of mass is rejected."""
    sub = SubKernel(
        kind=ChainKind.DISCRETE, n=1, entries=np.array([[0.6, 0.6], [0.5, 0.5]])
    )
    with pytest.raises(NegativeDeficitError) as info:
        augment_linear(sub, 0)
    assert info.value.details["row"] == 0


def test_tiny_negative_deficit_clipped():
    """Round-off sized negative deficits are clipped to zero."""
    sub = SubKernel(
        kind=ChainKind.DISCRETE,
        n=1,
        entries=np.array([[0.5, 0.5 + 1e-14], [0.5, 0.5]]),
    )
    kernel = augment_linear(sub, 0)
    np.testing.assert_array_equal(kernel.entries, sub.entries)


def test_deficit_from_row_sums():
    """Without a tail oracle the deficit comes from the row sums."""
    sub = SubKernel(
        kind=ChainKind.CONTINUOUS, n=1, entries=np.array([[-2.0, 1.0], [1.0, -1.0]])
    )
    kernel = augment_linear(sub, 1)
    np.testing.assert_allclose(kernel.entries, [[-2.0, 2.0], [1.0, -1.0]])


def test_censor_cycle():
    """Censoring the 3-cycle on {0, 1} closes the loop."""
    outer = FiniteKernel.from_matrix([[0, 1, 0], [0, 0, 1], [1, 0, 0]])
    kernel = censor(outer, 1)
    np.testing.assert_allclose(kernel.entries, [[0.0, 1.0], [1.0, 0.0]])
    assert kernel.scheme_tag is SchemeKind.CENSORED
    assert kernel.outer_level == 2


def test_censor_full_level_is_copy():
    """Censoring at the outer level leaves the kernel unchanged."""
    outer = FiniteKernel.from_matrix([[0.5, 0.5], [0.2, 0.8]])
    kernel = censor(outer, 1)
    np.testing.assert_array_equal(kernel.entries, outer.entries)
    assert kernel.entries is not outer.entries


def test_censor_rows_stay_proper(random_kernel):
    """Censored kernels are stochastic or conservative."""
    for kind in ChainKind:
        outer = random_kernel(7, kind=kind, seed=3)
        for n in range(6):
            kernel = censor(outer, n)
            assert kernel.size == n + 1
            assert kernel.row_sum_error() <= 1e-12


def test_censor_is_transitive(random_kernel):
    """Censoring in two steps equals censoring at once."""
    for kind in ChainKind:
        outer = random_kernel(8, kind=kind, seed=11)
        direct = censor(outer, 2)
        staged = censor(censor(outer, 5), 2)
        np.testing.assert_allclose(staged.entries, direct.entries, atol=1e-12)


def test_censor_singular_complement():
    """A state that never returns to the censoring set is reported."""
    outer = FiniteKernel.from_matrix(
        [[0.5, 0.5, 0.0], [0.5, 0.5, 0.0], [0.0, 0.0, 1.0]]
    )
    with pytest.raises(SingularComplementError) as info:
        censor(outer, 1)
    assert info.value.details["state"] == 2
    assert info.value.is_numerical


def test_censor_level_out_of_range(two_state):
    """Censoring level must not exceed the outer level."""
    with pytest.raises(InvalidParamsError):
        censor(two_state, 2)


def test_reaching_mask():
    """States reaching the target set along positive entries."""
    a = np.array(
        [
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
        ]
    )
    assert reaching_mask(a, np.array([0])).tolist() == [True, False, False, True]
    assert reaching_mask(a, np.array([2])).tolist() == [True, True, True, True]


def test_single_death_censoring_two_levels():
    """Exact censoring of the geometric-jump chain at level 1."""
    kernel = censor_single_death(make_builtin(Example52(b=3.0)), 1)
    np.testing.assert_allclose(kernel.entries, [[-1 / 3, 1 / 3], [2 / 3, -2 / 3]])


def test_single_death_censoring_level_zero():
    """Level 0 gives the zero generator."""
    kernel = censor_single_death(make_builtin(Example53()), 0)
    np.testing.assert_array_equal(kernel.entries, [[0.0]])


def test_single_death_censoring_matches_last_column():
    """For single-death generators censoring and last-column agree."""
    spec = make_builtin(Example52(b=3.0))
    for n in (1, 4, 9):
        exact = censor_single_death(spec, n)
        last = augment_last_column(truncate(spec, n))
        np.testing.assert_allclose(exact.entries, last.entries, rtol=1e-12, atol=1e-15)


def test_single_death_censoring_matches_outer():
    """Censoring a large outer kernel reproduces the exact censored generator."""
    spec = make_builtin(Example53())
    exact = censor_single_death(spec, 3)
    approx = censor_with_outer(spec, 3, 40)
    np.testing.assert_allclose(approx.entries, exact.entries, atol=1e-10)
    assert approx.outer_level == 40


def test_single_death_censoring_rejects_other_chains():
    """Discrete or general chains cannot be censored exactly."""
    with pytest.raises(NotSingleDeathError):
        censor_single_death(make_builtin(Section2Example()), 2)
    with pytest.raises(NotSingleDeathError):
        censor_single_death(make_builtin(Remark42()), 2)


def test_censor_exact_dispatch():
    """Finite chains are censored from their full matrix."""
    spec = make_builtin(FiniteExplicit(matrix=((0, 1, 0), (0, 0, 1), (1, 0, 0))))
    np.testing.assert_allclose(censor_exact(spec, 1).entries, [[0.0, 1.0], [1.0, 0.0]])

    with pytest.raises(InvalidParamsError):
        censor_exact(make_builtin(Section2Example()), 3)


def test_censor_auto_star_chain():
    """Approximate censoring of the star chain keeps only exits into {1..n}."""
    spec = make_builtin(Remark42())
    for n in (1, 3):
        kernel = censor_auto(spec, n)
        assert kernel.entries[0, 0] == pytest.approx(-(1 - 2.0**-n), abs=1e-12)
        assert kernel.outer_level is not None and kernel.outer_level > n
        assert kernel.row_sum_error() <= 1e-12


def test_censor_with_outer_rejects_small_outer():
    """Outer level must exceed the level."""
    with pytest.raises(InvalidParamsError):
        censor_with_outer(make_builtin(Section2Example()), 4, 4)


def test_build_kernel_dispatch():
    """Each scheme builds the matching kernel."""
    spec = make_builtin(Example52(b=3.0))
    linear = build_kernel(spec, LinearColumn(anchor=0), 3)
    last = build_kernel(spec, LastColumn(), 3)
    exact = build_kernel(spec, Censored(outer="exact"), 3)
    auto = build_kernel(spec, Censored(), 3)
    fixed = build_kernel(spec, Censored(outer=20), 3)

    assert linear.scheme_tag is SchemeKind.LINEAR
    assert last.scheme_tag is SchemeKind.LAST_COLUMN
    np.testing.assert_allclose(auto.entries, exact.entries)
    np.testing.assert_allclose(fixed.entries, exact.entries, atol=1e-10)
    for kernel in (linear, last, exact, auto, fixed):
        assert kernel.n == 3
        assert kernel.row_sum_error() <= 1e-12

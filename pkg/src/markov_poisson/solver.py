"""Exact numerics on finite kernels.

Invariant vectors come from subtraction-free GTH elimination restricted to the
unique closed class. Poisson's equation is anchored by deleting the anchor's row
and column, and the same factorization serves the first-step recursions for the
return-time moments, so one level of a sweep costs one LU factorization.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import splu

from markov_poisson.chain import ForcingFunction
from markov_poisson.errors import (
    ErrorCode,
    InvalidParamsError,
    MeanMismatchError,
    MultipleClosedClassesError,
    NoClosedClassError,
    NumericalFailureError,
    RouteMismatchError,
    SingularSystemError,
    ZeroRateError,
)
from markov_poisson.truncation import FiniteKernel, censor, reaching_mask

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-9
CONSISTENCY_TOL = 1e-10
ROUTE_TOL = 1e-9
# Hessenberg systems at least this large go through sparse LU without reordering
_SPARSE_MIN_SIZE = 64

Forcing = ForcingFunction | np.ndarray | Sequence[float]


class Route(str, Enum):
    """How a variance constant was computed."""

    REGENERATIVE = "regenerative"
    STATIONARY = "stationary-identity"


@dataclass(frozen=True)
class InvariantVector:
    """Stationary distribution of a finite kernel.

    Attributes:
        pi: Probability vector, zero off the closed class
        closed: Mask of the closed communicating class
    """

    pi: np.ndarray
    closed: np.ndarray

    def residual(self, kernel: FiniteKernel) -> float:
        """Infinity norm of pi^T P - pi^T (or pi^T Q)."""
        lhs = self.pi @ kernel.entries
        if not kernel.is_continuous:
            lhs = lhs - self.pi
        return float(np.max(np.abs(lhs)))


@dataclass(frozen=True)
class PoissonSolution:
    """Anchored solution of Poisson's equation.

    Attributes:
        anchor: State j with f(j) = 0
        f: Solution vector
        mean: Stationary mean pi^T g
        residual: Infinity norm of (P - I) f + gbar, or Q f + gbar
        gbar: Centered forcing g - (pi^T g) e
    """

    anchor: int
    f: np.ndarray
    mean: float
    residual: float
    gbar: np.ndarray


@dataclass(frozen=True)
class ReturnMoments:
    """Moments of the first return to the anchor, indexed by the start state.

    For continuous kernels ``m1``/``m2`` are moments of the return time delta_j and
    ``h``/``s`` moments of the integral xi_j(g).
    """

    anchor: int
    m1: np.ndarray
    m2: np.ndarray
    h: np.ndarray
    s: np.ndarray
    u: np.ndarray


@dataclass(frozen=True)
class VarianceConstant:
    """CLT variance constant with both route values.

    Attributes:
        sigma2: Reported value (regenerative route), clipped at 0
        route: Route of the reported value
        regenerative: E_j[zeta_j^2(gbar)] / E_j[tau_j]
        stationary: Value from the stationary identity
    """

    sigma2: float
    route: Route
    regenerative: float
    stationary: float


@dataclass(frozen=True)
class FiniteAnalysis:
    """Everything one level of a sweep needs, computed from one factorization."""

    kernel: FiniteKernel
    invariant: InvariantVector
    solution: PoissonSolution
    moments: ReturnMoments
    variance: VarianceConstant


def forcing_vector(g: Forcing, n: int) -> np.ndarray:
    """Values of g on {0, ..., n}."""
    if isinstance(g, ForcingFunction):
        return g.values(n)
    values = np.asarray(g, dtype=float)
    if values.shape != (n + 1,):
        raise InvalidParamsError(
            f"Forcing vector has shape {values.shape}, expected ({n + 1},)"
        )
    return values


def _off_diagonal(entries: np.ndarray) -> np.ndarray:
    off = entries.copy()
    np.fill_diagonal(off, 0.0)
    return off


def closed_class(kernel: FiniteKernel) -> np.ndarray:
    """Mask of the unique closed communicating class.

    Raises:
        NoClosedClassError: If no class is closed
        MultipleClosedClassesError: If more than one class is closed
    """
    off = _off_diagonal(kernel.entries)
    graph = sparse.csr_matrix((off > 0).astype(float))
    count, labels = csgraph.connected_components(
        graph, directed=True, connection="strong"
    )
    rows, cols = graph.nonzero()
    leaving = labels[rows] != labels[cols]
    closed = sorted(set(range(count)) - set(labels[rows[leaving]].tolist()))
    if not closed:
        raise NoClosedClassError(f"Level-{kernel.n} kernel has no closed class")
    if len(closed) > 1:
        raise MultipleClosedClassesError(
            f"Level-{kernel.n} kernel has {len(closed)} closed classes",
            details={"classes": [np.flatnonzero(labels == c).tolist()[:8] for c in closed]},
        )
    return labels == closed[0]


def _gth(off: np.ndarray) -> np.ndarray:
    """GTH elimination on an irreducible off-diagonal rate/probability block."""
    a = off.copy()
    m = a.shape[0]
    for k in range(m - 1):
        scale = a[k, k + 1 :].sum()
        if scale <= 0:
            raise NoClosedClassError(
                f"State elimination stalled at state {k}",
                details={"state": k},
            )
        rows = k + 1 + np.flatnonzero(a[k + 1 :, k])
        a[rows, k] /= scale
        cols = k + 1 + np.flatnonzero(a[k, k + 1 :])
        if rows.size and cols.size:
            a[np.ix_(rows, cols)] += np.outer(a[rows, k], a[k, cols])
    x = np.zeros(m)
    x[m - 1] = 1.0
    for k in range(m - 2, -1, -1):
        x[k] = x[k + 1 :] @ a[k + 1 :, k]
    return x / x.sum()


def invariant_gth(kernel: FiniteKernel) -> InvariantVector:
    """Invariant probability vector by GTH elimination.

    Works identically for stochastic matrices and conservative generators; states
    outside the closed class get probability 0.

    Args:
        kernel: Proper finite kernel with a unique closed class

    Returns:
        InvariantVector
    """
    mask = closed_class(kernel)
    idx = np.flatnonzero(mask)
    off = _off_diagonal(kernel.entries)
    pi = np.zeros(kernel.size)
    pi[idx] = _gth(off[np.ix_(idx, idx)])
    if idx.size < kernel.size:
        logger.debug(f"Level {kernel.n}: {kernel.size - idx.size} transient state(s)")
    return InvariantVector(pi=pi, closed=mask)


def stationary_mean(kernel: FiniteKernel, g: Forcing) -> float:
    """pi^T g for the kernel's invariant vector."""
    pi = invariant_gth(kernel).pi
    return float(math.fsum(pi * forcing_vector(g, kernel.n)))


class _AnchoredSystem:
    """Factorization of (I - P) or (-Q) with the anchor's row and column deleted."""

    def __init__(self, kernel: FiniteKernel, anchor: int):
        if not 0 <= anchor <= kernel.n:
            raise InvalidParamsError(
                f"Anchor {anchor} is outside 0..{kernel.n}",
                ErrorCode.LEVEL_OUT_OF_RANGE,
                {"anchor": anchor, "level": kernel.n},
            )
        reach = reaching_mask(kernel.entries, np.array([anchor]))
        if not reach.all():
            stuck = int(np.flatnonzero(~reach)[0])
            raise SingularSystemError(
                f"State {stuck} cannot reach anchor {anchor}",
                details={"state": stuck, "anchor": anchor, "level": kernel.n},
            )
        self.kernel = kernel
        self.anchor = anchor
        # diagonal from off-diagonal row sums, no cancellation near absorbing rows
        off = kernel.entries - np.diag(np.diag(kernel.entries))
        self.matrix = np.diag(off.sum(axis=1)) - off
        self.keep = np.flatnonzero(np.arange(kernel.size) != anchor)
        self._factor = self._factorize(self.matrix[np.ix_(self.keep, self.keep)])

    @staticmethod
    def _is_hessenberg(a: np.ndarray) -> bool:
        return not np.any(np.triu(a, 2)) or not np.any(np.tril(a, -2))

    def _factorize(self, a: np.ndarray):  # type: ignore[no-untyped-def]
        if a.shape[0] == 0:
            return None
        try:
            if a.shape[0] >= _SPARSE_MIN_SIZE and self._is_hessenberg(a):
                lu = splu(
                    sparse.csc_matrix(a), permc_spec="NATURAL", diag_pivot_thresh=0.0
                )
                return lu.solve
            lu_piv = scipy.linalg.lu_factor(a, check_finite=False)
            return lambda b: scipy.linalg.lu_solve(lu_piv, b, check_finite=False)
        except (np.linalg.LinAlgError, RuntimeError, ValueError) as e:
            raise SingularSystemError(
                f"Anchored system at level {self.kernel.n} is singular: {e}",
                details={"anchor": self.anchor, "level": self.kernel.n},
                original_error=e,
            )

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve the reduced system for the non-anchor components of rhs."""
        if self._factor is None:
            return np.zeros(0)
        x = np.asarray(self._factor(rhs[self.keep]), dtype=float)
        if not np.all(np.isfinite(x)):
            raise NumericalFailureError(
                f"Anchored solve at level {self.kernel.n} produced non-finite values",
                details={"anchor": self.anchor},
            )
        return x


def _poisson(
    system: _AnchoredSystem,
    gvec: np.ndarray,
    invariant: InvariantVector,
    residual_tol: float,
) -> PoissonSolution:
    j = system.anchor
    mean = float(math.fsum(invariant.pi * gvec))
    gbar = gvec - mean
    f = np.zeros_like(gvec)
    f[system.keep] = system.solve(gbar)

    residual = float(np.max(np.abs(gbar - system.matrix @ f)))
    norm_a = float(np.max(np.abs(system.matrix).sum(axis=1)))
    norm_f = float(np.max(np.abs(f)))
    limit = residual_tol * (1.0 + float(np.max(np.abs(gbar)))) + (
        64 * np.finfo(float).eps * norm_a * norm_f
    )
    if residual > limit:
        raise NumericalFailureError(
            f"Poisson residual {residual:.3e} exceeds {limit:.3e} at level {system.kernel.n}",
            details={"residual": residual, "limit": limit, "anchor": j},
        )
    return PoissonSolution(anchor=j, f=f, mean=mean, residual=residual, gbar=gbar)


def poisson_solve(
    kernel: FiniteKernel,
    g: Forcing,
    j: int,
    *,
    residual_tol: float = RESIDUAL_TOL,
) -> PoissonSolution:
    """Solve (P - I) f = -gbar (or Q f = -gbar) with f(j) = 0.

    Args:
        kernel: Proper finite kernel
        g: Forcing function or vector on {0, ..., n}
        j: Anchor state
        residual_tol: Relative residual tolerance

    Returns:
        PoissonSolution

    Raises:
        SingularSystemError: If some state cannot reach j
        NumericalFailureError: If the residual exceeds its tolerance
    """
    system = _AnchoredSystem(kernel, j)
    invariant = invariant_gth(kernel)
    return _poisson(system, forcing_vector(g, kernel.n), invariant, residual_tol)


def _moments(system: _AnchoredSystem, gvec: np.ndarray) -> ReturnMoments:
    kernel = system.kernel
    j = system.anchor
    if kernel.is_continuous:
        q = -np.diag(kernel.entries).copy()
        if np.any(q <= 0):
            i = int(np.flatnonzero(q <= 0)[0])
            raise ZeroRateError(
                f"State {i} has zero total rate at level {kernel.n}",
                details={"state": i, "level": kernel.n},
            )
        jump = _off_diagonal(kernel.entries) / q[:, None]
        hold, hold2, scale = 1.0 / q, 2.0 / q**2, q
    else:
        jump = kernel.entries
        ones = np.ones(kernel.size)
        hold, hold2, scale = ones, ones, ones
    jump = jump.copy()
    jump[:, j] = 0.0

    def first_step(const: np.ndarray) -> np.ndarray:
        # x = const + R~ x, solved through the anchored (I - P) or (-Q) system
        x = np.zeros(kernel.size)
        x[system.keep] = system.solve(const * scale)
        x[j] = const[j] + jump[j] @ x
        return x

    h = first_step(gvec * hold)
    m1 = first_step(hold)
    s = first_step(gvec**2 * hold2 + 2.0 * gvec * hold * (jump @ h))
    m2 = first_step(hold2 + 2.0 * hold * (jump @ m1))
    u = first_step(gvec * hold2 + gvec * hold * (jump @ m1) + hold * (jump @ h))
    return ReturnMoments(anchor=j, m1=m1, m2=m2, h=h, s=s, u=u)


def return_moments(kernel: FiniteKernel, g: Forcing, j: int) -> ReturnMoments:
    """First and second moments of the return to ``j`` for either time type."""
    system = _AnchoredSystem(kernel, j)
    return _moments(system, forcing_vector(g, kernel.n))


def return_moments_dtmc(kernel: FiniteKernel, g: Forcing, j: int) -> ReturnMoments:
    """Return-time moments E_i[tau_j], E_i[tau_j^2], E_i[zeta_j(g)], ... of a DTMC.

    Raises:
        InvalidParamsError: If the kernel is a generator
        SingularSystemError: If some state cannot reach j
    """
    if kernel.is_continuous:
        raise InvalidParamsError("return_moments_dtmc needs a stochastic matrix")
    return return_moments(kernel, g, j)


def return_moments_ctmc(kernel: FiniteKernel, g: Forcing, j: int) -> ReturnMoments:
    """Return-time moments E_i[delta_j], E_i[xi_j(g)], ... of a CTMC.

    Holding times are exponential with E[H_i] = 1/q_i and E[H_i^2] = 2/q_i^2.

    Raises:
        InvalidParamsError: If the kernel is a stochastic matrix
        ZeroRateError: If some q_i = 0
        SingularSystemError: If some state cannot reach j
    """
    if not kernel.is_continuous:
        raise InvalidParamsError("return_moments_ctmc needs a generator")
    return return_moments(kernel, g, j)


def _check_ratio_mean(
    system: _AnchoredSystem,
    gvec: np.ndarray,
    solution: PoissonSolution,
    moments: ReturnMoments,
    consistency_tol: float,
) -> None:
    j = system.anchor
    ratio = float(moments.h[j] / moments.m1[j])
    norm_a = float(np.max(np.abs(system.matrix).sum(axis=1)))
    scale = float(np.max(np.abs(moments.h)) + abs(solution.mean) * np.max(moments.m1))
    limit = consistency_tol * (1.0 + float(np.max(np.abs(gvec)))) + (
        64 * np.finfo(float).eps * norm_a * scale / moments.m1[j]
    )
    if abs(ratio - solution.mean) > limit:
        raise MeanMismatchError(
            f"pi^T g = {solution.mean:.12g} but the cycle ratio is {ratio:.12g} "
            f"at level {system.kernel.n}",
            details={"mean": solution.mean, "ratio": ratio, "limit": limit},
        )


def _variance(
    kernel: FiniteKernel,
    invariant: InvariantVector,
    solution: PoissonSolution,
    moments: ReturnMoments,
    route_tol: float,
) -> VarianceConstant:
    j = solution.anchor
    mu = solution.mean
    cycle_terms = (moments.s[j], -2.0 * mu * moments.u[j], mu * mu * moments.m2[j])
    regenerative = math.fsum(cycle_terms) / moments.m1[j]
    magnitude = math.fsum(abs(t) for t in cycle_terms) / moments.m1[j]

    pi, gbar, f = invariant.pi, solution.gbar, solution.f
    if kernel.is_continuous:
        stationary = 2.0 * math.fsum(pi * gbar * f)
    else:
        stationary = math.fsum(pi * (2.0 * gbar * f - gbar**2))

    limit = route_tol * (1.0 + magnitude)
    if abs(regenerative - stationary) > limit:
        raise RouteMismatchError(
            f"Variance routes disagree at level {kernel.n}: "
            f"regenerative {regenerative:.12g}, stationary {stationary:.12g}",
            details={
                "regenerative": regenerative,
                "stationary": stationary,
                "limit": limit,
            },
        )
    if regenerative < -limit:
        raise NumericalFailureError(
            f"Negative variance constant {regenerative:.3e} at level {kernel.n}",
            details={"sigma2": regenerative},
        )
    return VarianceConstant(
        sigma2=max(regenerative, 0.0),
        route=Route.REGENERATIVE,
        regenerative=regenerative,
        stationary=stationary,
    )


def analyze(
    kernel: FiniteKernel,
    g: Forcing,
    j: int,
    *,
    residual_tol: float = RESIDUAL_TOL,
    route_tol: float = ROUTE_TOL,
    consistency_tol: float = CONSISTENCY_TOL,
) -> FiniteAnalysis:
    """Invariant vector, Poisson solution, return moments and variance in one pass.

    Raises:
        MeanMismatchError: If pi^T g and E_j[zeta_j(g)] / E_j[tau_j] differ by more
            than consistency_tol (1 + max |g|) plus rounding
        RouteMismatchError: If the two variance routes disagree
    """
    gvec = forcing_vector(g, kernel.n)
    system = _AnchoredSystem(kernel, j)
    invariant = invariant_gth(kernel)
    solution = _poisson(system, gvec, invariant, residual_tol)
    moments = _moments(system, gvec)
    _check_ratio_mean(system, gvec, solution, moments, consistency_tol)
    variance = _variance(kernel, invariant, solution, moments, route_tol)
    return FiniteAnalysis(
        kernel=kernel,
        invariant=invariant,
        solution=solution,
        moments=moments,
        variance=variance,
    )


def variance_dtmc(
    kernel: FiniteKernel, g: Forcing, j: int, *, route_tol: float = ROUTE_TOL
) -> VarianceConstant:
    """Variance constant of a DTMC, cross-checked between both routes.

    Raises:
        RouteMismatchError: If the regenerative and stationary values disagree
    """
    if kernel.is_continuous:
        raise InvalidParamsError("variance_dtmc needs a stochastic matrix")
    return analyze(kernel, g, j, route_tol=route_tol).variance


def variance_ctmc(
    kernel: FiniteKernel, g: Forcing, j: int, *, route_tol: float = ROUTE_TOL
) -> VarianceConstant:
    """Variance constant of a CTMC, cross-checked between both routes.

    Raises:
        RouteMismatchError: If the regenerative and stationary values disagree
    """
    if not kernel.is_continuous:
        raise InvalidParamsError("variance_ctmc needs a generator")
    return analyze(kernel, g, j, route_tol=route_tol).variance


def pi_ratio_mean(kernel: FiniteKernel, g: Forcing, j: int) -> float:
    """pi^T g through the regenerative ratio E_j[zeta_j(g)] / E_j[tau_j]."""
    moments = return_moments(kernel, g, j)
    return float(moments.h[j] / moments.m1[j])


def censored_ratio_check(outer: FiniteKernel, n: int) -> float:
    """Distance between the censored invariant vector and the restricted outer one.

    Returns the infinity norm of invariant_gth(censor(outer, n)) minus the outer
    invariant vector restricted to {0..n} and renormalised.
    """
    censored = invariant_gth(censor(outer, n)).pi
    restricted = invariant_gth(outer).pi[: n + 1]
    total = restricted.sum()
    if total <= 0:
        raise NumericalFailureError(
            f"Outer invariant vector puts no mass on 0..{n}", details={"level": n}
        )
    return float(np.max(np.abs(censored - restricted / total)))

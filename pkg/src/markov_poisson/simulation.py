"""Monte Carlo oracle for return-time functionals of finite kernels.

Replications are split into fixed-size blocks; block ``b`` draws from its own
Philox stream spawned from ``SeedSequence(seed)``, so results depend only on the
seed and the configuration, never on how many workers evaluate the blocks.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from markov_poisson.errors import CapExceededError, InvalidParamsError, ZeroRateError
from markov_poisson.parallel import map_ordered
from markov_poisson.solver import Forcing, forcing_vector, invariant_gth
from markov_poisson.truncation import FiniteKernel

logger = logging.getLogger(__name__)

DEFAULT_MAX_STEPS = 10**8


class SimConfig(BaseModel):
    """Monte Carlo settings."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int = Field(default=0, ge=0)
    replications: int = Field(default=100_000, ge=1)
    start: int = Field(default=0, ge=0)
    anchor: int = Field(default=0, ge=0)
    max_steps: int = Field(default=DEFAULT_MAX_STEPS, gt=0)
    block_size: int = Field(default=10_000, ge=1)


@dataclass(frozen=True)
class SimEstimate:
    """Point estimate with its standard error."""

    value: float
    stderr: float
    count: int

    def covers(self, exact: float, width: float = 4.0) -> bool:
        """Whether ``exact`` lies within ``width`` standard errors."""
        return abs(self.value - exact) <= width * self.stderr


@dataclass(frozen=True)
class SimResult:
    """Cycle estimates from start to the first return to the anchor.

    ``sigma2`` is only available when the paths start at the anchor.
    """

    tau: SimEstimate
    tau2: SimEstimate
    zeta: SimEstimate
    zeta2: SimEstimate
    sigma2: SimEstimate | None
    mean: float
    steps: int


def _estimate(samples: np.ndarray) -> SimEstimate:
    count = samples.size
    value = float(np.mean(samples))
    stderr = float(np.std(samples, ddof=1) / math.sqrt(count)) if count > 1 else 0.0
    return SimEstimate(value=value, stderr=stderr, count=count)


def _ratio_estimate(top: np.ndarray, bottom: np.ndarray) -> SimEstimate:
    """Ratio of means with a delta-method standard error."""
    count = top.size
    a, b = float(np.mean(top)), float(np.mean(bottom))
    ratio = a / b
    if count < 2:
        return SimEstimate(value=ratio, stderr=0.0, count=count)
    cov = np.cov(np.vstack([top, bottom]), ddof=1)
    var = cov[0, 0] - 2 * ratio * cov[0, 1] + ratio**2 * cov[1, 1]
    stderr = math.sqrt(max(var, 0.0) / count) / abs(b)
    return SimEstimate(value=ratio, stderr=stderr, count=count)


@dataclass(frozen=True)
class _Block:
    index: int
    size: int
    cap: int
    seed: np.random.SeedSequence


class _Sampler:
    """Vectorised path sampler for one kernel."""

    def __init__(self, kernel: FiniteKernel, gvec: np.ndarray, start: int, anchor: int):
        self.kernel = kernel
        self.gvec = gvec
        self.start = start
        self.anchor = anchor
        if kernel.is_continuous:
            q = -np.diag(kernel.entries)
            if np.any(q <= 0):
                i = int(np.flatnonzero(q <= 0)[0])
                raise ZeroRateError(
                    f"State {i} has zero total rate", details={"state": i}
                )
            jump = kernel.entries.copy()
            np.fill_diagonal(jump, 0.0)
            jump /= q[:, None]
            self.rates = q
        else:
            jump = kernel.entries
            self.rates = None
        self.cumulative = np.cumsum(jump, axis=1)
        self.cumulative[:, -1] = 1.0

    def run(self, block: _Block) -> tuple[np.ndarray, np.ndarray, int]:
        rng = np.random.Generator(np.random.Philox(block.seed))
        state = np.full(block.size, self.start, dtype=np.intp)
        tau = np.zeros(block.size)
        zeta = np.zeros(block.size)
        active = np.arange(block.size)
        steps = 0
        while active.size:
            steps += active.size
            if steps > block.cap:
                raise CapExceededError(
                    f"Simulation exceeded {block.cap} steps in block {block.index}; "
                    f"state {self.anchor} may be unreachable",
                    details={"block": block.index, "cap": block.cap},
                )
            current = state[active]
            if self.rates is None:
                hold = np.ones(active.size)
            else:
                hold = rng.exponential(1.0 / self.rates[current])
            tau[active] += hold
            zeta[active] += self.gvec[current] * hold
            u = rng.random(active.size)
            nxt = (self.cumulative[current] < u[:, None]).sum(axis=1)
            nxt = np.minimum(nxt, self.kernel.n)
            state[active] = nxt
            active = active[nxt != self.anchor]
        return tau, zeta, steps


def simulate_return(kernel: FiniteKernel, cfg: SimConfig, g: Forcing) -> SimResult:
    """Simulate excursions from ``cfg.start`` until the first return to ``cfg.anchor``.

    Args:
        kernel: Proper finite kernel
        cfg: Monte Carlo settings
        g: Forcing function or vector

    Returns:
        SimResult with tau/delta, zeta/xi, their second moments and, when starting
        at the anchor, the regenerative variance estimate with plug-in pi^T g

    Raises:
        CapExceededError: If the total step budget is exhausted
    """
    for name, state in (("start", cfg.start), ("anchor", cfg.anchor)):
        if state > kernel.n:
            raise InvalidParamsError(
                f"Simulation {name} {state} is outside 0..{kernel.n}",
                details={name: state},
            )
    gvec = forcing_vector(g, kernel.n)
    mean = float(math.fsum(invariant_gth(kernel).pi * gvec))
    sampler = _Sampler(kernel, gvec, cfg.start, cfg.anchor)

    count = math.ceil(cfg.replications / cfg.block_size)
    seeds = np.random.SeedSequence(cfg.seed).spawn(count)
    blocks = []
    for b in range(count):
        size = min(cfg.block_size, cfg.replications - b * cfg.block_size)
        cap = max(1, cfg.max_steps * size // cfg.replications)
        blocks.append(_Block(index=b, size=size, cap=cap, seed=seeds[b]))
    logger.debug(f"Simulating {cfg.replications} excursions in {count} block(s)")

    outputs = map_ordered(blocks, sampler.run, task_name="Simulating")
    tau = np.concatenate([o[0] for o in outputs])
    zeta = np.concatenate([o[1] for o in outputs])
    steps = sum(o[2] for o in outputs)

    sigma2 = None
    if cfg.start == cfg.anchor:
        centred = zeta - mean * tau
        sigma2 = _ratio_estimate(centred**2, tau)
    return SimResult(
        tau=_estimate(tau),
        tau2=_estimate(tau**2),
        zeta=_estimate(zeta),
        zeta2=_estimate(zeta**2),
        sigma2=sigma2,
        mean=mean,
        steps=steps,
    )

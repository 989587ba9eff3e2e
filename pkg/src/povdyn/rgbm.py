"""Reallocating geometric Brownian motion over an agent population.

One simulated year applies the Euler-Maruyama update

    x_i' = x_i + x_i*(mu*dt + sigma*W_i) - tau*(x_i - m)*dt

where ``W_i ~ N(0, dt)`` comes from the counter-based stream at
``(seed, i, year)`` and ``m`` is the population mean computed once before
the update (simultaneous reallocation). Positive ``tau`` transfers income
toward the mean, negative ``tau`` away from it. Incomes may go negative
under regressive reallocation and are deliberately never clamped; only the
Gini layer floors them, with a flag.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .backend import kernels
from .errors import (InvalidTargetError, PropagationOverflowError,
                     UndefinedShareError)
from .rng import INIT_TAG, STEP_TAG, RngStream


@dataclass(frozen=True)
class ModelParams:
    """Drift, volatility, timestep, and population size.

    Defaults follow the calibration for India: mu fitted to mean per-capita
    income growth, sigma proxied from commodity-price volatility.
    """

    mu: float = 0.0231
    sigma: float = 0.15
    dt: float = 1.0
    n_agents: int = 100_000

    def __post_init__(self):
        if not np.isfinite(self.mu):
            raise ValueError("mu must be finite")
        if not (self.sigma >= 0 and np.isfinite(self.sigma)):
            raise ValueError("sigma must be >= 0")
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise ValueError("dt must be > 0")
        if self.n_agents < 2:
            raise ValueError("n_agents must be >= 2")


@dataclass
class Population:
    """Income vector (model units, mean-normalized at init) at one year."""

    incomes: np.ndarray
    year: int

    def __post_init__(self):
        self.incomes = np.ascontiguousarray(self.incomes, dtype=np.float64)
        if self.incomes.ndim != 1 or len(self.incomes) < 2:
            raise ValueError("incomes must be a 1-D vector of length >= 2")

    @property
    def n(self) -> int:
        return len(self.incomes)

    def copy(self) -> "Population":
        return Population(self.incomes.copy(), self.year)


def sigma_ln_for_share(target_s50: float) -> float:
    """Lognormal log-scale parameter whose bottom-half share is the target.

    For a lognormal distribution the Lorenz curve is
    L(p) = Phi(Phi^{-1}(p) - s), so the bottom-half share is Phi(-s) and
    s = -Phi^{-1}(target).
    """
    if not (0.0 < target_s50 <= 0.5):
        raise InvalidTargetError(
            f"target bottom-half share must be in (0, 0.5], got {target_s50!r}"
        )
    return float(-ndtri(target_s50))


def init_lognormal(params: ModelParams, target_s50: float, seed: int,
                   year: int = 0) -> Population:
    """Draw an i.i.d. lognormal population matching a bottom-half share.

    The log-scale parameter solves the lognormal Lorenz relation for
    ``target_s50``; the sample mean is then rescaled to exactly 1.0
    (absolute scale is irrelevant to every downstream statistic).

    Parameters
    ----------
    params : ModelParams
    target_s50 : float
        Desired bottom-50% income share, in (0, 0.5]. 0.5 gives a
        degenerate equal-incomes population.
    seed : int
        Stream seed; draws come from the (seed, agent, year, init) stream.
    year : int
        Calendar year stamped on the population.
    """
    s = sigma_ln_for_share(target_s50)
    stream = RngStream(seed)
    z = stream.normals(year, INIT_TAG, 0, params.n_agents)
    incomes = np.exp(s * z)
    incomes /= incomes.mean()
    return Population(incomes, year)


def _chunk_ranges(n: int, threads: int) -> list[tuple[int, int]]:
    threads = max(1, min(int(threads), n))
    bounds = np.linspace(0, n, threads + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])
            if b > a]


def _run_update(x, w, m, mu_dt, sigma, tau_dt, out, threads):
    ranges = _chunk_ranges(len(x), threads)
    if len(ranges) == 1:
        kernels.step_update(x, w, m, mu_dt, sigma, tau_dt, out, 0, len(x))
        return
    # Chunks write disjoint slices; per-element arithmetic is independent
    # of the partition, so any thread count gives identical bytes.
    with ThreadPoolExecutor(max_workers=len(ranges)) as pool:
        futs = [pool.submit(kernels.step_update, x, w, m, mu_dt, sigma,
                            tau_dt, out, lo, hi) for lo, hi in ranges]
        for f in futs:
            f.result()


def step(pop: Population, params: ModelParams, tau: float, rng: RngStream,
         threads: int = 1) -> Population:
    """Propagate the population one year under reallocation rate ``tau``.

    The year's noise is read from the stream at (agent, pop.year), the mean
    is computed once pre-update, and the result carries ``pop.year + 1``.

    Raises
    ------
    PropagationOverflowError
        If any agent's income becomes non-finite, naming agent and year.
    """
    if not np.isfinite(tau):
        raise ValueError("tau must be finite")
    x = pop.incomes
    w = rng.normals(pop.year, STEP_TAG, 0, pop.n, params.dt)
    m = float(np.mean(x))
    out = np.empty_like(x)
    _run_update(x, w, m, params.mu * params.dt, params.sigma,
                tau * params.dt, out, threads)
    if not np.all(np.isfinite(out)):
        bad = int(np.flatnonzero(~np.isfinite(out))[0])
        raise PropagationOverflowError(bad, pop.year)
    return Population(out, pop.year + 1)


def step_components(pop: Population, params: ModelParams, rng: RngStream
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Split the update into rate-free and rate-linear parts.

    Returns ``(base, relief)`` with ``base = x + x*mu*dt + x*(sigma*W)``
    and ``relief = x - m``, so the stepped population for any ``tau`` is
    ``base - (tau*dt)*relief``. The expression is arranged to be
    bit-identical to :func:`step`, which lets the calibration search
    evaluate many rates from one noise draw.
    """
    x = pop.incomes
    w = rng.normals(pop.year, STEP_TAG, 0, pop.n, params.dt)
    m = float(np.mean(x))
    base = x + x * (params.mu * params.dt) + x * (params.sigma * w)
    return base, x - m


def bottom_share(pop: Population, fraction: float = 0.5) -> float:
    """Income share of the poorest ``floor(fraction*N)`` agents.

    Defined for negative incomes too (the result may then fall outside
    [0, 1]; reporting layers flag that case).

    Raises
    ------
    UndefinedShareError
        If total income is not positive.
    """
    if not (0.0 < fraction < 1.0):
        raise ValueError("fraction must be in (0, 1)")
    return bottom_share_of(pop.incomes, fraction)


def bottom_share_of(incomes: np.ndarray, fraction: float) -> float:
    """bottom_share on a bare vector (hot path of the calibration search)."""
    total = float(np.sum(incomes))
    if total <= 0:
        raise UndefinedShareError(f"total income {total} is not positive")
    k = int(np.floor(fraction * len(incomes)))
    if k == 0:
        return 0.0
    # np.partition: sum of the k smallest without a full sort
    low = np.partition(incomes, k - 1)[:k]
    return float(np.sum(low)) / total

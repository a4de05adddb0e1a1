"""
Bayesian estimation of the base parameter nu.

Each observed recipient m has a total exposure rho_m and an outcome o_m
(1 infected, 0 not). Under a flat Beta(1, 1) prior the posterior is

    p(nu | D) ~ prod_m nu ** (rho_m (1 - o_m)) * (1 - nu ** rho_m) ** o_m

Grid integration is the reference implementation; a random-walk Metropolis
sampler on logit(nu) is provided for comparison and richer models.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Mapping, Optional, Tuple

import numpy as np
import pandas as pd
from numpy.random import default_rng
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.special import expit, logit

from exposure_risk.errors import DataError, ImpossibleObservationError, ParameterError

logger = logging.getLogger(__name__)

MIN_GRID_SIZE = 64
MIN_MCMC_SAMPLES = 1000
ACCEPTANCE_BOUNDS = (0.05, 0.95)


@dataclass(frozen=True)
class OutcomeDataset:
    """Observed (rho_total, infected) pairs, one per recipient."""

    rho: np.ndarray
    infected: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float).reshape(-1)
        infected = np.asarray(self.infected, dtype=bool).reshape(-1)
        if rho.shape != infected.shape:
            raise DataError("rho_total and infected must have the same length")
        if np.any(~np.isfinite(rho)) or np.any(rho < 0):
            row = int(np.flatnonzero(~(np.isfinite(rho) & (rho >= 0)))[0])
            raise DataError(f"rho_total must be a finite value >= 0 (row {row + 1})", field="rho_total")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "infected", infected)

    def __len__(self) -> int:
        return int(self.rho.size)

    @classmethod
    def from_records(cls, records: Iterable[Mapping[str, Any]]) -> "OutcomeDataset":
        rows = list(records)
        return cls(
            rho=np.array([float(r["rho_total"]) for r in rows], dtype=float),
            infected=np.array([bool(int(r["infected"])) for r in rows], dtype=bool),
        )

    @classmethod
    def empty(cls) -> "OutcomeDataset":
        return cls(rho=np.zeros(0), infected=np.zeros(0, dtype=bool))

    def concat(self, other: "OutcomeDataset") -> "OutcomeDataset":
        return OutcomeDataset(np.concatenate([self.rho, other.rho]),
                              np.concatenate([self.infected, other.infected]))

    def impossible_rows(self) -> np.ndarray:
        """Zero-based indices of infected records with zero exposure."""
        return np.flatnonzero(self.infected & (self.rho == 0))

    def validate(self) -> "OutcomeDataset":
        """
        Reject records the model gives zero likelihood.

        Raises:
            ImpossibleObservationError: naming the first offending row (1-based)
        """
        bad = self.impossible_rows()
        if bad.size:
            raise ImpossibleObservationError(
                f"row {int(bad[0]) + 1}: infected with rho_total = 0 has zero likelihood",
                field="infected")
        return self

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"rho_total": self.rho, "infected": self.infected.astype(int)})


@dataclass(frozen=True)
class Posterior:
    """Posterior of nu on an open grid over (0, 1), optionally with samples."""

    grid_nu: np.ndarray
    grid_density: np.ndarray
    samples: Optional[np.ndarray] = None
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def mean(self) -> float:
        if self.samples is not None:
            return float(np.mean(self.samples))
        return _expect(lambda x: x, self.grid_density, self.grid_nu)

    def sd(self) -> float:
        if self.samples is not None:
            return float(np.std(self.samples, ddof=1))
        mean = self.mean()
        second = _expect(np.square, self.grid_density, self.grid_nu)
        return math.sqrt(max(second - mean ** 2, 0.0))

    def credible_interval(self, level: float = 0.9) -> Tuple[float, float]:
        """Equal-tailed credible interval."""
        if not 0 < level < 1:
            raise ParameterError(f"level must be in (0, 1), got {level}")
        tail = (1.0 - level) / 2.0
        if self.samples is not None:
            low, high = np.quantile(self.samples, [tail, 1.0 - tail])
            return float(low), float(high)
        x, y = _extended(self.grid_density, self.grid_nu)
        cdf = cumulative_trapezoid(y, x, initial=0.0)
        cdf = cdf / cdf[-1]
        return float(np.interp(tail, cdf, x)), float(np.interp(1.0 - tail, cdf, x))

    def grid_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"nu": self.grid_nu, "density": self.grid_density})

    def summary(self, level: float = 0.9) -> Dict[str, Any]:
        low, high = self.credible_interval(level)
        return {
            "mean": self.mean(),
            "sd": self.sd(),
            "credible_level": level,
            "credible_low": low,
            "credible_high": high,
            **self.diagnostics,
        }


def _extended(values: np.ndarray, grid: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    # Extend an open grid flat to 0 and 1 so a constant integrates exactly
    x = np.concatenate([[0.0], grid, [1.0]])
    y = np.concatenate([[values[0]], values, [values[-1]]])
    return x, y


def _expect(weight, density: np.ndarray, grid: np.ndarray) -> float:
    x, y = _extended(density, grid)
    return float(trapezoid(weight(x) * y, x))


def open_grid(grid_size: int) -> np.ndarray:
    """Midpoints of grid_size equal cells over (0, 1)."""
    return (np.arange(grid_size, dtype=float) + 0.5) / grid_size


def log_likelihood_grid(grid: np.ndarray, data: OutcomeDataset) -> np.ndarray:
    """
    Log-likelihood at every grid value of nu.

    Infected records with zero exposure give -inf at every nu.
    """
    log_nu = np.log(np.asarray(grid, dtype=float))
    total = np.zeros_like(log_nu)
    if len(data) == 0:
        return total

    survived = ~data.infected
    total += np.sum(data.rho[survived]) * log_nu
    rho_inf = data.rho[data.infected]
    if rho_inf.size:
        with np.errstate(divide="ignore"):
            # log(1 - nu**rho) = log(-expm1(rho * log nu))
            terms = np.log(-np.expm1(np.outer(rho_inf, log_nu)))
        total += terms.sum(axis=0)
    return total


def log_likelihood(nu: float, data: OutcomeDataset) -> float:
    """
    Log-likelihood of nu given the observed outcomes.

    Raises:
        ParameterError: if nu is outside (0, 1)
    """
    if not 0 < nu < 1:
        raise ParameterError(f"nu must be in (0, 1), got {nu}")
    impossible = data.impossible_rows()
    if impossible.size:
        logger.warning("Impossible observations (infected, rho=0) at rows %s",
                       (impossible + 1).tolist())
        return float("-inf")
    return float(log_likelihood_grid(np.array([nu]), data)[0])


def _normalise(log_density: np.ndarray, grid: np.ndarray) -> np.ndarray:
    finite = np.isfinite(log_density)
    if not finite.any():
        raise DataError("likelihood is zero at every grid point")
    density = np.zeros_like(log_density)
    density[finite] = np.exp(log_density[finite] - log_density[finite].max())
    x, y = _extended(density, grid)
    return density / trapezoid(y, x)


def posterior_grid(data: OutcomeDataset, grid_size: int = 1024) -> Posterior:
    """
    Posterior of nu on a uniform open grid under a flat prior.

    Args:
        data: Observed outcomes
        grid_size: Number of grid cells (>= 64)

    Returns:
        Posterior whose density integrates to 1 by the trapezoid rule
    """
    if grid_size < MIN_GRID_SIZE:
        raise ParameterError(f"grid_size must be >= {MIN_GRID_SIZE}, got {grid_size}")
    grid = open_grid(grid_size)
    density = _normalise(log_likelihood_grid(grid, data), grid)
    logger.debug("Grid posterior over %d records, %d cells", len(data), grid_size)
    return Posterior(grid_nu=grid, grid_density=density, diagnostics={"method": "grid"})


def effective_sample_size(chain: np.ndarray) -> float:
    """
    Effective sample size from the autocorrelation of a single chain,
    truncated with Geyer's initial positive sequence.
    """
    x = np.asarray(chain, dtype=float)
    n = x.size
    if n < 4:
        return float(n)
    x = x - x.mean()
    variance = float(np.dot(x, x)) / n
    if variance == 0:
        return float(n)

    size = 1 << (2 * n - 1).bit_length()
    spectrum = np.fft.rfft(x, size)
    acf = np.fft.irfft(spectrum * np.conjugate(spectrum), size)[:n] / (n * variance)

    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = acf[k] + acf[k + 1]
        if pair < 0:
            break
        tau += 2.0 * pair
    return float(n / max(tau, 1.0 / n))


def posterior_mcmc(data: OutcomeDataset, n_samples: int, burn_in: int, step: float,
                   seed: int, thin: int = 1, grid_size: int = 1024) -> Posterior:
    """
    Random-walk Metropolis on theta = logit(nu).

    The target includes the Jacobian of the logit transform,
    log nu + log(1 - nu), so a flat prior on nu is preserved.

    Args:
        data: Observed outcomes
        n_samples: Number of kept samples (>= 1000)
        burn_in: Number of discarded initial iterations
        step: Standard deviation of the logit-scale proposal
        seed: RNG seed; identical seeds give identical samples
        thin: Keep every thin-th iteration after burn-in
        grid_size: Number of histogram cells for the grid view of the samples

    Returns:
        Posterior with samples and acceptance-rate / ESS diagnostics
    """
    if n_samples < MIN_MCMC_SAMPLES:
        raise ParameterError(f"n_samples must be >= {MIN_MCMC_SAMPLES}, got {n_samples}")
    if burn_in < 0 or thin < 1:
        raise ParameterError("burn_in must be >= 0 and thin >= 1")
    if not step > 0:
        raise ParameterError(f"step must be > 0, got {step}")

    def log_target(theta: float) -> float:
        nu = float(expit(theta))
        if not 0 < nu < 1:
            return float("-inf")
        return float(log_likelihood_grid(np.array([nu]), data)[0]) + math.log(nu) + math.log1p(-nu)

    rng = default_rng(seed)
    theta = float(logit(0.5))
    current = log_target(theta)
    total_iterations = burn_in + n_samples * thin
    proposals = rng.normal(0.0, step, size=total_iterations)
    uniforms = rng.random(total_iterations)

    samples = np.empty(n_samples)
    accepted = 0
    kept = 0
    for i in range(total_iterations):
        candidate = theta + proposals[i]
        proposed = log_target(candidate)
        if proposed - current >= 0 or math.log(uniforms[i]) < proposed - current:
            theta, current = candidate, proposed
            if i >= burn_in:
                accepted += 1
        if i >= burn_in and (i - burn_in) % thin == thin - 1:
            samples[kept] = expit(theta)
            kept += 1

    acceptance_rate = accepted / (n_samples * thin)
    diagnostics: Dict[str, Any] = {
        "method": "mcmc",
        "acceptance_rate": acceptance_rate,
        "ess": effective_sample_size(samples),
        "warning": None,
    }
    low, high = ACCEPTANCE_BOUNDS
    if not low <= acceptance_rate <= high:
        diagnostics["warning"] = (f"acceptance rate {acceptance_rate:.3f} outside "
                                  f"[{low}, {high}]; retune the proposal step")
        logger.warning(diagnostics["warning"])

    grid = open_grid(grid_size)
    counts, _ = np.histogram(samples, bins=grid_size, range=(0.0, 1.0))
    x, y = _extended(counts.astype(float), grid)
    density = counts / trapezoid(y, x)
    return Posterior(grid_nu=grid, grid_density=density, samples=samples, diagnostics=diagnostics)


def simulate_outcomes(true_nu: float, m: int, rho_low: float, rho_high: float,
                      seed: int) -> OutcomeDataset:
    """
    Generate synthetic outcomes: rho ~ Uniform(low, high), infected with
    probability 1 - true_nu ** rho.
    """
    if not 0 < true_nu < 1:
        raise ParameterError(f"true_nu must be in (0, 1), got {true_nu}")
    if m < 1:
        raise ParameterError(f"m must be >= 1, got {m}")
    if not 0 <= rho_low <= rho_high:
        raise ParameterError(f"require 0 <= low <= high, got [{rho_low}, {rho_high}]")

    rng = default_rng(seed)
    rho = rng.uniform(rho_low, rho_high, size=m)
    infected = rng.random(m) < -np.expm1(rho * math.log(true_nu))
    return OutcomeDataset(rho=rho, infected=infected)

"""
Incubation and generation period models.

The incubation period is log-normal and the generation period is Weibull.
Their difference (generation - incubation) is the time from the source's
symptom onset to transmission, which the infectiousness factor approximates
with a Gaussian. Their sum is the time from an infecting contact to the
recipient's symptom onset; its CDF G drives the symptom-free decay model.

Default parameter values are from the cited literature and must be verified
before production use.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, Tuple, Union

import numpy as np
import numpy.typing as npt
import pandas as pd
from numpy.random import default_rng
from pydantic import BaseModel, ConfigDict, Field
from scipy import stats

from exposure_risk.errors import ParameterError

logger = logging.getLogger(__name__)

ArrayLike = npt.ArrayLike

MIN_CDF_SAMPLES = 10_000
MIN_COVERAGE = 0.999


class EpiDistributions(BaseModel):
    """
    Parameter set for the incubation (log-normal) and generation (Weibull)
    period models. Defaults are from cited reference, verify before
    production use.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    incubation_meanlog: float = Field(1.644, description="log-days")
    incubation_sdlog: float = Field(0.363, gt=0, description="log-days")
    generation_shape: float = Field(2.826, gt=0)
    generation_scale: float = Field(5.665, gt=0, description="days")
    note: str = Field("from cited reference, verify before production use")

    def incubation(self):
        """Frozen scipy log-normal distribution of the incubation period."""
        return stats.lognorm(s=self.incubation_sdlog, scale=math.exp(self.incubation_meanlog))

    def generation(self):
        """Frozen scipy Weibull distribution of the generation period."""
        return stats.weibull_min(c=self.generation_shape, scale=self.generation_scale)


@dataclass(frozen=True)
class SumCdf:
    """Empirical CDF of generation + incubation on a uniform grid (days)."""

    grid_times: np.ndarray
    grid_values: np.ndarray
    sample_count: int
    rng_seed: int
    grid_step: float
    coverage: float

    @property
    def horizon(self) -> float:
        return float(self.grid_times[-1])


@dataclass(frozen=True)
class FitReport:
    """Comparison of a sample with the Gaussian N(mu0, sigma0^2)."""

    ks_statistic: float
    sample_mean: float
    sample_sd: float
    skewness: float
    heavier_left_tail: bool
    sample_count: int
    mu0: float
    sigma0: float

    def to_dict(self) -> Dict[str, object]:
        return {
            "ks_statistic": self.ks_statistic,
            "mean": self.sample_mean,
            "sd": self.sample_sd,
            "skewness": self.skewness,
            "heavier_left_tail": self.heavier_left_tail,
            "n": self.sample_count,
            "mu0": self.mu0,
            "sigma0": self.sigma0,
        }


def _check_count(n: int, minimum: int, what: str) -> int:
    if int(n) != n or n < minimum:
        raise ParameterError(f"{what} must be an integer >= {minimum}, got {n}")
    return int(n)


def sample_periods(dist: EpiDistributions, n: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Draw independent generation and incubation periods.

    Args:
        dist: Distribution parameters
        n: Number of draws of each period
        seed: RNG seed

    Returns:
        Tuple of (generation, incubation) arrays in days
    """
    n = _check_count(n, 1, "sample count")
    rng = default_rng(seed)
    generation = dist.generation().rvs(size=n, random_state=rng)
    incubation = dist.incubation().rvs(size=n, random_state=rng)
    return generation, incubation


def sample_difference(dist: EpiDistributions, n: int, seed: int) -> np.ndarray:
    """
    Sample the time from the source's symptom onset to transmission.

    Args:
        dist: Distribution parameters
        n: Number of samples (>= 1)
        seed: RNG seed; identical seeds give bit-identical samples

    Returns:
        Array of generation - incubation values in days
    """
    generation, incubation = sample_periods(dist, n, seed)
    return generation - incubation


def sample_sum(dist: EpiDistributions, n: int, seed: int) -> np.ndarray:
    """Sample the time from an infecting contact to symptom onset (days)."""
    generation, incubation = sample_periods(dist, n, seed)
    return generation + incubation


def analytic_moments(dist: EpiDistributions) -> Dict[str, float]:
    """
    Closed-form moments of both marginals, their difference and their sum.

    Returns:
        Dictionary with means and variances (days, days^2)
    """
    gen_mean, gen_var = (float(v) for v in dist.generation().stats(moments="mv"))
    inc_mean, inc_var = (float(v) for v in dist.incubation().stats(moments="mv"))
    return {
        "generation_mean": gen_mean,
        "generation_var": gen_var,
        "incubation_mean": inc_mean,
        "incubation_var": inc_var,
        "difference_mean": gen_mean - inc_mean,
        "difference_var": gen_var + inc_var,
        "sum_mean": gen_mean + inc_mean,
        "sum_var": gen_var + inc_var,
    }


def gaussian_fit_report(samples: ArrayLike, mu0: float, sigma0: float) -> FitReport:
    """
    Measure how close a sample is to N(mu0, sigma0^2).

    Args:
        samples: Sample values (days)
        mu0: Gaussian mean
        sigma0: Gaussian standard deviation (> 0)

    Returns:
        FitReport with the Kolmogorov-Smirnov distance and sample moments
    """
    values = np.asarray(samples, dtype=float)
    if values.size == 0:
        raise ParameterError("samples must be non-empty")
    if not sigma0 > 0:
        raise ParameterError(f"sigma0 must be > 0, got {sigma0}")

    ks = stats.kstest(values, "norm", args=(mu0, sigma0))
    sd = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    # Skewness of a constant sample is undefined; report it as zero
    skewness = float(stats.skew(values)) if sd > 0 else 0.0

    return FitReport(
        ks_statistic=float(ks.statistic),
        sample_mean=float(np.mean(values)),
        sample_sd=sd,
        skewness=skewness,
        heavier_left_tail=skewness < 0,
        sample_count=int(values.size),
        mu0=float(mu0),
        sigma0=float(sigma0),
    )


def difference_histogram(samples: ArrayLike, mu0: float, sigma0: float, bins: int) -> pd.DataFrame:
    """
    Histogram of difference samples next to the Gaussian approximation.

    The Gaussian column is the normal density averaged over each bin so the
    two columns are directly comparable.

    Returns:
        DataFrame with columns bin_left, bin_right, empirical_density,
        gaussian_density
    """
    values = np.asarray(samples, dtype=float)
    if values.size == 0:
        raise ParameterError("samples must be non-empty")
    bins = _check_count(bins, 1, "bin count")

    density, edges = np.histogram(values, bins=bins, density=True)
    left, right = edges[:-1], edges[1:]
    normal = stats.norm(loc=mu0, scale=sigma0)
    gaussian = (normal.cdf(right) - normal.cdf(left)) / (right - left)

    return pd.DataFrame({
        "bin_left": left,
        "bin_right": right,
        "empirical_density": density,
        "gaussian_density": gaussian,
    })


def build_sum_cdf(dist: EpiDistributions, n: int, grid_step: float, seed: int,
                  coverage: float = 0.9995) -> SumCdf:
    """
    Build G, the CDF of generation + incubation, by Monte Carlo.

    Args:
        dist: Distribution parameters
        n: Number of Monte Carlo samples (>= 10^4)
        grid_step: Grid spacing in days (> 0)
        seed: RNG seed, recorded in the result
        coverage: Probability mass the grid must span (0.999 <= coverage < 1)

    Returns:
        SumCdf on a uniform grid starting at 0
    """
    n = _check_count(n, MIN_CDF_SAMPLES, "sample count")
    if not grid_step > 0:
        raise ParameterError(f"grid_step must be > 0, got {grid_step}")
    if not MIN_COVERAGE <= coverage < 1:
        raise ParameterError(f"coverage must be in [{MIN_COVERAGE}, 1), got {coverage}")

    samples = np.sort(sample_sum(dist, n, seed))
    span = float(np.quantile(samples, coverage))
    n_points = int(math.ceil(span / grid_step)) + 1
    grid_times = np.arange(n_points, dtype=float) * grid_step
    grid_values = np.searchsorted(samples, grid_times, side="right") / n

    logger.debug("Built sum CDF: %d grid points, horizon %.2f days, end value %.5f",
                 n_points, grid_times[-1], grid_values[-1])

    return SumCdf(
        grid_times=grid_times,
        grid_values=grid_values,
        sample_count=n,
        rng_seed=int(seed),
        grid_step=float(grid_step),
        coverage=float(coverage),
    )


def eval_cdf(cdf: SumCdf, t: Union[float, ArrayLike]) -> Union[float, np.ndarray]:
    """
    Evaluate G at t days by linear interpolation.

    Below the grid the value is 0; above it, the last grid value.
    """
    values = np.interp(t, cdf.grid_times, cdf.grid_values, left=0.0, right=cdf.grid_values[-1])
    if np.ndim(values) == 0:
        return float(values)
    return values

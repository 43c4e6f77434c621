"""
Distribution arithmetic and hypothesis tests over zero-count samples.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import exp, isfinite, lgamma, log
from typing import Iterable, Sequence

import numpy as np

from .distinguisher import CountDistribution

POOLING_THRESHOLD = 5.0

_GAMMA_EPS = 1e-16
_GAMMA_MAX_ITER = 10_000
_TINY = 1e-300


@dataclass(frozen=True, eq=False)
class EmpiricalDistribution:
    rounds: int
    counts: np.ndarray
    total: int

    def __post_init__(self):
        c = np.array(self.counts, dtype=np.int64).reshape(-1)
        if c.size != self.rounds + 1 or c.min() < 0:
            raise ValueError("counts must be non-negative with one entry per zero-count 0..rounds")
        if int(c.sum()) != self.total or self.total <= 0:
            raise ValueError("total must equal the sum of counts and be positive")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    def frequencies(self) -> np.ndarray:
        return self.counts / self.total

    def normalized(self) -> CountDistribution:
        return CountDistribution(self.rounds, self.frequencies())


@dataclass(frozen=True)
class SecondLevelSummary:
    mode_set: frozenset[int]
    mass_at_1_and_4: float
    mass_elsewhere: float
    sample_variance: float
    sample_mean: float = 0.0


@dataclass(frozen=True)
class HypothesisTestResult:
    statistic: float
    degrees_of_freedom: int
    p_value: float


def empirical_distribution(zero_counts: Iterable[int], k: int) -> EmpiricalDistribution:
    if k < 1:
        raise ValueError("k must be >= 1")
    arr = np.asarray(list(zero_counts) if not isinstance(zero_counts, np.ndarray) else zero_counts)
    if arr.size == 0:
        raise ValueError("no samples")
    arr = arr.astype(np.int64).reshape(-1)
    if arr.min() < 0 or arr.max() > k:
        raise ValueError(f"zero-count outside [0, {k}]")
    counts = np.bincount(arr, minlength=k + 1)
    return EmpiricalDistribution(k, counts, int(arr.size))


def total_variation(d1: CountDistribution, d2: CountDistribution) -> float:
    if d1.rounds != d2.rounds:
        raise ValueError(f"rounds differ: {d1.rounds} vs {d2.rounds}")
    return float(0.5 * np.abs(d1.mass - d2.mass).sum())


# -- regularized incomplete gamma ------------------------------------------

def _gamma_series(a: float, x: float) -> float:
    """Lower regularized P(a, x) by its power series; good for x < a + 1."""
    term = total = 1.0 / a
    ap = a
    for _ in range(_GAMMA_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _GAMMA_EPS:
            break
    else:
        raise ArithmeticError(f"incomplete gamma series did not converge (a={a}, x={x})")
    return total * exp(-x + a * log(x) - lgamma(a))


def _gamma_continued_fraction(a: float, x: float) -> float:
    """Upper regularized Q(a, x) by Lentz's continued fraction; good for x >= a + 1."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _GAMMA_MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _GAMMA_EPS:
            break
    else:
        raise ArithmeticError(f"incomplete gamma continued fraction did not converge (a={a}, x={x})")
    return exp(-x + a * log(x) - lgamma(a)) * h


def regularized_gamma_q(a: float, x: float) -> float:
    """Upper regularized incomplete gamma Q(a, x) = Gamma(a, x) / Gamma(a)."""
    if a <= 0 or x < 0 or not (isfinite(a) and isfinite(x)):
        raise ValueError(f"invalid arguments a={a}, x={x}")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _gamma_series(a, x))
    return min(1.0, _gamma_continued_fraction(a, x))


def chi_square_sf(statistic: float, df: int) -> float:
    """Upper-tail probability of the chi-square distribution."""
    if df < 1:
        raise ValueError("df must be >= 1")
    if statistic <= 0:
        return 1.0
    return regularized_gamma_q(df / 2.0, statistic / 2.0)


# -- goodness of fit ----------------------------------------------------------

def _pool(observed: np.ndarray, expected: np.ndarray, threshold: float):
    keep = np.flatnonzero(expected >= threshold)
    if keep.size == 0:
        raise ValueError("every bin falls below the pooling threshold")
    obs = observed[keep].astype(float)
    exp_ = expected[keep].astype(float)
    for i in np.flatnonzero(expected < threshold):
        # nearest retained bin; ties go to the lower index
        j = int(np.argmin(np.abs(keep - i)))
        obs[j] += observed[i]
        exp_[j] += expected[i]
    return obs, exp_


def chi_square_gof(
    emp: EmpiricalDistribution, ref: CountDistribution, threshold: float = POOLING_THRESHOLD
) -> HypothesisTestResult:
    """Pearson chi-square test of ``emp`` against ``ref``.

    Bins with expected count below ``threshold`` are merged into the nearest
    retained bin before the statistic is formed.
    """
    if emp.rounds != ref.rounds:
        raise ValueError("rounds differ between sample and reference")
    if np.any((ref.mass <= 0) & (emp.counts > 0)):
        raise ValueError("sample has counts where the reference has no mass")
    expected = emp.total * ref.mass
    obs, exp_ = _pool(emp.counts, expected, threshold)
    stat = float(((obs - exp_) ** 2 / exp_).sum())
    df = obs.size - 1
    p = 1.0 if df == 0 else chi_square_sf(stat, df)
    return HypothesisTestResult(stat, df, p)


# -- likelihood ratio -----------------------------------------------------------

def log_likelihood_ratio(
    zero_counts: Sequence[int], d_comp: CountDistribution, d_diag: CountDistribution
) -> float:
    """sum over samples of log d_comp[c] - log d_diag[c]."""
    if d_comp.rounds != d_diag.rounds:
        raise ValueError("reference distributions have different rounds")
    c = np.asarray(zero_counts, dtype=np.int64).reshape(-1)
    if c.size and (c.min() < 0 or c.max() > d_comp.rounds):
        raise ValueError("zero-count out of range")
    pc, pd = d_comp.mass[c], d_diag.mass[c]
    if np.any(pc <= 0) or np.any(pd <= 0):
        raise ValueError("a reference assigns zero mass to an observed count")
    return float(np.sum(np.log(pc) - np.log(pd)))


def second_level_summary(emp: EmpiricalDistribution, focus: tuple[int, ...] = (1, 4)) -> SecondLevelSummary:
    """Descriptive statistics over a group's zero-counts.

    ``mass_at_1_and_4`` is the sample fraction landing on the ``focus``
    counts (1 and 4 by default, the modes of the two computational-basis
    branches at five rounds).
    """
    counts = emp.counts
    modes = frozenset(int(i) for i in np.flatnonzero(counts == counts.max()))
    focus_idx = [f for f in set(focus) if 0 <= f <= emp.rounds]
    at_focus = float(counts[focus_idx].sum()) / emp.total if focus_idx else 0.0
    values = np.arange(emp.rounds + 1)
    mean = float(np.dot(values, counts)) / emp.total
    if emp.total > 1:
        var = float(np.dot((values - mean) ** 2, counts)) / (emp.total - 1)
    else:
        var = 0.0
    return SecondLevelSummary(modes, at_focus, 1.0 - at_focus, var, mean)


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion (95% by default)."""
    if trials < 1 or not 0 <= successes <= trials:
        raise ValueError("need 0 <= successes <= trials and trials >= 1")
    p = successes / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * np.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)

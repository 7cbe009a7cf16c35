# Copyright 2024 The FlowGAN Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Statistical primitives for comparing price paths."""

import dataclasses
import math
from typing import List, Sequence, Tuple

import numpy as np
import scipy.stats

from flowgan import errors


@dataclasses.dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    n: Tuple[int, ...]

    def __post_init__(self):
        if not math.isfinite(self.statistic):
            raise errors.NumericError("test statistic is not finite", {"n": self.n})
        object.__setattr__(self, "p_value", float(min(max(self.p_value, 0.0), 1.0)))


@dataclasses.dataclass(frozen=True)
class JarqueBeraResult:
    statistic: float
    skewness: float
    kurtosis: float
    p_value: float
    n: int


@dataclasses.dataclass(frozen=True)
class VolatilityTriple:
    v_r: float
    v_p: float
    v_d: float

    def as_tuple(self) -> Tuple[float, float, float]:
        return self.v_r, self.v_p, self.v_d


VOLATILITY_MEASURES = ("v_r", "v_p", "v_d")


def log_returns(prices: Sequence[float]) -> np.ndarray:
    """r_i = ln(p_i / p_{i-1})."""
    prices = np.asarray(prices, dtype=np.float64)
    if np.any(prices <= 0) or not np.all(np.isfinite(prices)):
        raise ValueError("prices must be finite and positive")
    return np.diff(np.log(prices))


def ks_two_sample(a: Sequence[float], b: Sequence[float]) -> TestResult:
    """Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.

    D = sup_x |F_A(x) - F_B(x)|; p = P(K > sqrt(en) * D) for the Kolmogorov
    distribution K and en = |A||B| / (|A| + |B|).
    """
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    n1, n2 = len(a), len(b)
    if n1 < 2 or n2 < 2:
        raise errors.DegenerateSampleError(
            "K-S needs at least 2 points per sample", {"n1": n1, "n2": n2}
        )
    both = np.concatenate([a, b])
    cdf1 = np.searchsorted(a, both, side="right") / n1
    cdf2 = np.searchsorted(b, both, side="right") / n2
    d = float(np.max(np.abs(cdf1 - cdf2)))
    en = n1 * n2 / (n1 + n2)
    p = float(scipy.stats.kstwobign.sf(math.sqrt(en) * d))
    return TestResult(statistic=d, p_value=p, n=(n1, n2))


def hochberg(p_values: Sequence[float], alpha: float = 0.1) -> List[int]:
    """Hochberg's step-up procedure.

    With p-values sorted ascending, rejects H_(1..k) for the largest k such
    that p_(k) <= alpha / (m - k + 1).

    Returns:
      Sorted original indices of the rejected hypotheses.
    """
    p = np.asarray(p_values, dtype=np.float64)
    if np.any((p < 0) | (p > 1)) or np.any(np.isnan(p)):
        raise ValueError("p-values must lie in [0, 1]")
    m = len(p)
    order = np.argsort(p, kind="stable")
    for k in range(m, 0, -1):
        if p[order[k - 1]] <= alpha / (m - k + 1):
            return sorted(int(i) for i in order[:k])
    return []


def bonferroni(p_values: Sequence[float], alpha: float = 0.1) -> List[int]:
    p = np.asarray(p_values, dtype=np.float64)
    if not len(p):
        return []
    return [int(i) for i in np.flatnonzero(p <= alpha / len(p))]


def jarque_bera(x: Sequence[float]) -> JarqueBeraResult:
    """Jarque-Bera normality test with raw (non-excess) kurtosis.

    JB = n / 6 * (S^2 + (K - 3)^2 / 4), p from the chi-square(2) upper tail.
    Moments are the biased sample moments.

    Raises:
      DegenerateSampleError: for fewer than 4 points or zero variance.
    """
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    if n < 4:
        raise errors.DegenerateSampleError("Jarque-Bera needs at least 4 points", {"n": n})
    centered = x - x.mean()
    m2 = np.mean(centered**2)
    if m2 <= 0 or np.ptp(x) == 0:
        raise errors.DegenerateSampleError("zero variance", {"n": n})
    skewness = float(np.mean(centered**3) / m2**1.5)
    kurtosis = float(np.mean(centered**4) / m2**2)
    statistic = n / 6.0 * (skewness**2 + (kurtosis - 3.0) ** 2 / 4.0)
    p_value = float(scipy.stats.chi2.sf(statistic, 2))
    return JarqueBeraResult(statistic, skewness, kurtosis, p_value, n)


def tail_exponent(
    abs_returns: Sequence[float], tail_fraction: float = 0.05, min_tail: int = 20
) -> float:
    """Hill estimate of alpha in p(x) ~ x^-alpha.

    Uses the k = floor(tail_fraction * n) largest values with x_min the
    (k + 1)-th largest: alpha = 1 + k / sum(ln(x_i / x_min)).

    Raises:
      DegenerateSampleError: if fewer than `min_tail` tail points remain, the
        threshold is not positive, or the tail values are all equal.
    """
    if not 0 < tail_fraction < 1:
        raise ValueError(f"tail_fraction must lie in (0, 1), got {tail_fraction}")
    x = np.sort(np.abs(np.asarray(abs_returns, dtype=np.float64)))[::-1]
    k = int(math.floor(tail_fraction * len(x)))
    if k < min_tail or k >= len(x):
        raise errors.DegenerateSampleError(
            "too few tail points", {"k": k, "min_tail": min_tail, "n": len(x)}
        )
    x_min = x[k]
    if x_min <= 0:
        raise errors.DegenerateSampleError("tail threshold is zero", {"k": k})
    spacing = float(np.sum(np.log(x[:k] / x_min)))
    if spacing <= 0:
        raise errors.DegenerateSampleError("tail values are all equal", {"k": k})
    return 1.0 + k / spacing


def t_test_one_sample(samples: Sequence[float], mu0: float) -> TestResult:
    """Two-tailed one-sample Student t-test of mean == mu0."""
    x = np.asarray(samples, dtype=np.float64)
    n = len(x)
    if n < 2:
        raise errors.DegenerateSampleError("t-test needs at least 2 samples", {"n": n})
    s = float(np.std(x, ddof=1))
    if s == 0 or np.ptp(x) == 0:
        raise errors.DegenerateSampleError("zero variance", {"n": n})
    t = (float(x.mean()) - mu0) / (s / math.sqrt(n))
    p = float(2.0 * scipy.stats.t.sf(abs(t), n - 1))
    return TestResult(statistic=t, p_value=p, n=(n,))


def volatilities(prices: Sequence[float], trade_count: int) -> VolatilityTriple:
    """Realised, per-trade realised and intraday range volatility.

    v_r = sqrt(sum r_i^2), v_p = sqrt(sum r_i^2 / max(trade_count, 1)) and
    v_d = (max p - min p) / p_first.
    """
    prices = np.asarray(prices, dtype=np.float64)
    if len(prices) < 2:
        raise errors.DegenerateSampleError("need at least 2 prices", {"n": len(prices)})
    squared = float(np.sum(log_returns(prices) ** 2))
    return VolatilityTriple(
        v_r=math.sqrt(squared),
        v_p=math.sqrt(squared / max(int(trade_count), 1)),
        v_d=float((prices.max() - prices.min()) / prices[0]),
    )

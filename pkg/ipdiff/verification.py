"""Statistical comparison engine: KS tests, moment bands, Hill tail indices, Laplace and rate checks."""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from .config import (
    HILL_BOOTSTRAP,
    HILL_FRACTION,
    HILL_MIN_TAIL,
    HILL_SWEEP,
    KS_ALPHA,
    KS_MIN_SIZE,
    RATE_RATIO_TOLERANCE,
    SE_BAND,
    SLOPE_TOLERANCE,
)
from .models import ParameterDomainError, ResolutionError, TestReport
from .rng import RngStream

logger = logging.getLogger(__name__)

# A sweep whose index rises by more than this factor from the widest to the
# narrowest tail fraction is flagged as not heavy tailed.
HILL_DRIFT_LIMIT = 1.2


def _finite(sample: Iterable[float], name: str = "sample") -> np.ndarray:
    arr = np.asarray(list(sample) if not isinstance(sample, np.ndarray) else sample, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ParameterDomainError(f"{name} contains non-finite values")
    return arr


def ks_two_sample(a: Iterable[float], b: Iterable[float]) -> Tuple[float, float]:
    """Two-sample KS statistic and asymptotic p-value."""
    a, b = _finite(a, "a"), _finite(b, "b")
    if min(a.size, b.size) < KS_MIN_SIZE:
        raise ParameterDomainError(f"KS needs at least {KS_MIN_SIZE} points per sample, got {a.size} and {b.size}")
    res = stats.ks_2samp(a, b, method="asymp")
    return float(res.statistic), float(res.pvalue)


def ks_one_sample(sample: Iterable[float], cdf: Callable[[np.ndarray], np.ndarray]) -> Tuple[float, float]:
    x = _finite(sample)
    if x.size < KS_MIN_SIZE:
        raise ParameterDomainError(f"KS needs at least {KS_MIN_SIZE} points, got {x.size}")
    res = stats.kstest(x, cdf)
    return float(res.statistic), float(res.pvalue)


@dataclass
class HillEstimate:
    index: float
    ci_low: float
    ci_high: float
    tail_size: int
    fraction: float
    sweep: Dict[float, float] = field(default_factory=dict)
    heavy_tailed: bool = True


def _hill(sorted_desc: np.ndarray, k: int) -> float:
    threshold = sorted_desc[k]
    return 1.0 / float(np.mean(np.log(sorted_desc[:k] / threshold)))


def hill_tail_index(sample: Iterable[float], fraction: float = HILL_FRACTION, stream: Optional[RngStream] = None,
                    bootstrap: int = HILL_BOOTSTRAP, sweep: Sequence[float] = HILL_SWEEP,
                    confidence: float = 0.95) -> HillEstimate:
    """Hill estimate of the tail index over the top `fraction` of the sample, with a bootstrap interval.

    The index is the exponent a in P(X > x) ~ x^-a.
    """
    x = _finite(sample)
    x = x[x > 0]
    k = int(fraction * x.size)
    if k < HILL_MIN_TAIL:
        raise ResolutionError(f"only {k} tail points at fraction {fraction}; need {HILL_MIN_TAIL}")
    desc = np.sort(x)[::-1]
    index = _hill(desc, k)

    estimates = {}
    for f in sweep:
        kf = int(f * x.size)
        if kf >= HILL_MIN_TAIL:
            estimates[float(f)] = _hill(desc, kf)
    heavy = True
    if len(estimates) >= 2:
        widest, narrowest = estimates[max(estimates)], estimates[min(estimates)]
        heavy = narrowest <= HILL_DRIFT_LIMIT * widest

    lo = hi = index
    if bootstrap > 0:
        stream = stream or RngStream(0)
        gen = stream.generator
        boot = np.empty(bootstrap)
        for b in range(bootstrap):
            resample = np.sort(gen.choice(x, size=x.size, replace=True))[::-1]
            boot[b] = _hill(resample, k)
        q = (1.0 - confidence) / 2.0
        lo, hi = (float(v) for v in np.quantile(boot, [q, 1.0 - q]))
    if not heavy:
        logger.warning(f"⚠️ Hill estimates drift across fractions {estimates}; sample looks light tailed")
    return HillEstimate(index=index, ci_low=lo, ci_high=hi, tail_size=k, fraction=fraction,
                        sweep=estimates, heavy_tailed=heavy)


def hill_test(name: str, anchor: str, sample: Iterable[float], expected: float, tolerance: float,
              stream: Optional[RngStream] = None, fraction: float = HILL_FRACTION) -> TestReport:
    start = time.perf_counter()
    x = _finite(sample)
    est = hill_tail_index(x, fraction=fraction, stream=stream)
    passed = abs(est.index - expected) <= tolerance and est.heavy_tailed
    return TestReport(
        name=name, anchor=anchor, sample_sizes=[int(x.size)], statistic=est.index,
        passed=bool(passed), tolerance=f"|index - {expected:g}| <= {tolerance:g}",
        runtime_seconds=time.perf_counter() - start,
        metadata={"expected": expected, "ci": [est.ci_low, est.ci_high], "tail_size": est.tail_size,
                  "sweep": est.sweep, "heavy_tailed": est.heavy_tailed},
    )


def laplace_z_scores(sample: Iterable[float], gammas: Sequence[float], evaluator: Callable[[float], float],
                     present: Optional[Iterable[bool]] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(empirical means, expected values, z-scores) of exp(-gamma X) over the gamma grid.

    Entries outside `present` contribute 0, for sub-probability laws such as a killed atom.
    """
    x = _finite(sample)
    mask = np.ones(x.size, dtype=bool) if present is None else np.asarray(present, dtype=bool).reshape(-1)
    if mask.size != x.size:
        raise ParameterDomainError("present mask must match the sample")
    if x.size < 2:
        raise ParameterDomainError("Laplace comparison needs at least two sample points")
    means, expected, z = [], [], []
    for g in gammas:
        vals = np.where(mask, np.exp(-float(g) * x), 0.0)
        m = float(vals.mean())
        se = float(vals.std(ddof=1)) / math.sqrt(x.size)
        e = float(evaluator(float(g)))
        means.append(m)
        expected.append(e)
        z.append(0.0 if se == 0.0 and m == e else (m - e) / se if se > 0 else math.inf)
    return np.array(means), np.array(expected), np.array(z)


def mc_laplace_compare(sample: Iterable[float], gammas: Sequence[float], evaluator: Callable[[float], float],
                       name: str = "laplace", anchor: str = "", metadata: Optional[Dict] = None,
                       present: Optional[Iterable[bool]] = None) -> TestReport:
    """Monte Carlo E exp(-gamma X) against a closed form; passes when every |z| is inside the band."""
    start = time.perf_counter()
    x = _finite(sample)
    means, expected, z = laplace_z_scores(x, gammas, evaluator, present)
    passed = bool(np.all(np.abs(z) <= SE_BAND))
    meta = {"gammas": list(map(float, gammas)), "empirical": means, "expected": expected}
    meta.update(metadata or {})
    return TestReport(
        name=name, anchor=anchor, sample_sizes=[int(x.size)], statistic=float(np.max(np.abs(z))),
        z_scores=[float(v) for v in z], passed=passed, tolerance=f"|z| <= {SE_BAND:g}",
        runtime_seconds=time.perf_counter() - start, metadata=meta,
    )


def moment_test(sample: Union[Iterable[float], "Summary"], mean: float, var: Optional[float] = None,
                var_tolerance: float = 0.10, name: str = "moments", anchor: str = "") -> TestReport:
    """Mean inside the standard-error band; optionally the variance within a relative tolerance."""
    start = time.perf_counter()
    x = _finite(sample.values if isinstance(sample, Summary) else sample)
    if x.size < 2:
        raise ParameterDomainError("moment test needs at least two sample points")
    m = float(x.mean())
    s2 = float(x.var(ddof=1))
    se = math.sqrt(s2 / x.size)
    z = (m - mean) / se if se > 0 else (0.0 if m == mean else math.inf)
    passed = abs(z) <= SE_BAND
    meta = {"mean": m, "expected_mean": mean, "variance": s2}
    if var is not None:
        rel = abs(s2 - var) / var
        meta.update({"expected_variance": var, "variance_relative_error": rel})
        passed = passed and rel <= var_tolerance
    tol = f"|z| <= {SE_BAND:g}" + (f", variance within {var_tolerance:.0%}" if var is not None else "")
    return TestReport(name=name, anchor=anchor, sample_sizes=[int(x.size)], statistic=z, z_scores=[z],
                      passed=bool(passed), tolerance=tol, runtime_seconds=time.perf_counter() - start,
                      metadata=meta)


def proportion_test(successes: int, n: int, p: float, name: str = "proportion", anchor: str = "") -> TestReport:
    if n <= 0:
        raise ParameterDomainError("proportion test needs n > 0")
    if not 0.0 <= p <= 1.0:
        raise ParameterDomainError(f"probability {p} outside [0, 1]")
    phat = successes / n
    se = math.sqrt(p * (1.0 - p) / n)
    z = (phat - p) / se if se > 0 else (0.0 if phat == p else math.inf)
    return TestReport(name=name, anchor=anchor, sample_sizes=[n], statistic=z, z_scores=[z],
                      passed=bool(abs(z) <= SE_BAND), tolerance=f"|z| <= {SE_BAND:g}",
                      metadata={"observed": phat, "expected": p})


def ks_report(name: str, anchor: str, a: Iterable[float], b: Iterable[float],
              expect_same: bool = True, metadata: Optional[Dict] = None) -> TestReport:
    start = time.perf_counter()
    a, b = _finite(a), _finite(b)
    stat, p = ks_two_sample(a, b)
    passed = p > KS_ALPHA if expect_same else p < KS_ALPHA
    return TestReport(name=name, anchor=anchor, sample_sizes=[int(a.size), int(b.size)], statistic=stat,
                      p_value=p, passed=bool(passed),
                      tolerance=f"p {'>' if expect_same else '<'} {KS_ALPHA:g}",
                      runtime_seconds=time.perf_counter() - start, metadata=metadata or {})


@dataclass
class PowerLawFit:
    slope: float
    amplitude: float
    slope_se: float
    log_amplitude_se: float


def fit_power_law(levels: Sequence[float], counts: Sequence[float], exposure: float = 1.0) -> PowerLawFit:
    """Weighted log-log fit of count / exposure = amplitude * y^slope with Poisson error bars."""
    y = _finite(levels, "levels")
    c = _finite(counts, "counts")
    if y.size < 3 or c.size != y.size:
        raise ParameterDomainError("need counts at three or more thresholds")
    if np.any(c <= 0):
        raise ParameterDomainError("zero counts cannot be fitted on a log scale")
    if exposure <= 0:
        raise ParameterDomainError("exposure must be positive")
    coef, cov = np.polyfit(np.log(y), np.log(c / exposure), 1, w=np.sqrt(c), cov="unscaled")
    return PowerLawFit(slope=float(coef[0]), amplitude=float(math.exp(coef[1])),
                       slope_se=float(math.sqrt(cov[0, 0])), log_amplitude_se=float(math.sqrt(cov[1, 1])))


def rate_ratio_test(levels: Sequence[float], counts: Sequence[float], expected_rate_fn: Callable[[np.ndarray], np.ndarray],
                    exposure: float = 1.0, reference_counts: Optional[Sequence[float]] = None,
                    reference_exposure: float = 1.0, expected_ratio: Optional[float] = None,
                    name: str = "rate-ratio", anchor: str = "") -> TestReport:
    """Fit threshold counts against an expected rate function.

    The slope must match the log-log slope of expected_rate_fn. Without a
    reference series the amplitude must match it too; with one, the ratio
    of fitted amplitudes (this series over the reference) must match
    expected_ratio and both slopes must match.
    """
    start = time.perf_counter()
    y = _finite(levels, "levels")
    target = np.asarray(expected_rate_fn(y), dtype=float)
    target_slope, target_log_amp = np.polyfit(np.log(y), np.log(target), 1)
    fit = fit_power_law(y, counts, exposure)
    slope_ok = abs(fit.slope - target_slope) <= SLOPE_TOLERANCE
    meta = {"slope": fit.slope, "slope_se": fit.slope_se, "amplitude": fit.amplitude,
            "expected_slope": float(target_slope), "expected_amplitude": float(math.exp(target_log_amp))}
    if reference_counts is None:
        ratio = fit.amplitude / math.exp(target_log_amp)
        target_ratio = 1.0
        ref_ok = True
    else:
        ref = fit_power_law(y, reference_counts, reference_exposure)
        ratio = fit.amplitude / ref.amplitude
        target_ratio = float(expected_ratio if expected_ratio is not None else 1.0)
        ref_ok = abs(ref.slope - target_slope) <= SLOPE_TOLERANCE
        meta.update({"reference_slope": ref.slope, "reference_amplitude": ref.amplitude})
    ratio_ok = abs(ratio / target_ratio - 1.0) <= RATE_RATIO_TOLERANCE
    meta.update({"ratio": ratio, "expected_ratio": target_ratio})
    total = int(np.sum(counts)) + (int(np.sum(reference_counts)) if reference_counts is not None else 0)
    return TestReport(
        name=name, anchor=anchor, sample_sizes=[total], statistic=ratio,
        passed=bool(slope_ok and ref_ok and ratio_ok),
        tolerance=f"slopes within {SLOPE_TOLERANCE:g}, ratio within {RATE_RATIO_TOLERANCE:.0%}",
        runtime_seconds=time.perf_counter() - start, metadata=meta,
    )


@dataclass
class Summary:
    """Mergeable per-replicate summary: running moments plus the raw values."""
    count: int = 0
    total: float = 0.0
    total_sq: float = 0.0
    values: List[float] = field(default_factory=list)

    @classmethod
    def of(cls, values: Iterable[float]) -> "Summary":
        v = [float(x) for x in values]
        return cls(len(v), float(sum(v)), float(sum(x * x for x in v)), v)

    def merge(self, other: "Summary") -> "Summary":
        return Summary(self.count + other.count, self.total + other.total,
                       self.total_sq + other.total_sq, self.values + other.values)

    @classmethod
    def merge_all(cls, parts: Iterable["Summary"]) -> "Summary":
        out = cls()
        for p in parts:
            out.count += p.count
            out.total += p.total
            out.total_sq += p.total_sq
            out.values.extend(p.values)
        return out

    @property
    def mean(self) -> float:
        return self.total / self.count if self.count else math.nan

    @property
    def variance(self) -> float:
        if self.count < 2:
            return math.nan
        return max(0.0, (self.total_sq - self.total ** 2 / self.count) / (self.count - 1))

    @property
    def se(self) -> float:
        return math.sqrt(self.variance / self.count) if self.count >= 2 else math.nan

    def sorted_values(self) -> np.ndarray:
        return np.sort(np.asarray(self.values, dtype=float))


def null_rejection_rate(test: Callable[[RngStream], TestReport], streams: Sequence[RngStream]) -> float:
    """Fraction of runs on synthetic null data that fail."""
    failures = sum(0 if test(s).passed else 1 for s in streams)
    return failures / max(1, len(streams))

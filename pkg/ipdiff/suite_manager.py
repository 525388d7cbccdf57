"""
Acceptance suites: named batteries of Monte Carlo checks against the closed-form laws.
"""

import logging
import math
import time
import zlib
from dataclasses import dataclass, field
from enum import Enum
from functools import partial
from typing import Callable, Dict, List, Sequence

import numpy as np

from .bessel_side import (
    brownian_residual_qv,
    build_R_H_from_scaffolding,
    crosscheck_constructions,
    excursion_from_spindle,
    residual_qv_slope,
    residual_qv_slope_se,
    rh_excursion_durations,
    rh_local_time_increments,
    round_trip_error,
    sample_bessel_path,
)
from .besq import Spindle, spindle_bridge
from .config import (
    DEFAULT_HORIZON,
    KS_ALPHA,
    KS_MIN_SIZE,
    ROUND_TRIP_TOLERANCE,
    SE_BAND,
    SLOPE_TOLERANCE,
)
from .execution_engine import run_replicates
from .laws import (
    exp_start_extinction,
    law_registry,
    pi_y_tail,
    pi_y_tail_laguerre,
    pi_y_tail_quad,
    phi_y_denominator,
    phi_y_denominator_quad,
    pseudo_stationary_reference,
    rho_time_change,
    sample_pd,
)
from .levy import levy_tail
from .models import ResolutionError, TestReport
from .rng import RngStream, sample_exponential, sample_uniform
from .scaffolding import (
    clade_from_block,
    excursion_summaries,
    pseudo_stationary_run,
    run_cycles,
    sample_leftmost_spindle_process,
    sample_marked_scaffolding,
    stop_at_local_time,
    type0_skewer_run,
    type1_skewer_run,
)
from .skewer import IntervalPartition, skewer
from .utils import log_section
from .verification import (
    hill_test,
    ks_report,
    mc_laplace_compare,
    moment_test,
    null_rejection_rate,
    proportion_test,
    rate_ratio_test,
    Summary,
)

logger = logging.getLogger(__name__)

GAMMAS = (0.5, 1.0, 2.0)
CHUNK = 500  # draws per replicate task for the cheap exact samplers
MASS_CHUNK = 50  # skewer runs per replicate task in the mass checks


class SuiteType(Enum):
    """Suites selectable with --suite."""
    TRIVIAL = "trivial"
    FULL = "full"
    NEGATIVE_CONTROLS = "negative-controls"
    BESQ0_MASS = "besq0-mass"
    TYPE0_MASS = "type0-mass"
    LEFTMOST = "leftmost"
    KERNEL = "kernel"
    TAILS = "tails"
    RATES = "rates"
    CROSSCHECK = "crosscheck"
    ROUNDTRIP = "roundtrip"
    PSEUDO_STATIONARY = "pseudo-stationary"
    RESIDUAL = "residual"
    CALIBRATION = "calibration"


@dataclass
class SuiteContext:
    """Run parameters shared by every check of a suite."""
    alpha: float
    eps: float
    levels: List[float]
    master_seed: int
    threads: int = 1
    horizon: float = DEFAULT_HORIZON
    scale: float = 1.0
    u: float = 1.0

    @property
    def d(self) -> float:
        return 1.0 - self.alpha

    def n(self, base: int, minimum: int = KS_MIN_SIZE) -> int:
        return max(minimum, int(round(base * self.scale)))

    def stream(self, label: str) -> RngStream:
        """A stream per check, keyed by the check's name so suites can run in any order."""
        return RngStream(self.master_seed, zlib.crc32(label.encode("utf-8")))

    def replicates(self, fn, label: str, n: int) -> list:
        return run_replicates(fn, self.stream(label).spawn(n), self.threads, self.horizon, label=label)


Check = Callable[[SuiteContext], List[TestReport]]


@dataclass
class Suite:
    name: str
    description: str
    checks: List[Check] = field(default_factory=list)


def _identity(name: str, anchor: str, value: float, expected: float, tol: float = 1e-9) -> TestReport:
    err = abs(value - expected) / max(1.0, abs(expected))
    return TestReport(name=name, anchor=anchor, statistic=err, passed=bool(err <= tol),
                      tolerance=f"relative error <= {tol:g}", metadata={"value": value, "expected": expected})


# Replicate tasks: module-level so worker processes can import them.

def _type1_masses(stream: RngStream, horizon: float, alpha: float, eps: float, levels: Sequence[float],
                  blocks: Sequence[float]) -> np.ndarray:
    parts = type1_skewer_run(stream, IntervalPartition.from_blocks(blocks), levels, alpha, eps, horizon=horizon)
    return np.array([p.total_mass for p in parts])


def _type0_masses(stream: RngStream, horizon: float, alpha: float, eps: float, levels: Sequence[float],
                  u: float) -> np.ndarray:
    return np.array([p.total_mass for p in type0_skewer_run(stream, u, levels, alpha, eps, horizon=horizon)])


def _mass_summaries(stream: RngStream, horizon: float, masses: Callable, n: int) -> List[Summary]:
    """Per-level Summary of n mass draws, one walker run per draw."""
    draws = np.array([masses(s, horizon) for s in stream.spawn(n)])
    return [Summary.of(draws[:, j]) for j in range(draws.shape[1])]


def _fold_masses(ctx: SuiteContext, masses: Callable, label: str, n: int, k: int) -> List[Summary]:
    fn = partial(_mass_summaries, masses=masses, n=MASS_CHUNK)
    parts = ctx.replicates(fn, label, math.ceil(n / MASS_CHUNK))
    return [Summary.merge_all(p[j] for p in parts) for j in range(k)]


def _leftmost_chunk(stream: RngStream, horizon: float, alpha: float, x: float, y: float, n: int) -> np.ndarray:
    return np.array([sample_leftmost_spindle_process(s, x, [y], alpha)[0] for s in stream.spawn(n)])


def _clade_at_level(stream: RngStream, horizon: float, alpha: float, eps: float, b: float,
                    y: float) -> IntervalPartition:
    X = clade_from_block(stream, b, alpha, eps, levels=[y], spindles="levels", horizon=horizon)
    return skewer(X, y)


def _cycle_masses(stream: RngStream, horizon: float, alpha: float, eps: float, cycles: int,
                  cutoff: float) -> np.ndarray:
    X = run_cycles(stream, alpha, eps, cycles, levels=[0.0], spindles="levels", ceiling=cutoff,
                   floor=-cutoff, horizon=horizon)
    table = excursion_summaries(X)
    return table.central_mass[table.complete]


def _cycle_durations(stream: RngStream, horizon: float, alpha: float, eps: float, cycles: int,
                     cutoff: float) -> np.ndarray:
    X = run_cycles(stream, alpha, eps, cycles, spindles="none", ceiling=cutoff, floor=-cutoff, horizon=horizon)
    return rh_excursion_durations(X, stream.child())


def _rh_level0_increments(stream: RngStream, horizon: float, alpha: float, eps: float, cycles: int,
                          cutoff: float) -> np.ndarray:
    X = run_cycles(stream, alpha, eps, cycles, levels=[0.0], spindles="levels", ceiling=cutoff,
                   floor=-cutoff, horizon=horizon)
    return rh_local_time_increments(build_R_H_from_scaffolding(X, stream.child()), 0.0)


def _jump_sizes(stream: RngStream, horizon: float, alpha: float, eps: float, duration: float) -> np.ndarray:
    return sample_marked_scaffolding(stream, alpha, eps, duration, spindles="none").jump_sizes


def _excursion_counts(stream: RngStream, horizon: float, alpha: float, eps: float, v: float,
                      thresholds: Sequence[float], block_cut: float) -> tuple:
    top = float(max(thresholds))
    X = stop_at_local_time(stream, alpha, eps, v, rule="sup", y_calib=top, levels=[0.0], spindles="levels",
                           floor=-1.5 * top, horizon=horizon)
    table = excursion_summaries(X)
    sup, inf = table.supremum[table.complete], table.infimum[table.complete]
    n_sup = np.array([np.sum(sup > y) for y in thresholds])
    n_inf = np.array([np.sum(inf < -y) for y in thresholds])
    n_blocks = int(np.sum(skewer(X, 0.0).blocks > block_cut))
    return n_sup, n_inf, n_blocks


def _pseudo_stationary(stream: RngStream, horizon: float, alpha: float, eps: float, rho: float,
                       levels: Sequence[float]) -> List[IntervalPartition]:
    return pseudo_stationary_run(stream, alpha, rho, levels, eps, horizon=horizon)


def _residual(stream: RngStream, horizon: float, alpha: float, eps: float, u: float) -> tuple:
    path = sample_bessel_path(stream, alpha, eps, u, grid_points=512, y_calib=0.5, horizon=horizon)
    return brownian_residual_qv(path)


# Acceptance checks

def check_trivial(ctx: SuiteContext) -> List[TestReport]:
    """Determinism and closed-form identities; fast."""
    d = ctx.d
    reports = []
    runs = [_type1_masses(RngStream(ctx.master_seed, 7), ctx.horizon, ctx.alpha, 0.05, [0.0, 0.25], [1.0])
            for _ in range(2)]
    reports.append(TestReport(name="determinism", anchor="a run is a pure function of the master seed",
                              statistic=float(np.max(np.abs(runs[0] - runs[1]))),
                              passed=bool(np.array_equal(runs[0], runs[1])), tolerance="identical outputs"))
    reports.append(_identity("initial-condition", "skewer at level 0 of a type-1 clade is the initial block",
                             float(runs[0][0]), 1.0, 1e-12))
    reports.append(_identity("leftmost-semigroup-gamma0", "Laplace transform at 0 is 1",
                             law_registry.bind("leftmost-semigroup", x=1.0, y=1.0, d=d)(0.0), 1.0))
    reports.append(_identity("leftmost-semigroup-value", "leftmost semigroup from 0 at y = gamma = 1, d = 1/2",
                             law_registry.bind("leftmost-semigroup", x=0.0, y=1.0, d=0.5)(1.0),
                             math.sqrt(3.0) - math.sqrt(2.0)))
    reports.append(_identity("kernel-p-y-value", "kernel Laplace transform at x = y = gamma = 1, d = 1/2",
                             law_registry.bind("kernel-p-y", x=1.0, y=1.0, d=0.5)(1.0),
                             math.sqrt(2.0) * (math.exp(-0.5) - math.exp(-1.0))))
    reports.append(_identity("type1-leftmost-value", "leftmost block transform at b = 1, y = 1/2, gamma = 1",
                             law_registry.bind("type1-leftmost", b=1.0, y=0.5, alpha=0.5)(1.0),
                             math.sqrt(2.0) * math.expm1(0.5) / math.expm1(1.0)))
    reports.append(_identity("phi-y-fixed-point", "phi = 1 is fixed by the kernel",
                             law_registry.bind("phi-y-exponential", x=1.0, y=1.0, d=d)(0.0), 1.0))
    reports.append(_identity("phi-y-denominator", "closed-form denominator against quadrature",
                             phi_y_denominator(1.0, 1.0, d), phi_y_denominator_quad(1.0, 1.0, d), 1e-6))
    reports.append(_identity("pi-y-tail-quad", "Lévy tail by incomplete Gamma against quadrature",
                             pi_y_tail(1.0, 1.0, d), pi_y_tail_quad(1.0, 1.0, d), 1e-6))
    reports.append(_identity("pi-y-tail-rules", "two independent quadrature rules agree",
                             pi_y_tail_quad(1.0, 1.0, d), pi_y_tail_laguerre(1.0, 1.0, d), 1e-8))
    reports.append(_identity("rho-constant-mass", "rho(u) = c u for constant mass c",
                             rho_time_change(np.linspace(0.0, 4.0, 401), np.full(401, 2.0), 1.5), 3.0, 1e-9))
    test_spindle = Spindle.from_function(lambda z: z * (1.0 - z), 1.0, 1e-4)
    exc = excursion_from_spindle(test_spindle)
    reports.append(_identity("excursion-lifetime", "excursion lifetime is the spindle area",
                             exc.lifetime, 1.0 / 6.0, 1e-6))
    reports.append(_identity("excursion-value", "e(1/12) = f(1/2) / 2", float(exc.at(1.0 / 12.0)), 0.125, 1e-4))
    err = round_trip_error(test_spindle)
    reports.append(TestReport(name="round-trip-deterministic", anchor="spindle to excursion to spindle",
                              statistic=err, passed=bool(err <= ROUND_TRIP_TOLERANCE),
                              tolerance=f"sup error <= {ROUND_TRIP_TOLERANCE:g}"))
    reports.append(crosscheck_constructions(ctx.stream("crosscheck-empty"), ctx.alpha, 0.0, ctx.levels,
                                            ctx.eps, replicates=1))
    return reports


def check_besq0_mass(ctx: SuiteContext) -> List[TestReport]:
    levels = [0.25, 0.5, 1.0]
    n = ctx.n(10_000)
    fn = partial(_type1_masses, alpha=ctx.alpha, eps=ctx.eps, levels=levels, blocks=[1.0])
    masses = _fold_masses(ctx, fn, "besq0-mass", n, len(levels))
    return [moment_test(masses[j], mean=1.0, var=4.0 * y, name=f"besq0-mass-y{y:g}",
                        anchor="total mass of a type-1 evolution is BESQ(0)")
            for j, y in enumerate(levels)]


def check_type0_mass(ctx: SuiteContext, dimension_factor: float = 1.0, name: str = "type0-mass") -> List[TestReport]:
    levels = [0.25, 0.5]
    n = ctx.n(10_000)
    fn = partial(_type0_masses, alpha=ctx.alpha, eps=ctx.eps, levels=levels, u=1.0)
    masses = _fold_masses(ctx, fn, "type0-mass", n, len(levels))
    delta = 2.0 * ctx.alpha * dimension_factor
    return [moment_test(masses[j], mean=delta * y, name=f"{name}-y{y:g}",
                        anchor="total mass of a type-0 evolution is BESQ(2 alpha)")
            for j, y in enumerate(levels)]


def _leftmost_samples(ctx: SuiteContext, x: float, y: float) -> np.ndarray:
    tasks = math.ceil(ctx.n(10_000) / CHUNK)
    fn = partial(_leftmost_chunk, alpha=ctx.alpha, x=x, y=y, n=CHUNK)
    return np.concatenate(ctx.replicates(fn, f"leftmost-x{x:g}", tasks))


def check_leftmost(ctx: SuiteContext, d_override: float = None, name: str = "leftmost") -> List[TestReport]:
    y = 1.0
    d = ctx.d if d_override is None else d_override
    reports = []
    for x in (0.5, 1.0):
        sample = _leftmost_samples(ctx, x, y)
        reports.append(mc_laplace_compare(
            sample, GAMMAS, law_registry.bind("leftmost-semigroup", x=x, y=y, d=d),
            name=f"{name}-x{x:g}", anchor="Laplace transform of the leftmost spindle process",
            metadata={"x": x, "y": y, "units": "block units on both sides"}))
    return reports


def check_kernel(ctx: SuiteContext) -> List[TestReport]:
    x, y = 0.5, 0.5
    b = 2.0 * x
    n = ctx.n(10_000)
    fn = partial(_clade_at_level, alpha=ctx.alpha, eps=ctx.eps, b=b, y=y)
    parts = ctx.replicates(fn, "kernel", n)
    alive = np.array([p.count > 0 for p in parts])
    leftmost = np.array([p.blocks[0] if p.count else 0.0 for p in parts])
    totals = np.array([p.total_mass for p in parts])
    dictionary = {"mass_dictionary": "atom a = block / 2", "x": x, "b": b, "y": y}
    reports = [
        mc_laplace_compare(leftmost / 2.0, GAMMAS, law_registry.bind("kernel-p-y", x=x, y=y, d=ctx.d),
                           present=alive, name="kernel-p-y",
                           anchor="single-atom transition kernel of the measure-valued process",
                           metadata=dictionary),
        mc_laplace_compare(leftmost, GAMMAS, lambda g: law_registry.bind(
                               "type1-leftmost", b=b, y=y, alpha=ctx.alpha)(g) * (1.0 - math.exp(-b / (2.0 * y)))
                           + math.exp(-b / (2.0 * y)),
                           name="type1-leftmost", anchor="leftmost block of the type-1 transition kernel",
                           metadata={"b": b, "y": y}),
        mc_laplace_compare(totals / 2.0, GAMMAS, law_registry.bind("phi-y-exponential", x=x, y=y, d=ctx.d),
                           name="phi-y-exponential",
                           anchor="evolution of exponential test functions under the measure-valued kernel",
                           metadata=dictionary),
    ]
    return reports


def check_tails(ctx: SuiteContext) -> List[TestReport]:
    a = ctx.alpha
    cutoff = 0.05
    per_task = 5_000
    target = ctx.n(100_000, minimum=5_000)
    tasks = max(1, math.ceil(target / per_task))

    jump_duration = per_task / levy_tail(ctx.eps, a)
    jumps = np.concatenate(ctx.replicates(partial(_jump_sizes, alpha=a, eps=ctx.eps, duration=jump_duration),
                                          "tails-jumps", tasks))
    central = np.concatenate(ctx.replicates(
        partial(_cycle_masses, alpha=a, eps=ctx.eps, cycles=per_task, cutoff=cutoff), "tails-cycles", tasks))
    increments = np.concatenate(ctx.replicates(
        partial(_rh_level0_increments, alpha=a, eps=ctx.eps, cycles=per_task, cutoff=cutoff), "tails-level0", tasks))
    durations = np.concatenate(ctx.replicates(
        partial(_cycle_durations, alpha=a, eps=ctx.eps, cycles=per_task, cutoff=cutoff), "tails-durations", tasks))
    hill_stream = ctx.stream("tails-bootstrap")
    return [
        hill_test("tail-jumps", "scaffolding is stable with index 1 + alpha", jumps, 1.0 + a, 0.1, hill_stream),
        hill_test("tail-aggregate-mass", "aggregate mass at inverse local time is stable(alpha)",
                  central, a, 0.1, hill_stream),
        hill_test("tail-level0-local-time", "lambda^0 at the inverse local time of (R, H) is stable(1 - d)",
                  increments[increments > 0], a, 0.15, hill_stream),
        hill_test("tail-rh-inverse-local-time", "inverse local time of (R, H) at (0, 0) is stable((1 - d) / 2)",
                  durations[durations > 0], a / 2.0, 0.15, hill_stream),
    ]


def check_rates(ctx: SuiteContext) -> List[TestReport]:
    a, d = ctx.alpha, ctx.d
    thresholds = np.array([0.05, 0.1, 0.2, 0.4])
    v = 1.0
    block_cut = 50.0 * ctx.eps
    n = ctx.n(4_000)
    fn = partial(_excursion_counts, alpha=a, eps=ctx.eps, v=v, thresholds=thresholds, block_cut=block_cut)
    runs = ctx.replicates(fn, "rates", n)
    n_sup = np.sum([r[0] for r in runs], axis=0)
    n_inf = np.sum([r[1] for r in runs], axis=0)
    n_blocks = sum(r[2] for r in runs)
    # level-0 blocks above m arrive at rate m^(d-1) / Gamma(d) per unit (R, H) local time
    rh_local_time = n_blocks * math.gamma(d) * block_cut ** (1.0 - d)
    report = rate_ratio_test(thresholds, n_inf, lambda y: y ** (-a), exposure=rh_local_time,
                             reference_counts=n_sup, reference_exposure=n * v,
                             expected_ratio=2.0 ** (1.0 - d), name="excursion-rate-ratio",
                             anchor="H-infima below -y at rate y^(d-1) against suprema at 2^-alpha y^-alpha")
    report.metadata.update({"thresholds": thresholds, "n_sup": n_sup, "n_inf": n_inf,
                            "rh_local_time": rh_local_time, "x_local_time": n * v})
    sup_only = rate_ratio_test(thresholds, n_sup, lambda y: 2.0 ** (-a) * y ** (-a), exposure=n * v,
                               name="sup-excursion-rate",
                               anchor="excursions with supremum above y at rate 2^-alpha y^-alpha")
    return [report, sup_only]


def check_crosscheck(ctx: SuiteContext, drop_constant: bool = False) -> List[TestReport]:
    n = ctx.n(10_000)
    return [crosscheck_constructions(ctx.stream("crosscheck"), ctx.alpha, ctx.u, [0.25, 0.5], ctx.eps, n,
                                     threads=ctx.threads, horizon=ctx.horizon, drop_constant=drop_constant)]


def check_roundtrip(ctx: SuiteContext) -> List[TestReport]:
    start = time.perf_counter()
    det = round_trip_error(Spindle.from_function(lambda z: z * (1.0 - z), 1.0, 1e-4))
    stream = ctx.stream("roundtrip")
    n = ctx.n(100, minimum=10)
    errors, failures = [], 0
    for s in stream.spawn(n):
        try:
            errors.append(round_trip_error(spindle_bridge(s, 1.0, ctx.alpha, dt=1e-4)))
        except ResolutionError as e:
            logger.warning(f"⚠️ Round trip unresolved: {e}")
            failures += 1
    worst = max(errors + [det])
    return [TestReport(name="round-trip", anchor="time change between spindles and Bessel excursions",
                       sample_sizes=[n + 1], statistic=worst,
                       passed=bool(worst <= ROUND_TRIP_TOLERANCE and failures == 0),
                       tolerance=f"sup error <= {ROUND_TRIP_TOLERANCE:g} outside 1% end zones",
                       runtime_seconds=time.perf_counter() - start,
                       metadata={"deterministic": det, "sampled_max": max(errors, default=0.0),
                                 "unresolved": failures})]


def check_pseudo_stationary(ctx: SuiteContext) -> List[TestReport]:
    rho = 1.0
    levels = [0.25, 1.0]
    n = ctx.n(10_000)
    fn = partial(_pseudo_stationary, alpha=ctx.alpha, eps=ctx.eps, rho=rho, levels=levels)
    runs = ctx.replicates(fn, "pseudo-stationary", n)
    anchor = "normalized partition of a pseudo-stationary evolution does not depend on the level"
    largest = []
    reports = []
    for j, y in enumerate(levels):
        parts = [r[j] for r in runs]
        alive = [p for p in parts if p.count]
        largest.append(np.array([p.blocks.max() / p.total_mass for p in alive]))
        reports.append(proportion_test(n - len(alive), n, exp_start_extinction(rho, y),
                                       name=f"pseudo-stationary-extinction-y{y:g}",
                                       anchor="extinction of BESQ(0) from an Exp(rho/2) start"))
    reports.append(ks_report("pseudo-stationary-largest", anchor, largest[0], largest[1]))
    ref = pseudo_stationary_reference(ctx.stream("pseudo-stationary-reference"), ctx.alpha, rho, levels[-1], 1,
                                      size=n)
    reports.append(ks_report("pseudo-stationary-reference", "largest normalized block is PD(alpha, 0) distributed",
                             largest[-1], ref.normalized_largest()))
    return reports


def check_residual(ctx: SuiteContext) -> List[TestReport]:
    start = time.perf_counter()
    n = ctx.n(100, minimum=10)
    eps = max(ctx.eps, 0.01)
    pairs = ctx.replicates(partial(_residual, alpha=ctx.alpha, eps=eps, u=1.0), "residual", n)
    slope, se = residual_qv_slope(pairs), residual_qv_slope_se(pairs)
    # the gate never sits inside the sampling noise of the slope
    gate = max(SLOPE_TOLERANCE, SE_BAND * se) if math.isfinite(se) else SLOPE_TOLERANCE
    return [TestReport(name="brownian-residual", anchor="R + (1 - d) H is a Brownian motion",
                       sample_sizes=[n], statistic=slope, z_scores=[(slope - 1.0) / se] if se > 0 else [],
                       passed=bool(abs(slope - 1.0) <= gate),
                       tolerance=f"|slope - 1| <= max({SLOPE_TOLERANCE:g}, {SE_BAND:g} se)",
                       runtime_seconds=time.perf_counter() - start,
                       metadata={"eps": eps, "elapsed": sum(p[0] for p in pairs), "slope_se": se, "gate": gate})]


# Null tests on synthetic data

def _null_ks(stream: RngStream) -> TestReport:
    a, b = stream.spawn(2)
    return ks_report("null-ks", "synthetic null", sample_exponential(a, 1.0, 500), sample_exponential(b, 1.0, 500))


def _null_moment(stream: RngStream) -> TestReport:
    return moment_test(stream.generator.standard_normal(500), mean=0.0, name="null-moment", anchor="synthetic null")


def _null_laplace(stream: RngStream) -> TestReport:
    return mc_laplace_compare(sample_exponential(stream, 1.0, 500), GAMMAS, lambda g: 1.0 / (1.0 + g),
                              name="null-laplace", anchor="synthetic null")


def _null_proportion(stream: RngStream) -> TestReport:
    hits = int(np.sum(sample_uniform(stream, 500) < 0.3))
    return proportion_test(hits, 500, 0.3, name="null-proportion", anchor="synthetic null")


Z_BAND_NOMINAL = math.erfc(SE_BAND / math.sqrt(2.0))
NULL_TESTS = {
    "null-ks": (_null_ks, KS_ALPHA),
    "null-moment": (_null_moment, Z_BAND_NOMINAL),
    "null-laplace": (_null_laplace, len(GAMMAS) * Z_BAND_NOMINAL),
    "null-proportion": (_null_proportion, Z_BAND_NOMINAL),
}


def negative_controls(ctx: SuiteContext, heavy: bool = True) -> List[TestReport]:
    """Falsified variants; every report here is expected to fail."""
    a = ctx.alpha
    stream = ctx.stream("negative-controls")
    s_exp, s_pd0, s_pda, s_pareto = stream.spawn(4)
    n = ctx.n(5_000)
    reports = [
        mc_laplace_compare(sample_exponential(s_exp, 1.0, n), GAMMAS, lambda g: 2.0 / (2.0 + g),
                           name="negative-laplace-wrong-rate", anchor="Exp(1) sample against the Exp(2) transform"),
        ks_report("negative-pd-theta", "largest masses of PD(alpha, alpha) against PD(alpha, 0)",
                  sample_pd(s_pda, a, a, 1, size=n)[0][:, 0], sample_pd(s_pd0, a, 0.0, 1, size=n)[0][:, 0]),
        hill_test("negative-hill-wrong-index", "Pareto(1 + alpha) sample against index 1 + alpha + 0.5",
                  sample_uniform(s_pareto, ctx.n(100_000, 10_000)) ** (-1.0 / (1.0 + a)), 1.0 + a + 0.5, 0.1,
                  stream.child()),
    ]
    reports += check_leftmost(ctx, d_override=ctx.d / 2.0, name="negative-leftmost-wrong-d")
    if heavy:
        reports += check_type0_mass(ctx, dimension_factor=1.0 / a, name="negative-type0-wrong-dimension")
        reports += check_crosscheck(ctx, drop_constant=True)
    return reports


def check_calibration(ctx: SuiteContext) -> List[TestReport]:
    reports = []
    seeds = ctx.n(200, minimum=50)
    for name, (test, nominal) in NULL_TESTS.items():
        start = time.perf_counter()
        rate = null_rejection_rate(test, ctx.stream(name).spawn(seeds))
        # never stricter than one rejection
        allowance = max(2.0 * nominal + 2.0 * math.sqrt(nominal * (1.0 - nominal) / seeds), 1.0 / seeds)
        reports.append(TestReport(name=f"calibration-{name}", anchor="tests reject their own null at the nominal rate",
                                  sample_sizes=[seeds], statistic=rate, passed=bool(rate <= allowance),
                                  tolerance=f"rejection rate <= {allowance:.4g}",
                                  runtime_seconds=time.perf_counter() - start, metadata={"nominal": nominal}))
    controls = negative_controls(ctx, heavy=False)
    survivors = [r.name for r in controls if r.passed]
    reports.append(TestReport(name="calibration-negative-controls", anchor="every falsified variant fails",
                              sample_sizes=[len(controls)], statistic=float(len(survivors)),
                              passed=not survivors, tolerance="no falsified variant passes",
                              metadata={"passed_controls": survivors}))
    return reports


class SuiteManager:
    """Registry of suites by name."""

    def __init__(self):
        criteria = [check_besq0_mass, check_type0_mass, check_leftmost, check_kernel, check_tails, check_rates,
                    check_crosscheck, check_roundtrip, check_pseudo_stationary, check_residual, check_calibration]
        self.suites: Dict[SuiteType, Suite] = {
            SuiteType.TRIVIAL: Suite("trivial", "determinism and closed-form identities", [check_trivial]),
            SuiteType.FULL: Suite("full", "every acceptance criterion", criteria),
            SuiteType.NEGATIVE_CONTROLS: Suite("negative-controls", "falsified variants, all expected to fail",
                                               [negative_controls]),
            SuiteType.BESQ0_MASS: Suite("besq0-mass", "type-1 total mass is BESQ(0)", [check_besq0_mass]),
            SuiteType.TYPE0_MASS: Suite("type0-mass", "type-0 total mass is BESQ(2 alpha)", [check_type0_mass]),
            SuiteType.LEFTMOST: Suite("leftmost", "leftmost spindle semigroup", [check_leftmost]),
            SuiteType.KERNEL: Suite("kernel", "single-clade transition kernel", [check_kernel]),
            SuiteType.TAILS: Suite("tails", "Hill tail indices", [check_tails]),
            SuiteType.RATES: Suite("rates", "excursion-rate ratio 2^(1-d)", [check_rates]),
            SuiteType.CROSSCHECK: Suite("crosscheck", "scaffolding and Bessel constructions agree", [check_crosscheck]),
            SuiteType.ROUNDTRIP: Suite("roundtrip", "spindle/excursion time-change round trip", [check_roundtrip]),
            SuiteType.PSEUDO_STATIONARY: Suite("pseudo-stationary", "pseudo-stationary evolution",
                                               [check_pseudo_stationary]),
            SuiteType.RESIDUAL: Suite("residual", "Brownian residual quadratic variation", [check_residual]),
            SuiteType.CALIBRATION: Suite("calibration", "null calibration and negative controls",
                                         [check_calibration]),
        }

    def resolve(self, name: str) -> SuiteType:
        try:
            return SuiteType(name)
        except ValueError:
            known = ", ".join(t.value for t in SuiteType)
            raise ValueError(f"Unknown suite {name!r}; known suites: {known}") from None

    def run(self, suite_type: SuiteType, ctx: SuiteContext) -> List[TestReport]:
        suite = self.suites[suite_type]
        log_section(f"🧪 SUITE {suite.name}: {suite.description}")
        reports: List[TestReport] = []
        for check in suite.checks:
            reports.extend(check(ctx))
        return reports


suite_manager = SuiteManager()

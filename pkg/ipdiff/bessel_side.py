"""Bessel-side construction: (R, H) from spindles and back, level local times and the cross-construction check.

Dictionary between the two sides. A spindle f of lifetime zeta(f) becomes
an excursion e of R with

    t(z) = integral_0^z f,    e(t(z)) = f(z) / 2,    H = H_start + z,

so the excursion lifetime is the spindle area and the H increment over the
excursion is zeta(f) = (1/2) integral du / e(u). The inverse map is
f(z) = 2 e(t) with z = (1/2) integral_0^t du / e(u).
"""

import logging
import math
import time
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .besq import GridPath, Spindle, spindle_area
from .config import (
    DEFAULT_HORIZON,
    KS_ALPHA,
    KS_MIN_SIZE,
    MIN_SAMPLES_PER_BIN,
    ROUND_TRIP_END_ZONE,
    SPINDLE_GRID_POINTS,
)
from .execution_engine import run_replicates
from .models import ParameterDomainError, ResolutionError, TestReport, check_real
from .rng import RngStream
from .scaffolding import (
    MarkedScaffolding,
    cycle_ids,
    default_y_calib,
    stop_at_local_time,
    type0_skewer_run,
)
from .skewer import IntervalPartition, skewer_levels
from .utils import log_detail, write_ndjson
from .verification import ks_one_sample, ks_two_sample

logger = logging.getLogger(__name__)

CROSSCHECK_ANCHOR = "skewer of X at tau_X(2^(1-d) u) has the law of beta^y of (R, H) at tau_(R,H)(u)"


@dataclass
class Excursion:
    """One excursion of R away from 0 on a grid; `heights` is H minus its value at the start."""
    times: np.ndarray
    values: np.ndarray
    heights: Optional[np.ndarray] = None

    @property
    def lifetime(self) -> float:
        return float(self.times[-1])

    @property
    def maximum(self) -> float:
        return float(self.values.max()) if self.values.size else 0.0

    def at(self, t):
        return np.interp(t, self.times, self.values, left=0.0, right=0.0)


def excursion_from_spindle(f: Spindle) -> Excursion:
    """e(t) = f(Z^-1(t)) / 2 with Z(z) = integral_0^z f. An all-zero spindle gives the empty excursion."""
    z = f.profile.times
    v = f.profile.values
    t = cumulative_trapezoid(v, z, initial=0.0)
    if t[-1] <= 0.0:
        return Excursion(np.zeros(1), np.zeros(1), np.zeros(1))
    # flat stretches of f at 0 collapse to a single time
    keep = np.r_[True, np.diff(t) > 0]
    return Excursion(times=t[keep], values=v[keep] / 2.0, heights=z[keep])


def spindle_from_excursion(e: Excursion) -> Spindle:
    """f(z) = 2 e(t) with z = (1/2) integral_0^t du / e(u).

    Segment i gets dz = dt / (e_i + e_(i+1)), which undoes the trapezoid rule
    of excursion_from_spindle node for node, end segments included.
    """
    t, v = np.asarray(e.times, dtype=float), np.asarray(e.values, dtype=float)
    if t.size < 4:
        raise ResolutionError(f"excursion has {t.size} grid points; need at least 4")
    if np.any(v[1:-1] <= 0):
        raise ResolutionError("excursion must be positive on its interior")
    z = np.concatenate(([0.0], np.cumsum(np.diff(t) / (v[1:] + v[:-1]))))
    values = 2.0 * v
    values[0] = values[-1] = 0.0
    return Spindle(zeta=float(z[-1]), profile=GridPath(z, values, step=float(np.min(np.diff(z)))))


def round_trip_error(f: Spindle, end_zone: float = ROUND_TRIP_END_ZONE) -> float:
    """Sup-norm error of spindle -> excursion -> spindle relative to max f, away from the end zones."""
    back = spindle_from_excursion(excursion_from_spindle(f))
    z = f.profile.times
    zone = (z >= end_zone * f.zeta) & (z <= (1.0 - end_zone) * f.zeta)
    scale = float(f.profile.values.max())
    if scale <= 0:
        return 0.0
    return float(np.max(np.abs(back.width_at(z[zone]) - f.profile.values[zone])) / scale)


@dataclass
class BesselPath:
    """(R, H) assembled from a scaffolding: one excursion of R per spindle, laid end to end in real time.

    With grid-sampled spindles each excursion carries its grid in CSR form
    (times and heights relative to the excursion start). Otherwise only
    lifetimes are known (nan when no area was drawn) and level quantities
    are read from the spindles of `source`.
    """
    d: float
    start: np.ndarray
    lifetime: np.ndarray
    h_pre: np.ndarray
    h_span: np.ndarray
    rows: np.ndarray
    source: MarkedScaffolding
    indptr: Optional[np.ndarray] = None
    times: Optional[np.ndarray] = None
    values: Optional[np.ndarray] = None
    heights: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return int(self.start.size)

    @property
    def has_grid(self) -> bool:
        return self.times is not None

    @property
    def end_time(self) -> float:
        return float(self.lifetime.sum()) if self.n else 0.0

    def excursion(self, i: int) -> Excursion:
        if not self.has_grid:
            raise ParameterDomainError("excursion grids need grid-sampled spindles")
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return Excursion(self.times[lo:hi], self.values[lo:hi], self.heights[lo:hi])

    def origin_times(self) -> np.ndarray:
        """Real times at which (R, H) is at (0, 0): the images of the zeros of X."""
        X = self.source
        zero_times, zero_counts = X.zeros()
        per_event = np.zeros(X.event_times.size)
        per_event[X.spindle_event[self.rows]] = self.lifetime
        cum = np.concatenate(([0.0], np.cumsum(per_event)))
        return cum[zero_counts]


def build_R_H_from_scaffolding(X: MarkedScaffolding, stream: Optional[RngStream] = None) -> BesselPath:
    """Exact (R, H) from a scaffolding started at 0.

    Excursion i starts at real time tau(s_i-) = sum of earlier excursion
    lifetimes, with H(tau(s_i-)) = X(s_i-), and H rises by z while the
    spindle is read from offset 0 to z. Without grid spindles, lifetimes are
    spindle areas drawn from `stream`, or nan when no stream is given.
    """
    if X.initial_level != 0.0 or X.has_initial_spindle:
        raise ParameterDomainError("(R, H) is built from a scaffolding started at 0 without an initial spindle")
    table = X.spindles
    rows = np.arange(table.n)
    d = 1.0 - X.alpha
    path = dict(d=d, h_pre=X.spindle_pre.copy(), h_span=table.zeta.copy(), rows=rows, source=X)
    if table.mode == "grid":
        off, val, ptr = table.offsets, table.values, table.indptr
        seg = 0.5 * np.diff(off) * (val[1:] + val[:-1]) if off.size else np.zeros(0)
        if table.n > 1:
            seg[ptr[1:-1] - 1] = 0.0
        cum = np.concatenate(([0.0], np.cumsum(seg)))
        row_of = np.repeat(rows, np.diff(ptr))
        times = cum - cum[ptr[:-1]][row_of]
        lifetime = times[ptr[1:] - 1] if table.n else np.zeros(0)
        path.update(indptr=ptr, times=times, values=np.clip(val, 0.0, None) / 2.0, heights=off.copy())
    elif stream is not None:
        lifetime = spindle_area(stream, table.zeta, X.alpha)
    else:
        lifetime = np.full(table.n, np.nan)
    start = np.concatenate(([0.0], np.cumsum(lifetime)[:-1])) if table.n else np.zeros(0)
    return BesselPath(start=start, lifetime=lifetime, **path)


def sample_bessel_path(stream: RngStream, alpha: float, eps: float, u: float,
                       grid_points: int = SPINDLE_GRID_POINTS, y_calib: float = 1.0,
                       horizon: float = DEFAULT_HORIZON) -> BesselPath:
    """(R, H) run to the inverse local time u at (0, 0).

    The local time counts excursions whose H-infimum is below -y_calib;
    spindles lying wholly below that floor are not generated.
    """
    X = stop_at_local_time(stream, alpha, eps, u, rule="inf", y_calib=y_calib, spindles="grid",
                           horizon=horizon, grid_points=grid_points)
    return build_R_H_from_scaffolding(X)


def compute_H_direct(times: np.ndarray, R: np.ndarray, d: float, bandwidth: float = 0.05,
                     level_grid: Optional[np.ndarray] = None, baseline_zero: bool = False) -> np.ndarray:
    """Estimate H(t) = (1/2) integral_0^inf a^(d-2) (L^a(t) - L^0(t)) da from a grid path of R.

    Occupation times in geometric level bins of relative width `bandwidth`
    give local times L^a = occupation / (a^(d-1) da). The L^a part of the
    integral reduces to (1/2) integral du / R; L^0 is the mean local time of
    the three lowest bins, or 0 with baseline_zero (a single excursion).
    """
    d = check_real("d", d, low=0.0, high=1.0, low_open=True, high_open=True)
    bandwidth = check_real("bandwidth", bandwidth, low=0.0, low_open=True)
    t = np.asarray(times, dtype=float)
    r = np.asarray(R, dtype=float)
    if t.shape != r.shape or t.size < 2:
        raise ParameterDomainError("times and R must be matching grids of at least two points")
    dt = np.diff(t)
    mid = 0.5 * (r[1:] + r[:-1])
    positive = mid > 0
    if not positive.any():
        return np.zeros(t.size)

    if level_grid is None:
        lo, hi = float(mid[positive].min()), float(mid.max())
        n_bins = max(3, int(math.ceil(math.log(hi / lo) / math.log1p(bandwidth))))
        edges = lo * (1.0 + bandwidth) ** np.arange(n_bins + 1)
    else:
        edges = np.asarray(level_grid, dtype=float)
        if edges.size < 4 or edges[0] <= 0 or np.any(np.diff(edges) <= 0):
            raise ParameterDomainError("level grid needs at least three increasing positive bins")
    resolved = mid >= edges[0]
    bins = np.clip(np.searchsorted(edges, mid, side="right") - 1, 0, edges.size - 2)
    counts = np.bincount(bins[resolved], minlength=edges.size - 1)
    occupied = counts[counts > 0]
    if occupied.size == 0 or np.median(occupied) < MIN_SAMPLES_PER_BIN:
        raise ResolutionError(f"median {np.median(occupied) if occupied.size else 0:.1f} samples per level bin; "
                              f"refine the grid or widen the bandwidth")

    # levels below the lowest edge are treated as level 0
    inv = np.where(resolved, dt / np.where(resolved, mid, 1.0), 0.0)
    direct = 0.5 * np.concatenate(([0.0], np.cumsum(inv)))
    if baseline_zero:
        return direct
    width = np.diff(edges)
    rep = np.sqrt(edges[:-1] * edges[1:])
    low = resolved & (bins < 3)
    local = np.where(low, dt / (rep[bins] ** (d - 1.0) * width[bins]), 0.0) / 3.0
    L0 = np.concatenate(([0.0], np.cumsum(local)))
    S = edges[0] ** (d - 1.0) / (1.0 - d)
    return direct - 0.5 * L0 * S


@dataclass
class LevelLocalTime:
    """lambda^y as a pure-jump process: jumps 2R at the real times where H = y."""
    level: float
    times: np.ndarray
    jumps: np.ndarray

    def at(self, t) -> np.ndarray:
        cum = np.concatenate(([0.0], np.cumsum(self.jumps)))
        return cum[np.searchsorted(self.times, np.asarray(t, dtype=float), side="right")]

    @property
    def total(self) -> float:
        return float(self.jumps.sum())


def level_local_time(path: BesselPath, y: float, T: Optional[float] = None) -> LevelLocalTime:
    """Each excursion whose H-range straddles y adds the spindle width at y.

    Jump times are exact with grid spindles; otherwise the excursion start
    stands in for the crossing time.
    """
    y = check_real("y", y)
    mask = (path.h_pre <= y) & (y < path.h_pre + path.h_span)
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return LevelLocalTime(y, np.zeros(0), np.zeros(0))
    widths = path.source.spindle_width(path.rows[idx], y - path.h_pre[idx])
    if path.has_grid:
        offsets = np.array([
            np.interp(y - path.h_pre[i], path.heights[path.indptr[i]:path.indptr[i + 1]],
                      path.times[path.indptr[i]:path.indptr[i + 1]])
            for i in idx
        ])
        times = path.start[idx] + offsets
    else:
        times = path.start[idx]
    keep = widths > 0
    if T is not None:
        keep &= times <= T
    return LevelLocalTime(y, times[keep], widths[keep])


def beta_from_bessel(path: BesselPath, y: float, T: Optional[float] = None) -> IntervalPartition:
    """beta^y: the jumps of lambda^y in time order as blocks."""
    llt = level_local_time(path, y, T)
    return IntervalPartition(llt.jumps, llt.total)


def brownian_residual_qv(path: BesselPath) -> Tuple[float, float]:
    """(elapsed time, quadratic variation) of R + (1 - d) H over the excursion grids.

    Increments are taken within excursions only; the downward jumps of H
    across the zero set carry no Brownian part.
    """
    if not path.has_grid:
        raise ParameterDomainError("the residual needs grid-sampled spindles")
    if path.n == 0:
        return 0.0, 0.0
    B = path.values + (1.0 - path.d) * path.heights
    inc = np.diff(B)
    within = np.ones(inc.size, dtype=bool)
    if path.n > 1:
        within[path.indptr[1:-1] - 1] = False
    return float(path.lifetime.sum()), float(np.sum(inc[within] ** 2))


def residual_qv_slope(pairs: Sequence[Tuple[float, float]]) -> float:
    """Least-squares slope through the origin of quadratic variation against elapsed time."""
    el = np.array([p[0] for p in pairs])
    qv = np.array([p[1] for p in pairs])
    denom = float(np.sum(el * el))
    if denom <= 0:
        raise ResolutionError("no elapsed time to regress on")
    return float(np.sum(el * qv) / denom)


def residual_qv_slope_se(pairs: Sequence[Tuple[float, float]]) -> float:
    """Standard error of residual_qv_slope from the scatter about the fitted line; nan below two pairs."""
    slope = residual_qv_slope(pairs)
    if len(pairs) < 2:
        return math.nan
    el = np.array([p[0] for p in pairs])
    qv = np.array([p[1] for p in pairs])
    scatter = float(np.sum((qv - slope * el) ** 2)) / (len(pairs) - 1)
    return math.sqrt(scatter / float(np.sum(el * el)))


def excursion_maxima(path: BesselPath) -> np.ndarray:
    if not path.has_grid:
        raise ParameterDomainError("excursion maxima need grid-sampled spindles")
    if path.n == 0:
        return np.zeros(0)
    return np.maximum.reduceat(path.values, path.indptr[:-1])


def conditional_maximum_cdf(d: float):
    """CDF of max / m given max > m: P(max > a m | max > m) = a^-(2 - d)."""
    return lambda a: 1.0 - np.asarray(a, dtype=float) ** (-(2.0 - d))


def excursion_maxima_test(maxima: np.ndarray, m: float, d: float) -> TestReport:
    start = time.perf_counter()
    tail = np.asarray(maxima, dtype=float)
    tail = tail[tail > m] / m
    stat, p = ks_one_sample(tail, conditional_maximum_cdf(d))
    return TestReport(
        name="bessel-excursion-maxima", anchor="scale function x^(2-d) of BES(d) excursion maxima",
        sample_sizes=[int(tail.size)], statistic=stat, p_value=p, passed=bool(p > KS_ALPHA),
        tolerance=f"p > {KS_ALPHA:g}", runtime_seconds=time.perf_counter() - start,
        metadata={"threshold": m, "d": d},
    )


def rh_excursion_durations(X: MarkedScaffolding, stream: RngStream, n_grid: int = SPINDLE_GRID_POINTS) -> np.ndarray:
    """Real-time lengths of the excursions of (R, H) away from (0, 0): spindle areas summed per completed cycle of X."""
    zero_times, zero_counts = X.zeros()
    if zero_times.size < 2:
        return np.zeros(0)
    areas = spindle_area(stream, X.spindle_zeta, X.alpha, n_grid=n_grid)
    cycles = cycle_ids(X, zero_counts)[X.spindle_event]
    n_complete = zero_times.size - 1
    keep = (cycles >= 0) & (cycles < n_complete)
    return np.bincount(cycles[keep], weights=areas[keep], minlength=n_complete)


def rh_local_time_increments(path: BesselPath, y: float = 0.0) -> np.ndarray:
    """lambda^y gained over each completed excursion of (R, H) away from (0, 0)."""
    origins = path.origin_times()
    if origins.size < 2:
        return np.zeros(0)
    lt = level_local_time(path, y)
    excursion = np.searchsorted(origins, lt.times, side="right") - 1
    keep = (excursion >= 0) & (excursion < origins.size - 1)
    return np.bincount(excursion[keep], weights=lt.jumps[keep], minlength=origins.size - 1)


def lambda_minus_profile(stream: RngStream, alpha: float, eps: float, levels: Sequence[float],
                         horizon: float = DEFAULT_HORIZON) -> np.ndarray:
    """lambda^(-1+y)(T_H(-1)) at levels y in [0, 1]; a BESQ_0(2 - 2d) profile in y.

    By translation this is the type-0 skewer from u = 1.
    """
    return np.array([p.total_mass for p in type0_skewer_run(stream, 1.0, levels, alpha, eps, horizon=horizon)])


def excursion_records(path: BesselPath) -> List[Dict[str, Any]]:
    records = []
    for i in range(path.n):
        rec = {"start": path.start[i], "lifetime": path.lifetime[i], "h_pre": path.h_pre[i], "h_span": path.h_span[i]}
        if path.has_grid:
            exc = path.excursion(i)
            rec.update(times=exc.times, values=exc.values, heights=exc.heights)
        records.append(rec)
    return records


def dump_excursions_ndjson(path: BesselPath, file: Path, params: Optional[Dict[str, Any]] = None) -> Path:
    header = {"kind": "bessel_path", "d": path.d, "excursions": path.n, "end_time": path.end_time,
              "params": params or {}}
    return write_ndjson(file, [header] + excursion_records(path))


def _skewer_side(stream: RngStream, horizon: float, alpha: float, eps: float, v: float, rule: str,
                 levels: np.ndarray, y_calib: float, via_bessel: bool) -> List[IntervalPartition]:
    X = stop_at_local_time(stream, alpha, eps, v, rule=rule, y_calib=y_calib, levels=levels,
                           spindles="levels", horizon=horizon)
    if not via_bessel:
        return skewer_levels(X, levels)
    path = build_R_H_from_scaffolding(X)
    return [beta_from_bessel(path, float(y)) for y in levels]


def crosscheck_constructions(stream: RngStream, alpha: float, u: float, levels: Sequence[float], eps: float,
                           replicates: int, threads: int = 1, horizon: float = DEFAULT_HORIZON,
                           drop_constant: bool = False, y_calib: Optional[float] = None) -> TestReport:
    """Skewer of X stopped at tau_X(2^(1-d) u) against beta^y of (R, H) stopped at tau_(R,H)(u).

    Compared level by level with two-sample KS on total mass and on pooled
    blocks above 10 eps. drop_constant stops the scaffolding side at u.
    """
    start = time.perf_counter()
    u = check_real("u", u, low=0.0)
    lv = np.asarray(levels, dtype=float)
    d = 1.0 - alpha
    if u == 0.0:
        return TestReport(name="crosscheck", anchor=CROSSCHECK_ANCHOR, sample_sizes=[0, 0], statistic=0.0,
                          p_value=1.0, passed=True, tolerance="both sides empty",
                          metadata={"u": 0.0, "vacuous": True})
    y_calib = default_y_calib(list(lv)) if y_calib is None else y_calib
    v = u if drop_constant else 2.0 ** (1.0 - d) * u
    side_a, side_b = stream.spawn(2)
    common = dict(alpha=alpha, eps=eps, levels=lv, y_calib=y_calib)
    runs_a = run_replicates(partial(_skewer_side, v=v, rule="sup", via_bessel=False, **common),
                            side_a.spawn(replicates), threads, horizon, label="crosscheck scaffolding side")
    runs_b = run_replicates(partial(_skewer_side, v=u, rule="inf", via_bessel=True, **common),
                            side_b.spawn(replicates), threads, horizon, label="crosscheck Bessel side")

    per_level, p_values, stats = [], [], []
    threshold = 10.0 * eps
    for j, y in enumerate(lv):
        mass_a = np.array([r[j].total_mass for r in runs_a])
        mass_b = np.array([r[j].total_mass for r in runs_b])
        stat, p = ks_two_sample(mass_a, mass_b)
        entry = {"level": float(y), "mass_ks": stat, "mass_p": p,
                 "mass_mean_a": float(mass_a.mean()), "mass_mean_b": float(mass_b.mean())}
        p_values.append(p)
        stats.append(stat)
        blocks_a = np.concatenate([r[j].blocks for r in runs_a])
        blocks_b = np.concatenate([r[j].blocks for r in runs_b])
        blocks_a, blocks_b = blocks_a[blocks_a > threshold], blocks_b[blocks_b > threshold]
        if min(blocks_a.size, blocks_b.size) >= KS_MIN_SIZE:
            bstat, bp = ks_two_sample(blocks_a, blocks_b)
            entry.update(block_ks=bstat, block_p=bp)
            p_values.append(bp)
            stats.append(bstat)
        else:
            logger.warning(f"⚠️ too few blocks above {threshold:g} at level {y:g} for a KS test "
                           f"({blocks_a.size} vs {blocks_b.size})")
        per_level.append(entry)
        log_detail("📊", f"level {y:g}", f"mass means {entry['mass_mean_a']:.4g} vs "
                                          f"{entry['mass_mean_b']:.4g}, p={p:.3g}")
    p_min = float(min(p_values))
    return TestReport(
        name="crosscheck-drop-constant" if drop_constant else "crosscheck", anchor=CROSSCHECK_ANCHOR,
        sample_sizes=[replicates, replicates], statistic=float(max(stats)), p_value=p_min,
        passed=bool(p_min > KS_ALPHA), tolerance=f"every p > {KS_ALPHA:g}",
        runtime_seconds=time.perf_counter() - start,
        metadata={"u": u, "v_scaffolding": v, "d": d, "y_calib": y_calib, "drop_constant": drop_constant,
                  "levels": per_level},
    )

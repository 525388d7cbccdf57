"""Marked stable scaffolding: spindle-marked jumps, clades, stitching and stopping rules."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .besq import GridPath, Spindle, besq_bridge_at, besq_hitting_time_zero, spindle_grid
from .config import DEFAULT_HORIZON, DEFAULT_Y_CALIB_FRACTION, MIN_RESOLVABLE_RATIO, SPINDLE_GRID_POINTS
from .levy import (  # noqa: F401  re-exported as part of the scaffolding API
    compensating_drift,
    laplace_exponent,
    levy_constant,
    levy_jump_rate,
    levy_tail,
    sample_ascent,
    small_jump_variance,
    sup_excursion_rate,
    inf_excursion_rate,
)
from .models import HorizonExhausted, ParameterDomainError, check_real
from .rng import RngStream, sample_gamma, sample_noncentral_chisq
from .skewer import IntervalPartition, skewer_levels
from .utils import write_ndjson
from .walker import CEILING, JUMP, StopRule, WalkResult, walk

logger = logging.getLogger(__name__)

SPINDLE_MODES = ("levels", "grid", "none")


def _spindle_dimension(alpha: float) -> float:
    return 4.0 + 2.0 * alpha


@dataclass
class SpindleTable:
    """Spindles stored row-wise in compressed form.

    Row i holds sorted offsets above the spindle's base (always including 0
    and zeta[i]) and the spindle's values there. In "levels" mode the
    interior offsets are exactly the observed levels the spindle straddles;
    in "grid" mode they form a grid over the whole lifetime; in "none" mode
    only lifetimes are known.
    """
    zeta: np.ndarray
    indptr: np.ndarray
    offsets: np.ndarray
    values: np.ndarray
    mode: str = "grid"
    levels: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return int(self.zeta.size)

    @classmethod
    def empty(cls, mode: str = "grid", levels: Optional[np.ndarray] = None) -> "SpindleTable":
        return cls(np.zeros(0), np.zeros(1, dtype=np.int64), np.zeros(0), np.zeros(0), mode, levels)

    @classmethod
    def concat(cls, tables: Sequence["SpindleTable"]) -> "SpindleTable":
        tables = [t for t in tables if t is not None]
        if not tables:
            return cls.empty()
        modes = {t.mode for t in tables if t.n}
        if len(modes) > 1:
            raise ParameterDomainError("cannot mix spindle modes in one table")
        mode = modes.pop() if modes else tables[0].mode
        starts = np.cumsum([0] + [t.offsets.size for t in tables[:-1]])
        indptr = np.concatenate([[0]] + [t.indptr[1:] + s for t, s in zip(tables, starts)])
        return cls(
            zeta=np.concatenate([t.zeta for t in tables]),
            indptr=indptr.astype(np.int64),
            offsets=np.concatenate([t.offsets for t in tables]),
            values=np.concatenate([t.values for t in tables]),
            mode=mode,
            levels=tables[0].levels,
        )

    def row(self, i: int) -> Tuple[np.ndarray, np.ndarray]:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.offsets[lo:hi], self.values[lo:hi]

    def width_at(self, rows: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Linear interpolation of each row at its own offset; zero outside [0, zeta]."""
        if self.mode == "none":
            raise ParameterDomainError("spindle values were not sampled (mode 'none')")
        rows = np.asarray(rows, dtype=np.int64)
        z = np.asarray(z, dtype=float)
        out = np.zeros(rows.shape)
        inside = (z >= 0) & (z <= self.zeta[rows])
        if not inside.any():
            return out
        r, q = rows[inside], z[inside]
        lo = self.indptr[r].copy()
        hi = self.indptr[r + 1] - 1
        # vectorized binary search for the last node at or below q within each row
        while True:
            active = hi - lo > 1
            if not active.any():
                break
            mid = (lo + hi) // 2
            go_right = active & (self.offsets[mid] <= q)
            go_left = active & ~go_right
            lo = np.where(go_right, mid, lo)
            hi = np.where(go_left, mid, hi)
        x0, x1 = self.offsets[lo], self.offsets[hi]
        v0, v1 = self.values[lo], self.values[hi]
        span = x1 - x0
        frac = np.where(span > 0, (q - x0) / np.where(span > 0, span, 1.0), 0.0)
        frac = np.where(q >= x1, 1.0, frac)
        out[inside] = v0 + frac * (v1 - v0)
        return out

    def to_spindle(self, i: int) -> Spindle:
        offsets, values = self.row(i)
        if self.mode != "grid":
            raise ParameterDomainError("only grid-sampled spindles can be exported as paths")
        step = float(np.min(np.diff(offsets)))
        return Spindle(zeta=float(self.zeta[i]), profile=GridPath(offsets, np.clip(values, 0.0, None), step=step))

    def areas(self) -> np.ndarray:
        """Integral of each row; exact quadrature of the sampled grid in "grid" mode."""
        if self.mode != "grid":
            raise ParameterDomainError("spindle areas need grid-sampled spindles")
        seg = 0.5 * np.diff(self.offsets) * (self.values[1:] + self.values[:-1])
        # segments crossing a row boundary are discarded
        valid = np.ones(seg.size, dtype=bool)
        valid[self.indptr[1:-1] - 1] = False
        row_of_seg = np.repeat(np.arange(self.n), np.diff(self.indptr))[:-1] if self.n else np.zeros(0, dtype=int)
        return np.bincount(row_of_seg[valid], weights=seg[valid], minlength=self.n)


def _bridge_at_levels(stream: RngStream, starts: np.ndarray, zetas: np.ndarray, rel: np.ndarray,
                      inside: np.ndarray, delta: float) -> np.ndarray:
    """Exact BESQ(delta) bridge values from starts[i] to 0 over [0, zetas[i]] at offsets rel[i, inside[i]].

    Offsets along each row are increasing, so one exact transition per
    level column advances every row that is still inside its lifetime.
    """
    n, m = rel.shape
    out = np.zeros((n, m))
    y_prev = starts.astype(float).copy()
    s_prev = np.zeros(n)
    for k in range(m):
        act = np.flatnonzero(inside[:, k])
        if act.size == 0:
            continue
        t = rel[act, k]
        zeta = zetas[act]
        s = t * zeta / (zeta - t)
        ds = s - s_prev[act]
        y = ds * np.atleast_1d(sample_noncentral_chisq(stream, delta, y_prev[act] / ds))
        y_prev[act] = y
        s_prev[act] = s
        out[act, k] = (1.0 - t / zeta) ** 2 * y
    return out


def sample_spindle_table(stream: RngStream, alpha: float, zetas: np.ndarray, pres: np.ndarray,
                         mode: str = "levels", levels: Optional[Sequence[float]] = None,
                         starts: Optional[np.ndarray] = None, dt: Optional[float] = None,
                         grid_points: int = SPINDLE_GRID_POINTS) -> SpindleTable:
    """Sample spindles of the given lifetimes and bases.

    starts gives each row's value at offset 0 (0 for spindles marking jumps,
    the block mass for the initial spindle of a clade).
    """
    if mode not in SPINDLE_MODES:
        raise ParameterDomainError(f"unknown spindle mode {mode!r}")
    zetas = np.asarray(zetas, dtype=float)
    pres = np.asarray(pres, dtype=float)
    n = zetas.size
    starts = np.zeros(n) if starts is None else np.asarray(starts, dtype=float)
    lv = None if levels is None else np.asarray(levels, dtype=float)
    if n == 0:
        return SpindleTable.empty(mode, lv)
    delta = _spindle_dimension(alpha)

    if mode == "none":
        offsets = np.stack([np.zeros(n), zetas], axis=1).reshape(-1)
        values = np.stack([starts, np.zeros(n)], axis=1).reshape(-1)
        return SpindleTable(zetas, 2 * np.arange(n + 1, dtype=np.int64), offsets, values, mode, lv)

    if mode == "levels":
        if lv is None:
            raise ParameterDomainError("levels mode needs the observed levels")
        rel = lv[None, :] - pres[:, None]
        inside = (rel > 0) & (rel < zetas[:, None])
        interior = _bridge_at_levels(stream, starts, zetas, rel, inside, delta)
        full_off = np.concatenate([np.zeros((n, 1)), np.where(inside, rel, np.nan), zetas[:, None]], axis=1)
        full_val = np.concatenate([starts[:, None], interior, np.zeros((n, 1))], axis=1)
        valid = ~np.isnan(full_off)
        indptr = np.concatenate(([0], np.cumsum(valid.sum(axis=1)))).astype(np.int64)
        return SpindleTable(zetas, indptr, full_off[valid], full_val[valid], mode, lv)

    # grid mode
    if dt is None and not np.any(starts):
        unit = np.linspace(0.0, 1.0, grid_points + 1)
        shape = besq_bridge_at(stream, 0.0, 1.0, delta, unit, size=n)
        shape[1:-1] = np.maximum(shape[1:-1], np.finfo(float).tiny)
        offsets = (zetas[:, None] * unit[None, :]).reshape(-1)
        values = (zetas[:, None] * shape.T).reshape(-1)
        indptr = (grid_points + 1) * np.arange(n + 1, dtype=np.int64)
        return SpindleTable(zetas, indptr, offsets, values, mode, lv)
    rows_off, rows_val = [], []
    for zeta, start in zip(zetas, starts):
        step = dt if dt is not None and dt < zeta else zeta / grid_points
        times = spindle_grid(float(zeta), step)
        vals = besq_bridge_at(stream, float(start), float(zeta), delta, times)
        vals[1:-1] = np.maximum(vals[1:-1], np.finfo(float).tiny)
        rows_off.append(times)
        rows_val.append(vals)
    indptr = np.concatenate(([0], np.cumsum([r.size for r in rows_off]))).astype(np.int64)
    return SpindleTable(zetas, indptr, np.concatenate(rows_off), np.concatenate(rows_val), mode, lv)


@dataclass
class MarkedScaffolding:
    """Scaffolding path with its spindle-marked jumps.

    Events are columnar: time, kind (JUMP, RESET or CEILING), level just
    before and just after. Reset events stand for pruned path stretches and
    carry no spindle; the level stored before a CEILING reset is a drift
    extrapolation, not a level the path visited.
    X(s) = initial_level + drift * s + sum of (post - pre) over events at or
    before s. Spindle rows are in time order; an initial
    spindle, if present, is row 0 at time 0 with base initial_level - zeta.
    """
    alpha: float
    eps: float
    drift: float
    initial_level: float
    horizon: float
    event_times: np.ndarray
    event_kind: np.ndarray
    event_pre: np.ndarray
    event_post: np.ndarray
    spindle_times: np.ndarray
    spindle_pre: np.ndarray
    spindle_event: np.ndarray
    spindles: SpindleTable
    end_level: float
    stop_reason: str = "horizon"
    has_initial_spindle: bool = False
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def spindle_zeta(self) -> np.ndarray:
        return self.spindles.zeta

    @property
    def spindle_post(self) -> np.ndarray:
        return self.spindle_pre + self.spindles.zeta

    @property
    def jump_mask(self) -> np.ndarray:
        return self.event_kind == JUMP

    @property
    def jump_times(self) -> np.ndarray:
        return self.event_times[self.jump_mask]

    @property
    def jump_sizes(self) -> np.ndarray:
        m = self.jump_mask
        return self.event_post[m] - self.event_pre[m]

    @property
    def n_jumps(self) -> int:
        return int(self.jump_mask.sum())

    def spindle_width(self, rows: np.ndarray, z: np.ndarray) -> np.ndarray:
        if self.spindles.mode == "levels":
            y = self.spindle_pre[rows] + z
            lv = self.spindles.levels
            near = np.isclose(y[:, None], lv[None, :], rtol=1e-12, atol=1e-12).any(axis=1) if lv.size else np.zeros(y.size, bool)
            if not np.all(near):
                raise ParameterDomainError("level was not among the levels the spindles were sampled at")
        return self.spindles.width_at(rows, z)

    def level_at(self, s) -> np.ndarray:
        """Reconstruct X at the given times from drift and event deltas."""
        s = np.asarray(s, dtype=float)
        cum = np.concatenate(([0.0], np.cumsum(self.event_post - self.event_pre)))
        idx = np.searchsorted(self.event_times, s, side="right")
        return self.initial_level + self.drift * s + cum[idx]

    def reconstruction_error(self) -> float:
        """Largest gap between the reconstructed path and the stored post-event levels, relative to the path scale."""
        if self.event_times.size == 0:
            return 0.0
        recon = self.level_at(self.event_times)
        # several events may share a time (floor resets); compare the last one at each time
        last = np.r_[self.event_times[1:] != self.event_times[:-1], True]
        scale = max(1.0, float(np.max(np.abs(self.event_post))))
        return float(np.max(np.abs(recon[last] - self.event_post[last])) / scale)

    def drift_segments(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Start level, end level and start time of each drift segment, and whether it was simulated.

        Segment k ends at event k; the last one ends at the stop.
        """
        starts = np.concatenate(([self.initial_level], self.event_post))
        ends = np.concatenate((self.event_pre, [self.end_level]))
        t0 = np.concatenate(([0.0], self.event_times))
        simulated = np.concatenate((self.event_kind != CEILING, [True]))
        return starts, ends, t0, simulated

    def zeros(self) -> Tuple[np.ndarray, np.ndarray]:
        """Downward crossings of 0 (the zero set of the eps-process) and the number of events before each.

        Time 0 counts as a zero when the path starts at 0.
        """
        speed = -self.drift
        starts, ends, t0, simulated = self.drift_segments()
        cross = simulated & (starts > 0.0) & (ends <= 0.0)
        idx = np.flatnonzero(cross)
        times = t0[idx] + starts[idx] / speed
        counts = idx.astype(np.int64)
        if self.initial_level == 0.0 and not self.has_initial_spindle:
            times = np.concatenate(([0.0], times))
            counts = np.concatenate(([0], counts))
        return times, counts


@dataclass
class Clade(MarkedScaffolding):
    """Scaffolding started at the lifetime of an initial spindle and run to its first passage of 0."""
    block_mass: float = 0.0

    @property
    def initial_spindle_lifetime(self) -> float:
        return float(self.spindles.zeta[0])


def _assemble(stream: RngStream, result: WalkResult, mode: str, levels: Optional[Sequence[float]],
              dt: Optional[float], grid_points: int, initial: Optional[Tuple[float, float]] = None,
              cls=MarkedScaffolding, **extra) -> MarkedScaffolding:
    """Attach spindles to the jumps of a walk. initial = (start mass, lifetime) adds an initial spindle."""
    jump = result.event_kind == JUMP
    jump_idx = np.flatnonzero(jump)
    zetas = result.event_post[jump] - result.event_pre[jump]
    pres = result.event_pre[jump]
    times = result.event_times[jump]
    starts = np.zeros(zetas.size)
    has_initial = initial is not None
    if has_initial:
        start, zeta0 = initial
        zetas = np.concatenate(([zeta0], zetas))
        pres = np.concatenate(([result.x0 - zeta0], pres))
        times = np.concatenate(([0.0], times))
        starts = np.concatenate(([start], starts))
        jump_idx = np.concatenate(([-1], jump_idx))
    table = sample_spindle_table(stream, result.alpha, zetas, pres, mode=mode, levels=levels,
                                 starts=starts, dt=dt, grid_points=grid_points)
    meta = dict(result.meta)
    meta["stop_reason"] = result.stop_reason
    return cls(
        alpha=result.alpha, eps=result.eps, drift=result.drift, initial_level=result.x0,
        horizon=result.end_time, event_times=result.event_times, event_kind=result.event_kind,
        event_pre=result.event_pre, event_post=result.event_post, spindle_times=times,
        spindle_pre=pres, spindle_event=jump_idx.astype(np.int64), spindles=table,
        end_level=result.end_level, stop_reason=result.stop_reason, has_initial_spindle=has_initial,
        meta=meta, **extra,
    )


def _levels_array(levels: Optional[Sequence[float]]) -> Optional[np.ndarray]:
    if levels is None:
        return None
    lv = np.asarray(levels, dtype=float)
    if lv.ndim != 1 or not np.all(np.isfinite(lv)) or np.any(np.diff(lv) <= 0):
        raise ParameterDomainError("levels must be finite and strictly increasing")
    return lv


def sample_marked_scaffolding(stream: RngStream, alpha: float, eps: float, horizon: float,
                              dt: Optional[float] = None, x0: float = 0.0, spindles: str = "grid",
                              levels: Optional[Sequence[float]] = None,
                              grid_points: int = SPINDLE_GRID_POINTS) -> MarkedScaffolding:
    """Scaffolding over [0, horizon]: eps-truncated jump PRM with BESQ(4 + 2 alpha) bridge spindles."""
    walk_stream, spindle_stream = stream.spawn(2)
    result = walk(walk_stream, alpha, eps, StopRule("horizon"), x0=x0, horizon=horizon)
    X = _assemble(spindle_stream, result, spindles, _levels_array(levels), dt, grid_points)
    if X.meta.get("sparse_jumps"):
        logger.warning(f"⚠️ eps={eps} leaves fewer than one expected jump over horizon {horizon}")
    return X


def first_passage(X: MarkedScaffolding, level: float) -> float:
    """Exact first time X is at or below `level`; passage always happens on a drift segment."""
    level = check_real("level", level)
    if X.initial_level <= level:
        return 0.0
    speed = -X.drift
    starts, ends, t0, simulated = X.drift_segments()
    hit = np.flatnonzero(simulated & (ends <= level) & (starts > level))
    if hit.size == 0:
        raise HorizonExhausted(f"no passage below {level} within horizon {X.horizon}", partial=X)
    k = hit[0]
    return float(t0[k] + (starts[k] - level) / speed)


def clade_from_block(stream: RngStream, b: float, alpha: float, eps: float, dt: Optional[float] = None,
                     levels: Optional[Sequence[float]] = None, spindles: str = "levels",
                     horizon: float = DEFAULT_HORIZON, grid_points: int = SPINDLE_GRID_POINTS) -> Clade:
    """Clade of a block of mass b: BESQ_b(-2 alpha) initial spindle, then the scaffolding to level 0.

    With levels given, path stretches above the highest level are pruned.
    """
    b = check_real("b", b, low=0.0, low_open=True)
    lv = _levels_array(levels)
    zeta_stream, walk_stream, spindle_stream = stream.spawn(3)
    zeta0 = float(besq_hitting_time_zero(zeta_stream, b, alpha))
    ceiling = float(lv[-1]) if lv is not None and lv.size and spindles == "levels" else None
    if ceiling is not None and ceiling <= 0.0:
        ceiling = None
    result = walk(walk_stream, alpha, eps, StopRule("below", level=0.0), x0=zeta0, horizon=horizon,
                  ceiling=ceiling)
    return _assemble(spindle_stream, result, spindles, lv, dt, grid_points, initial=(b, zeta0),
                     cls=Clade, block_mass=b)


def stitch(clades: Sequence[MarkedScaffolding]) -> MarkedScaffolding:
    """Concatenate clades in order; each initial spindle becomes a jump from level 0."""
    if not clades:
        raise ParameterDomainError("nothing to stitch")
    if len(clades) == 1 and not clades[0].has_initial_spindle:
        return clades[0]
    first = clades[0]
    times, kinds, pres, posts = [], [], [], []
    s_times, s_pre, s_event, tables = [], [], [], []
    offset, n_events = 0.0, 0
    for c in clades:
        if (c.alpha, c.eps) != (first.alpha, first.eps):
            raise ParameterDomainError("clades must share alpha and eps")
        ev_shift = 0
        if c.has_initial_spindle:
            times.append(np.array([offset]))
            kinds.append(np.array([JUMP], dtype=np.int8))
            pres.append(np.array([c.initial_level - c.spindles.zeta[0]]))
            posts.append(np.array([c.initial_level]))
            ev_shift = 1
        times.append(c.event_times + offset)
        kinds.append(c.event_kind)
        pres.append(c.event_pre)
        posts.append(c.event_post)
        # the initial spindle (event -1) maps onto the jump inserted at n_events
        ev = c.spindle_event + n_events + ev_shift
        s_times.append(c.spindle_times + offset)
        s_pre.append(c.spindle_pre)
        s_event.append(ev)
        tables.append(c.spindles)
        n_events += c.event_times.size + ev_shift
        offset += c.horizon
    start_level = first.initial_level - (first.spindles.zeta[0] if first.has_initial_spindle else 0.0)
    return MarkedScaffolding(
        alpha=first.alpha, eps=first.eps, drift=first.drift, initial_level=start_level, horizon=offset,
        event_times=np.concatenate(times), event_kind=np.concatenate(kinds),
        event_pre=np.concatenate(pres), event_post=np.concatenate(posts),
        spindle_times=np.concatenate(s_times), spindle_pre=np.concatenate(s_pre),
        spindle_event=np.concatenate(s_event), spindles=SpindleTable.concat(tables),
        end_level=clades[-1].end_level, stop_reason=clades[-1].stop_reason, has_initial_spindle=False,
        meta={"clades": len(clades)},
    )


@dataclass
class LocalTimeEstimate:
    """Counting estimate of the local time of X at 0.

    Steps by 1/rate at the end of every excursion whose supremum exceeds
    y_calib.
    """
    y_calib: float
    rate: float
    step_times: np.ndarray

    def at(self, t):
        return np.searchsorted(self.step_times, np.asarray(t, dtype=float), side="right") / self.rate

    @property
    def total(self) -> float:
        return self.step_times.size / self.rate

    def inverse(self, v: float) -> float:
        """First time the estimate exceeds v."""
        k = int(np.floor(v * self.rate))
        if k >= self.step_times.size:
            raise HorizonExhausted(f"local time {v} not reached; estimate ends at {self.total}")
        return float(self.step_times[k])


def cycle_ids(X: MarkedScaffolding, zero_counts: np.ndarray) -> np.ndarray:
    """Excursion index of each event: cycle c runs from zero c to zero c + 1."""
    return np.searchsorted(zero_counts, np.arange(X.event_times.size), side="right") - 1


def local_time_zero(X: MarkedScaffolding, y_calib: float) -> LocalTimeEstimate:
    y_calib = check_real("y_calib", y_calib, low=0.0, low_open=True)
    if X.initial_level != 0.0:
        raise ParameterDomainError("local time at 0 needs a scaffolding started at 0")
    if y_calib < MIN_RESOLVABLE_RATIO * X.eps:
        logger.warning(f"⚠️ y_calib={y_calib} is within {MIN_RESOLVABLE_RATIO} eps of the truncation")
    rate = float(sup_excursion_rate(y_calib, X.alpha))
    zero_times, zero_counts = X.zeros()
    cycles = cycle_ids(X, zero_counts)
    qualifying = np.unique(cycles[X.event_post > y_calib])
    # only completed excursions count
    qualifying = qualifying[qualifying + 1 < zero_times.size]
    return LocalTimeEstimate(y_calib=y_calib, rate=rate, step_times=zero_times[qualifying + 1])


def default_y_calib(levels: Optional[Sequence[float]]) -> float:
    positive = [y for y in (levels or []) if y > 0]
    return DEFAULT_Y_CALIB_FRACTION * min(positive) if positive else 1.0


def stop_at_local_time(stream: RngStream, alpha: float, eps: float, v: float, rule: str = "sup",
                       y_calib: Optional[float] = None, levels: Optional[Sequence[float]] = None,
                       spindles: str = "levels", interpolate: bool = True, floor: Optional[float] = None,
                       horizon: float = DEFAULT_HORIZON, dt: Optional[float] = None,
                       grid_points: int = SPINDLE_GRID_POINTS, prune: bool = True) -> MarkedScaffolding:
    """Scaffolding from 0 stopped at the inverse local time at 0 of v.

    The local time clock counts qualifying excursions: rule "sup" counts
    suprema above y_calib (rate 2^-alpha y^-alpha), rule "inf" counts infima
    below -y_calib (rate y^-alpha). Arrival local times of qualifying
    excursions are drawn as a Poisson process, and with interpolate the stop
    is placed among the excursions between the two arrivals around v.
    """
    v = check_real("v", v, low=0.0)
    lv = _levels_array(levels)
    y_calib = default_y_calib(list(lv) if lv is not None else None) if y_calib is None else y_calib
    y_calib = check_real("y_calib", y_calib, low=0.0, low_open=True)
    if y_calib < MIN_RESOLVABLE_RATIO * eps:
        logger.warning(f"⚠️ y_calib={y_calib} is within {MIN_RESOLVABLE_RATIO} eps of the truncation")
    if rule not in ("sup", "inf"):
        raise ParameterDomainError(f"unknown calibration rule {rule!r}")
    rate = float(sup_excursion_rate(y_calib, alpha) if rule == "sup" else inf_excursion_rate(y_calib, alpha))
    top = max([y_calib] + ([float(lv[-1])] if lv is not None and lv.size else []))
    ceiling = top if prune and spindles != "grid" else None
    if rule == "inf":
        floor = -y_calib
    elif floor is None and prune and spindles != "grid":
        floor = -top
    stop = StopRule("local_time", target=v, calib=rule, y_calib=y_calib, rate=rate, interpolate=interpolate)
    walk_stream, spindle_stream = stream.spawn(2)
    result = walk(walk_stream, alpha, eps, stop, x0=0.0, horizon=horizon, ceiling=ceiling, floor=floor)
    X = _assemble(spindle_stream, result, spindles, lv, dt, grid_points)
    X.meta.update({"local_time": v, "calibration": rule, "y_calib": y_calib, "calibration_rate": rate})
    return X


def run_cycles(stream: RngStream, alpha: float, eps: float, cycles: int,
               levels: Optional[Sequence[float]] = None, spindles: str = "none",
               ceiling: Optional[float] = None, floor: Optional[float] = None,
               horizon: float = DEFAULT_HORIZON, grid_points: int = SPINDLE_GRID_POINTS) -> MarkedScaffolding:
    """Scaffolding from 0 run through a fixed number of excursions away from 0."""
    walk_stream, spindle_stream = stream.spawn(2)
    result = walk(walk_stream, alpha, eps, StopRule("cycles", cycles=int(cycles)), x0=0.0, horizon=horizon,
                  ceiling=ceiling, floor=floor)
    return _assemble(spindle_stream, result, spindles, _levels_array(levels), None, grid_points)


def type1_skewer_run(stream: RngStream, beta0: IntervalPartition, levels: Sequence[float], alpha: float,
                     eps: float, dt: Optional[float] = None, horizon: float = DEFAULT_HORIZON,
                     spindles: str = "levels") -> List[IntervalPartition]:
    """Skewer at each level of the stitched clades of the blocks of beta0 (blocks below eps dropped)."""
    lv = _levels_array(levels)
    X = type1_scaffolding(stream, beta0, lv, alpha, eps, dt=dt, horizon=horizon, spindles=spindles)
    if X is None:
        return [IntervalPartition.empty() for _ in lv]
    return skewer_levels(X, lv)


def type1_scaffolding(stream: RngStream, beta0: IntervalPartition, levels: Sequence[float], alpha: float,
                      eps: float, dt: Optional[float] = None, horizon: float = DEFAULT_HORIZON,
                      spindles: str = "levels") -> Optional[MarkedScaffolding]:
    """Clades of the blocks of beta0 stitched in order; None when every block is below eps."""
    lv = _levels_array(levels)
    blocks = beta0.truncate(eps).blocks
    if blocks.size < beta0.count:
        logger.debug(f"dropped {beta0.count - blocks.size} initial blocks below eps={eps}")
    if blocks.size == 0:
        return None
    streams = stream.spawn(blocks.size)
    clades = [clade_from_block(s, float(b), alpha, eps, dt=dt, levels=lv, spindles=spindles, horizon=horizon)
              for s, b in zip(streams, blocks)]
    return stitch(clades)


def type0_skewer_run(stream: RngStream, u: float, levels: Sequence[float], alpha: float, eps: float,
                     dt: Optional[float] = None, horizon: float = DEFAULT_HORIZON,
                     spindles: str = "levels") -> List[IntervalPartition]:
    """Skewer of (N, u + X) with X stopped at its first passage of -u."""
    u = check_real("u", u, low=0.0, low_open=True)
    lv = _levels_array(levels)
    if lv.size and (lv[0] < 0 or lv[-1] > u):
        raise ParameterDomainError(f"type-0 levels must lie in [0, {u}]")
    X = type0_scaffolding(stream, u, lv, alpha, eps, dt=dt, horizon=horizon, spindles=spindles)
    return skewer_levels(X, lv)


def type0_scaffolding(stream: RngStream, u: float, levels: Sequence[float], alpha: float, eps: float,
                      dt: Optional[float] = None, horizon: float = DEFAULT_HORIZON,
                      spindles: str = "levels") -> MarkedScaffolding:
    lv = _levels_array(levels)
    ceiling = float(lv[-1]) if spindles == "levels" and lv.size and lv[-1] > 0 else None
    walk_stream, spindle_stream = stream.spawn(2)
    result = walk(walk_stream, alpha, eps, StopRule("below", level=0.0), x0=u, horizon=horizon, ceiling=ceiling)
    return _assemble(spindle_stream, result, spindles, lv, dt, SPINDLE_GRID_POINTS)


def leftmost_spindle_process(X: MarkedScaffolding, levels: Sequence[float]) -> np.ndarray:
    """L(y): value at y of the spindle marking the first passage of X above y."""
    lv = _levels_array(levels)
    post = X.spindle_post
    running = np.maximum.accumulate(post) if post.size else post
    out = np.zeros(lv.size)
    for j, y in enumerate(lv):
        if y <= X.initial_level and not X.has_initial_spindle:
            continue
        k = int(np.searchsorted(running, y, side="right"))
        if k >= post.size:
            raise HorizonExhausted(f"level {y} not passed within horizon {X.horizon}", partial=X)
        out[j] = X.spindle_width(np.array([k]), np.array([y - X.spindle_pre[k]]))[0]
    return out


def sample_leftmost_spindle_process(stream: RngStream, x: float, levels: Sequence[float],
                                    alpha: float) -> np.ndarray:
    """Exact draw of (L(y)) at sorted levels y >= 0, started from L(0) = x.

    Walks the ladder of first passages: a spindle covers every level below
    its top, and the next level beyond it is reached by a jump drawn from
    the exact undershoot/overshoot law.
    """
    x = check_real("x", x, low=0.0)
    lv = _levels_array(levels)
    if lv.size and lv[0] < 0:
        raise ParameterDomainError("levels must be nonnegative")
    delta = _spindle_dimension(alpha)
    out = np.zeros(lv.size)
    j = 0
    if x > 0:
        zeta0 = float(besq_hitting_time_zero(stream, x, alpha))
        pre, post, start = 0.0, zeta0, x
    else:
        pre, post, start = 0.0, 0.0, 0.0
        while j < lv.size and lv[j] <= 0.0:
            j += 1
    while j < lv.size:
        if lv[j] >= post:
            undershoot, jump = sample_ascent(stream, float(lv[j] - post), alpha)
            pre = float(lv[j]) - undershoot
            post = pre + jump
            start = 0.0
        covered = lv[j:][lv[j:] < post]
        out[j:j + covered.size] = besq_bridge_at(stream, start, post - pre, delta, covered - pre)
        j += covered.size
    return out


def pseudo_stationary_run(stream: RngStream, alpha: float, rho: float, levels: Sequence[float], eps: float,
                          horizon: float = DEFAULT_HORIZON) -> List[IntervalPartition]:
    """Skewer of an initial BESQ_m(-2 alpha) spindle, m ~ Gamma(1 - alpha, rho / 2), followed by the
    scaffolding from its lifetime down to its first passage of -1/rho.

    Each level's partition is Exp(rho/2)-evolved BESQ(0) mass times PD(alpha, 0) in law.
    """
    rho = check_real("rho", rho, low=0.0, low_open=True)
    lv = _levels_array(levels)
    m_stream, zeta_stream, walk_stream, spindle_stream = stream.spawn(4)
    m = float(sample_gamma(m_stream, 1.0 - alpha, rho / 2.0))
    zeta0 = float(besq_hitting_time_zero(zeta_stream, m, alpha)) if m > 0 else 0.0
    ceiling = float(lv[-1]) if lv.size and lv[-1] > 0 else None
    result = walk(walk_stream, alpha, eps, StopRule("below", level=-1.0 / rho), x0=zeta0, horizon=horizon,
                  ceiling=ceiling)
    X = _assemble(spindle_stream, result, "levels", lv, None, SPINDLE_GRID_POINTS,
                  initial=(m, zeta0) if zeta0 > 0 else None)
    return skewer_levels(X, lv)


@dataclass
class ExcursionTable:
    """Per-excursion summaries of X away from 0, in time order."""
    start: np.ndarray
    end: np.ndarray
    supremum: np.ndarray
    infimum: np.ndarray
    central_mass: np.ndarray
    jumps: np.ndarray
    complete: np.ndarray

    def __len__(self) -> int:
        return int(self.start.size)

    def records(self) -> List[Dict[str, Any]]:
        keys = ("start", "end", "supremum", "infimum", "central_mass", "jumps", "complete")
        return [dict(zip(keys, vals)) for vals in zip(*(getattr(self, k).tolist() for k in keys))]


def excursion_summaries(X: MarkedScaffolding) -> ExcursionTable:
    """Start/end time, supremum, infimum, spindle mass across level 0 and jump count of every excursion.

    The central mass is nan when the spindles were not sampled at level 0.
    """
    zero_times, zero_counts = X.zeros()
    if zero_times.size == 0:
        raise ParameterDomainError("scaffolding never visits 0")
    n_cyc = zero_times.size
    cycles = cycle_ids(X, zero_counts)
    valid = cycles >= 0
    c = cycles[valid]
    sup = np.zeros(n_cyc)
    inf = np.zeros(n_cyc)
    np.maximum.at(sup, c, X.event_post[valid])
    lows = np.where(X.event_kind == CEILING, X.event_post, X.event_pre)
    np.minimum.at(inf, c, lows[valid])
    jumps = np.bincount(c[X.event_kind[valid] == JUMP], minlength=n_cyc)
    end = np.concatenate((zero_times[1:], [X.horizon]))
    complete = np.arange(n_cyc) < n_cyc - 1
    central = np.full(n_cyc, np.nan)
    resolvable = X.spindles.mode == "grid" or (
        X.spindles.mode == "levels" and X.spindles.levels is not None and np.any(X.spindles.levels == 0.0))
    if resolvable:
        rows = np.flatnonzero((X.spindle_pre <= 0.0) & (X.spindle_post > 0.0) & (X.spindle_event >= 0))
        widths = X.spindle_width(rows, -X.spindle_pre[rows]) if rows.size else np.zeros(0)
        row_cycles = cycles[X.spindle_event[rows]]
        central = np.bincount(row_cycles, weights=widths, minlength=n_cyc).astype(float)
    return ExcursionTable(start=zero_times, end=end, supremum=sup, infimum=inf, central_mass=central,
                          jumps=jumps, complete=complete)


def spindle_records(X: MarkedScaffolding) -> List[Dict[str, Any]]:
    records = []
    for i in range(X.spindles.n):
        offsets, values = X.spindles.row(i)
        records.append({"s": X.spindle_times[i], "zeta": X.spindles.zeta[i], "pre": X.spindle_pre[i],
                        "offsets": offsets, "values": values})
    return records


def dump_scaffolding_ndjson(X: MarkedScaffolding, path: Path, params: Optional[Dict[str, Any]] = None) -> Path:
    """Header record with the path parameters, then one record per spindle."""
    header = {"kind": "scaffolding", "alpha": X.alpha, "eps": X.eps, "drift": X.drift,
              "initial_level": X.initial_level, "horizon": X.horizon, "end_level": X.end_level,
              "stop_reason": X.stop_reason, "spindle_mode": X.spindles.mode, "meta": X.meta,
              "params": params or {}}
    return write_ndjson(path, [header] + spindle_records(X))


def dump_scaffolding_npz(X: MarkedScaffolding, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(
        path, event_times=X.event_times, event_kind=X.event_kind, event_pre=X.event_pre,
        event_post=X.event_post, spindle_times=X.spindle_times, spindle_pre=X.spindle_pre,
        zeta=X.spindles.zeta, indptr=X.spindles.indptr, offsets=X.spindles.offsets,
        values=X.spindles.values, scalars=np.array([X.alpha, X.eps, X.drift, X.initial_level, X.horizon]),
    )
    return path

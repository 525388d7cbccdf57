"""Batched walker for the eps-truncated scaffolding with pruning and stopping rules."""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Literal, Optional

import numpy as np

from .config import DEFAULT_HORIZON, MAX_WALKER_EVENTS, WALKER_CHUNK
from .levy import (
    compensating_drift,
    levy_tail,
    sample_ascent,
    sample_descent_time,
    sample_jump_sizes,
    small_jump_variance,
)
from .models import HorizonExhausted, ParameterDomainError, check_real
from .rng import RngStream

logger = logging.getLogger(__name__)

JUMP = 0
RESET = 1
CEILING = 2  # closes a pruned stretch spent above the ceiling


@dataclass
class StopRule:
    """When the walk ends.

    horizon     run until `horizon` units of simulated time
    below       first passage at or below `level` (always on a drift segment)
    above       first jump ending above `level`
    local_time  at the inverse local time `target` of X at 0, calibrated by
                counting excursions that qualify under `calib` ("sup": supremum
                above y_calib, "inf": infimum below -y_calib)
    cycles      at the start of excursion number `cycles` away from 0
    """
    kind: Literal["horizon", "below", "above", "local_time", "cycles"]
    level: float = 0.0
    target: float = 0.0
    calib: Literal["sup", "inf"] = "sup"
    y_calib: float = 1.0
    rate: float = 1.0
    interpolate: bool = False
    cycles: int = 0

    @property
    def tracks_zeros(self) -> bool:
        return self.kind in ("local_time", "cycles")


@dataclass
class WalkResult:
    alpha: float
    eps: float
    drift: float
    x0: float
    event_times: np.ndarray
    event_kind: np.ndarray
    event_pre: np.ndarray
    event_post: np.ndarray
    end_time: float
    end_level: float
    stop_reason: str
    zero_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    zero_events: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    meta: Dict[str, Any] = field(default_factory=dict)


class ScaffoldingWalker:
    """Simulates X(s) = x0 + drift*s + (jumps >= eps) in vectorized chunks.

    Path segments that cannot reach the observed levels are replaced by their
    exact laws: above `ceiling` the walk jumps ahead to the return to the
    ceiling (time drawn from the stable descent law); at `floor` it jumps to
    the first passage above `floor_target` (drawn from the ascent law, elapsed
    time recorded as zero). Both leave a reset event (kind CEILING or RESET) so that
    X(s) = x0 + drift*s + sum of event deltas holds at every event.
    The horizon bounds simulated time, excluding skipped stretches.
    """

    def __init__(self, stream: RngStream, alpha: float, eps: float, x0: float = 0.0,
                 horizon: float = DEFAULT_HORIZON, ceiling: Optional[float] = None,
                 floor: Optional[float] = None, floor_target: float = 0.0,
                 chunk: int = WALKER_CHUNK):
        self.stream = stream
        self.alpha = check_real("alpha", alpha, low=0.0, high=1.0, low_open=True, high_open=True)
        self.eps = check_real("eps", eps, low=0.0, low_open=True)
        self.x0 = check_real("x0", x0)
        self.horizon = check_real("horizon", horizon, low=0.0, low_open=True)
        if ceiling is not None and floor is not None and floor >= ceiling:
            raise ParameterDomainError("floor must lie below ceiling")
        if floor is not None and floor >= floor_target:
            raise ParameterDomainError("floor must lie below its re-entry target")
        self.ceiling = ceiling
        self.floor = floor
        self.floor_target = floor_target
        self.chunk = chunk
        self.rate = levy_tail(self.eps, self.alpha)
        self.drift = compensating_drift(self.eps, self.alpha)
        self.speed = -self.drift

        self.s = 0.0
        self.active = 0.0
        self.x = self.x0
        self.n_events = 0
        self._times: List[np.ndarray] = []
        self._kind: List[np.ndarray] = []
        self._pre: List[np.ndarray] = []
        self._post: List[np.ndarray] = []

        self.zero_times: List[float] = []
        self.zero_events: List[int] = []
        self.qualified: List[int] = []
        self._current_qualified = False
        self.n_ceiling = 0
        self.n_floor = 0
        self.skipped_time = 0.0
        self._k_target: Optional[int] = None
        self._phi = 0.0

    # -- event storage ------------------------------------------------------

    def _append(self, times, kind, pre, post) -> None:
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if times.size == 0:
            return
        self._times.append(times)
        self._kind.append(np.broadcast_to(np.asarray(kind, dtype=np.int8), times.shape).copy())
        self._pre.append(np.atleast_1d(np.asarray(pre, dtype=float)))
        self._post.append(np.atleast_1d(np.asarray(post, dtype=float)))
        self.n_events += times.size
        if self.n_events > MAX_WALKER_EVENTS:
            raise HorizonExhausted(f"walk exceeded {MAX_WALKER_EVENTS} events", partial=None)

    def _columns(self, limit: Optional[int] = None):
        if self._times:
            cols = [np.concatenate(c) for c in (self._times, self._kind, self._pre, self._post)]
        else:
            cols = [np.zeros(0), np.zeros(0, dtype=np.int8), np.zeros(0), np.zeros(0)]
        if limit is not None:
            cols = [c[:limit] for c in cols]
        return cols

    def _result(self, end_time: float, end_level: float, reason: str, limit: Optional[int] = None) -> WalkResult:
        times, kind, pre, post = self._columns(limit)
        meta = {
            "jump_rate": self.rate,
            "small_jump_variance_rate": small_jump_variance(self.eps, self.alpha),
            "ceiling": self.ceiling,
            "floor": self.floor,
            "ceiling_skips": self.n_ceiling,
            "floor_skips": self.n_floor,
            "skipped_time": self.skipped_time,
            "active_time": self.active,
            "sparse_jumps": bool(self.rate * self.horizon < 1.0),
            "floor_time_unknown": bool(self.n_floor > 0),
            "calibrated_arrivals": self._k_target,
        }
        return WalkResult(
            alpha=self.alpha, eps=self.eps, drift=self.drift, x0=self.x0,
            event_times=times, event_kind=kind, event_pre=pre, event_post=post,
            end_time=float(end_time), end_level=float(end_level), stop_reason=reason,
            zero_times=np.asarray(self.zero_times, dtype=float),
            zero_events=np.asarray(self.zero_events, dtype=np.int64),
            meta=meta,
        )

    # -- pruning ------------------------------------------------------------

    def _skip_to_ceiling(self) -> None:
        height = self.x - self.ceiling
        elapsed = float(sample_descent_time(self.stream, height, self.alpha))
        self.s += elapsed
        self.skipped_time += elapsed
        self._append(self.s, CEILING, self.x + self.drift * elapsed, self.ceiling)
        self.x = self.ceiling
        self.n_ceiling += 1

    def _skip_from_floor(self) -> float:
        undershoot, jump = sample_ascent(self.stream, self.floor_target - self.floor, self.alpha)
        pre = self.floor_target - undershoot
        self._append([self.s, self.s], [RESET, JUMP], [self.floor, pre], [pre, pre + jump])
        self.x = pre + jump
        self.n_floor += 1
        return pre

    # -- excursion bookkeeping ----------------------------------------------

    def _track(self, rule: StopRule, prev, pre, post, t_prev, n_before: int,
               tail_prev: Optional[float] = None, tail_level: Optional[float] = None,
               tail_t: Optional[float] = None, tail_floor: bool = False) -> Optional[int]:
        """Record downward zero crossings and qualifying excursions; return the stop zero index, if reached.

        Jump k follows drift segment k (from prev[k] down to pre[k]). The
        optional tail segment runs from tail_prev down to tail_level without a
        following jump.
        """
        cross = (prev > 0.0) & (pre <= 0.0)
        cyc0 = len(self.zero_times) - 1
        if cross.any():
            idx = np.flatnonzero(cross)
            self.zero_times.extend((t_prev[idx] + prev[idx] / self.speed).tolist())
            self.zero_events.extend((n_before + idx).tolist())
        cycle_of_jump = cyc0 + np.cumsum(cross)
        new_cycles: List[int] = []
        if rule.kind == "local_time" and rule.calib == "sup":
            hits = np.unique(cycle_of_jump[post > rule.y_calib])
            new_cycles = [int(c) for c in hits if not (c == cyc0 and self._current_qualified)]
        last_cycle = int(cycle_of_jump[-1]) if cycle_of_jump.size else cyc0
        if tail_prev is not None and tail_prev > 0.0 >= tail_level:
            self.zero_times.append(tail_t + tail_prev / self.speed)
            self.zero_events.append(n_before + prev.size)
            last_cycle += 1
        if rule.kind == "local_time" and rule.calib == "inf" and tail_floor:
            if not (last_cycle == cyc0 and self._current_qualified) and last_cycle not in new_cycles[-1:]:
                new_cycles.append(last_cycle)
        self.qualified.extend(new_cycles)
        self._current_qualified = bool(self.qualified) and self.qualified[-1] == last_cycle
        return self._stop_zero(rule)

    def _stop_zero(self, rule: StopRule) -> Optional[int]:
        if rule.kind == "cycles":
            return rule.cycles if len(self.zero_times) > rule.cycles else None
        if rule.target <= 0.0:
            return 0
        k = self._k_target
        if len(self.qualified) <= k:
            return None
        start = self.qualified[k]
        if not rule.interpolate:
            return start
        gap_start = self.qualified[k - 1] + 1 if k >= 1 else 0
        return gap_start + int(round(self._phi * (start - gap_start)))

    def _calibrate(self, rule: StopRule) -> None:
        """Arrival local times of qualifying excursions; K of them fall in [0, target]."""
        gen = self.stream.generator
        gamma_k, k = 0.0, 0
        while True:
            nxt = gamma_k + gen.standard_exponential() / rule.rate
            if nxt > rule.target:
                break
            gamma_k, k = nxt, k + 1
        self._k_target = k
        self._phi = (rule.target - gamma_k) / (nxt - gamma_k)

    # -- main loop ----------------------------------------------------------

    def walk(self, rule: StopRule) -> WalkResult:
        if rule.tracks_zeros:
            if self.x0 != 0.0:
                raise ParameterDomainError("excursion tracking needs the walk to start at 0")
            self.zero_times, self.zero_events = [0.0], [0]
            if rule.kind == "local_time":
                self._calibrate(rule)
                if rule.calib == "inf" and self.floor != -rule.y_calib:
                    raise ParameterDomainError("infimum calibration requires floor = -y_calib")
            stop = self._stop_zero(rule)
            if stop is not None:
                return self._result(0.0, 0.0, "local_time", limit=0)
        if rule.kind == "below" and self.x <= rule.level:
            return self._result(0.0, self.x, "first_passage")

        gen = self.stream.generator
        n = self.chunk
        while True:
            if self.ceiling is not None and self.x > self.ceiling:
                self._skip_to_ceiling()
                continue
            w = gen.standard_exponential(n) / self.rate
            z = sample_jump_sizes(self.stream, self.eps, self.alpha, n)
            t = self.s + np.cumsum(w)
            t_prev = np.concatenate(([self.s], t[:-1]))
            act = self.active + np.cumsum(w)
            post = self.x + np.cumsum(self.drift * w + z)
            pre = post - z
            prev = np.concatenate(([self.x], post[:-1]))

            def first(mask: np.ndarray) -> int:
                hit = np.flatnonzero(mask)
                return int(hit[0]) if hit.size else n

            k_below = first(pre <= rule.level) if rule.kind == "below" else n
            k_floor = first(pre <= self.floor) if self.floor is not None else n
            k_hor = first(act > self.horizon)
            k_above = first(post > rule.level) if rule.kind == "above" else n
            k_ceil = first(post > self.ceiling) if self.ceiling is not None else n
            k_seg = min(k_below, k_floor, k_hor)
            k_jump = min(k_above, k_ceil)

            if k_jump < k_seg:
                m = k_jump + 1
                self._append(t[:m], JUMP, pre[:m], post[:m])
                n_before = self.n_events - m
                if rule.tracks_zeros:
                    stop = self._track(rule, prev[:m], pre[:m], post[:m], t_prev[:m], n_before)
                    if stop is not None:
                        return self._stop_at(stop)
                self.s, self.x, self.active = float(t[k_jump]), float(post[k_jump]), float(act[k_jump])
                if k_jump == k_above:
                    return self._result(self.s, self.x, "first_passage_above")
                continue

            m = k_seg
            self._append(t[:m], JUMP, pre[:m], post[:m])
            n_before = self.n_events - m
            if k_seg == n:
                if rule.tracks_zeros:
                    stop = self._track(rule, prev, pre, post, t_prev, n_before)
                    if stop is not None:
                        return self._stop_at(stop)
                self.s, self.x, self.active = float(t[-1]), float(post[-1]), float(act[-1])
                continue

            k = k_seg
            act_prev = act[k] - w[k]
            if k == k_below and (k != k_floor or rule.level >= self.floor):
                t_end = float(t_prev[k] + (prev[k] - rule.level) / self.speed)
                if act_prev + (t_end - t_prev[k]) <= self.horizon:
                    self.active = act_prev + (t_end - t_prev[k])
                    return self._result(t_end, rule.level, "first_passage")
            if k == k_floor:
                t_floor = float(t_prev[k] + (prev[k] - self.floor) / self.speed)
                if act_prev + (t_floor - t_prev[k]) <= self.horizon:
                    if rule.tracks_zeros:
                        stop = self._track(rule, prev[:m], pre[:m], post[:m], t_prev[:m], n_before,
                                           tail_prev=float(prev[k]), tail_level=self.floor,
                                           tail_t=float(t_prev[k]), tail_floor=True)
                        if stop is not None:
                            return self._stop_at(stop)
                    self.s, self.active = t_floor, act_prev + (t_floor - t_prev[k])
                    pre_jump = self._skip_from_floor()
                    if rule.tracks_zeros:
                        stop = self._track(rule, np.array([pre_jump]), np.array([pre_jump]), np.array([self.x]),
                                           np.array([self.s]), self.n_events - 1)
                        if stop is not None:
                            return self._stop_at(stop)
                    if rule.kind == "above" and self.x > rule.level:
                        return self._result(self.s, self.x, "first_passage_above")
                    continue

            # horizon reached on segment k
            t_end = float(t_prev[k] + (self.horizon - act_prev))
            level = float(prev[k] + self.drift * (t_end - t_prev[k]))
            self.active = self.horizon
            if rule.kind == "horizon":
                return self._result(t_end, level, "horizon")
            raise HorizonExhausted(
                f"horizon {self.horizon} exhausted before stop rule '{rule.kind}'",
                partial=self._result(t_end, level, "horizon"),
            )

    def _stop_at(self, zero_index: int) -> WalkResult:
        t_zero = self.zero_times[zero_index]
        del self.zero_times[zero_index + 1:]
        del self.zero_events[zero_index + 1:]
        return self._result(t_zero, 0.0, "local_time", limit=self.zero_events[zero_index])


def walk(stream: RngStream, alpha: float, eps: float, rule: StopRule, x0: float = 0.0,
         horizon: float = DEFAULT_HORIZON, ceiling: Optional[float] = None,
         floor: Optional[float] = None, floor_target: float = 0.0) -> WalkResult:
    """Run one scaffolding walk to its stopping rule."""
    if ceiling is not None and not math.isfinite(ceiling):
        ceiling = None
    walker = ScaffoldingWalker(stream, alpha, eps, x0=x0, horizon=horizon, ceiling=ceiling,
                               floor=floor, floor_target=floor_target)
    return walker.walk(rule)

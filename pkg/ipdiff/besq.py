"""Squared Bessel machinery: exact transitions, absorbed negative-dimension paths, bridges and spindles."""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, Optional, Union

import numpy as np
from scipy.integrate import trapezoid

from .config import DEFAULT_DT_FRACTION, MAX_EULER_STEPS, MAX_GRID_POINTS
from .models import GridError, ParameterDomainError, check_real
from .rng import RngStream, sample_gamma, sample_noncentral_chisq
from .utils import write_ndjson

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridPath:
    """A nonnegative path sampled on a strictly increasing grid starting at 0."""
    times: np.ndarray
    values: np.ndarray
    step: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.shape != values.shape or times.ndim != 1 or times.size == 0:
            raise GridError("times and values must be nonempty 1-d arrays of equal length")
        if times[0] != 0.0:
            raise GridError("grid must start at time 0")
        if np.any(np.diff(times) <= 0):
            raise GridError("grid times must be strictly increasing")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ParameterDomainError("path values must be finite and nonnegative")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def at(self, t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        """Linear interpolation; zero outside the grid."""
        return np.interp(t, self.times, self.values, left=0.0, right=0.0)


@dataclass(frozen=True)
class Spindle:
    """Mass profile of one block: an excursion of BESQ(-2 alpha) on [0, zeta]."""
    zeta: float
    profile: GridPath
    meta: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.zeta > 0:
            raise ParameterDomainError(f"spindle lifetime must be positive, got {self.zeta}")
        if not math.isclose(self.profile.horizon, self.zeta, rel_tol=1e-12, abs_tol=0.0):
            raise GridError("spindle lifetime must equal the last grid time")

    def width_at(self, z: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        """Spindle value at offset z above its base, zero outside [0, zeta]."""
        return self.profile.at(z)

    @property
    def area(self) -> float:
        return float(trapezoid(self.profile.values, self.profile.times))

    @classmethod
    def from_function(cls, f: Callable[[np.ndarray], np.ndarray], zeta: float, dt: float) -> "Spindle":
        """Deterministic spindle for testing the time-change maps."""
        times = spindle_grid(zeta, dt)
        values = np.clip(np.asarray(f(times), dtype=float), 0.0, None)
        values[0] = values[-1] = 0.0
        return cls(zeta=float(zeta), profile=GridPath(times, values, step=float(dt)))


def spindle_grid(zeta: float, dt: Optional[float] = None) -> np.ndarray:
    """Uniform grid on [0, zeta]; default step is a fixed fraction of zeta, capped in size."""
    zeta = check_real("zeta", zeta, low=0.0, low_open=True)
    if dt is None:
        dt = DEFAULT_DT_FRACTION * zeta
    dt = check_real("dt", dt, low=0.0, low_open=True)
    if dt >= zeta:
        raise GridError(f"grid step dt={dt} must be smaller than the lifetime {zeta}")
    n = min(int(math.ceil(zeta / dt)), MAX_GRID_POINTS - 1)
    times = np.linspace(0.0, zeta, n + 1)
    times[-1] = zeta
    return times


def besq_transition(stream: RngStream, x: Union[float, np.ndarray], delta: float, t: float,
                    size: Optional[int] = None) -> Union[float, np.ndarray]:
    """Exact draw of Z_t given Z_0 = x for BESQ(delta), as t times a noncentral chi-square."""
    check_real("delta", delta, low=0.0)
    t = check_real("t", t, low=0.0, low_open=True)
    x_arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x_arr)) or np.any(x_arr < 0):
        raise ParameterDomainError("BESQ start must be finite and nonnegative; negative dimensions use besq_neg_path")
    draws = sample_noncentral_chisq(stream, delta, x_arr / t, size=size)
    return t * draws


def _besq_chain(stream: RngStream, x0: np.ndarray, delta: float, times: np.ndarray) -> np.ndarray:
    """Exact BESQ(delta) values at increasing times (times[0] = 0) for each start in x0; shape (len(times), len(x0))."""
    out = np.empty((times.size, x0.size))
    out[0] = x0
    for k, dt in enumerate(np.diff(times), start=1):
        out[k] = dt * sample_noncentral_chisq(stream, delta, out[k - 1] / dt)
    return out


def besq_free_path(stream: RngStream, x: float, delta: float, horizon: float, dt: float) -> GridPath:
    """BESQ(delta) from x on a uniform grid, built from exact transitions."""
    x = check_real("x", x, low=0.0)
    check_real("delta", delta, low=0.0)
    horizon = check_real("horizon", horizon, low=0.0, low_open=True)
    dt = check_real("dt", dt, low=0.0, low_open=True)
    n = int(math.ceil(horizon / dt - 1e-9))
    if n + 1 > MAX_GRID_POINTS:
        raise GridError(f"{n + 1} grid points exceed the cap of {MAX_GRID_POINTS}")
    times = np.linspace(0.0, horizon, n + 1)
    values = _besq_chain(stream, np.array([x]), delta, times)[:, 0]
    return GridPath(times, values, step=dt)


def besq_hitting_time_zero(stream: RngStream, x: float, alpha: float,
                           size: Optional[int] = None) -> Union[float, np.ndarray]:
    """Absorption time of BESQ_x(-2 alpha): x / (2G) with G ~ Gamma(1 + alpha)."""
    x = check_real("x", x, low=0.0, low_open=True)
    alpha = check_real("alpha", alpha, low=0.0, high=1.0, low_open=True, high_open=True)
    g = sample_gamma(stream, 1.0 + alpha, 1.0, size=size)
    return x / (2.0 * g)


def besq_bridge_at(stream: RngStream, x: float, zeta: float, delta: float, times: np.ndarray,
                   size: Optional[int] = None) -> np.ndarray:
    """Exact joint values of a BESQ(delta) bridge from x to 0 over [0, zeta] at sorted times.

    Uses Z(t) = (1 - t/zeta)^2 Y(t zeta / (zeta - t)) with Y ~ BESQ_x(delta).
    Returns shape (len(times),), or (len(times), size) when size is given.
    """
    x = check_real("x", x, low=0.0)
    zeta = check_real("zeta", zeta, low=0.0, low_open=True)
    check_real("delta", delta, low=0.0)
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or np.any(np.diff(times) < 0):
        raise GridError("bridge times must be a sorted 1-d array")
    if times.size and (times[0] < 0 or times[-1] > zeta):
        raise GridError("bridge times must lie in [0, zeta]")
    n = 1 if size is None else size
    out = np.zeros((times.size, n))
    out[times == 0.0] = x
    interior = (times > 0.0) & (times < zeta)
    if interior.any():
        t_unique, inverse = np.unique(times[interior], return_inverse=True)
        s = t_unique * zeta / (zeta - t_unique)
        y = _besq_chain(stream, np.full(n, x), delta, np.concatenate(([0.0], s)))[1:]
        z = (1.0 - t_unique / zeta)[:, None] ** 2 * y
        out[interior] = z[inverse]
    return out[:, 0] if size is None else out


def spindle_bridge(stream: RngStream, zeta: float, alpha: float, dt: Optional[float] = None) -> Spindle:
    """BESQ(4 + 2 alpha) bridge from 0 to 0 over [0, zeta] on a uniform grid."""
    alpha = check_real("alpha", alpha, low=0.0, high=1.0, low_open=True, high_open=True)
    times = spindle_grid(zeta, dt)
    values = besq_bridge_at(stream, 0.0, float(zeta), 4.0 + 2.0 * alpha, times)
    values[1:-1] = np.maximum(values[1:-1], np.finfo(float).tiny)
    return Spindle(zeta=float(zeta), profile=GridPath(times, values, step=float(times[1] - times[0])))


def besq_neg_path(stream: RngStream, x: float, alpha: float, dt: Optional[float] = None,
                  method: str = "euler") -> GridPath:
    """BESQ(-2 alpha) from x > 0, absorbed at its first zero, up to and including absorption.

    method="euler" runs the square-root Euler scheme with a Brownian-bridge
    crossing correction; method="bridge" draws the absorption time exactly and
    then the path as a BESQ(4 + 2 alpha) bridge from x to 0 over that time.
    """
    x = check_real("x", x, low=0.0, low_open=True)
    alpha = check_real("alpha", alpha, low=0.0, high=1.0, low_open=True, high_open=True)
    if method == "bridge":
        zeta = besq_hitting_time_zero(stream, x, alpha)
        times = spindle_grid(zeta, dt if dt is not None and dt < zeta else None)
        values = besq_bridge_at(stream, x, zeta, 4.0 + 2.0 * alpha, times)
        values[1:-1] = np.maximum(values[1:-1], np.finfo(float).tiny)
        return GridPath(times, values, step=float(times[1] - times[0]))
    if method != "euler":
        raise ParameterDomainError(f"unknown method {method!r}")
    if dt is None:
        dt = DEFAULT_DT_FRACTION * x
    dt = check_real("dt", dt, low=0.0, low_open=True)
    gen = stream.generator
    drift = (1.0 + 2.0 * alpha) / 2.0
    sq = math.sqrt(dt)
    rho = math.sqrt(x)
    values = [x]
    chunk = 4096
    while len(values) < MAX_EULER_STEPS:
        normals = gen.standard_normal(chunk)
        uniforms = gen.random(chunk)
        for z, u in zip(normals, uniforms):
            nxt = rho - drift / rho * dt + sq * z
            if nxt <= 0.0 or u < math.exp(-2.0 * rho * nxt / dt):
                values.append(0.0)
                times = dt * np.arange(len(values))
                return GridPath(times, np.array(values), step=dt)
            rho = nxt
            values.append(rho * rho)
    raise GridError(f"Euler path not absorbed within {MAX_EULER_STEPS} steps at dt={dt}")


def euler_hitting_times(stream: RngStream, x: float, alpha: float, dt: float, n: int) -> np.ndarray:
    """Absorption times of n independent square-root Euler paths of BESQ_x(-2 alpha).

    Independent of the closed form in besq_hitting_time_zero; used as its oracle.
    """
    x = check_real("x", x, low=0.0, low_open=True)
    dt = check_real("dt", dt, low=0.0, low_open=True)
    gen = stream.generator
    drift = (1.0 + 2.0 * alpha) / 2.0
    sq = math.sqrt(dt)
    rho = np.full(n, math.sqrt(x))
    alive = np.arange(n)
    hit = np.zeros(n)
    step = 0
    while alive.size:
        step += 1
        if step > MAX_EULER_STEPS:
            raise GridError(f"{alive.size} Euler paths not absorbed within {MAX_EULER_STEPS} steps")
        r = rho[alive]
        nxt = r - drift / r * dt + sq * gen.standard_normal(alive.size)
        crossed = nxt <= 0.0
        pos = ~crossed
        crossed[pos] = gen.random(int(pos.sum())) < np.exp(-2.0 * r[pos] * nxt[pos] / dt)
        hit[alive[crossed]] = step * dt
        rho[alive] = nxt
        alive = alive[~crossed]
    return hit


def spindle_area(stream: RngStream, zetas: np.ndarray, alpha: float, n_grid: int = 64) -> np.ndarray:
    """Areas under spindles of the given lifetimes, via zeta^2 times a unit-spindle area."""
    zetas = np.asarray(zetas, dtype=float)
    if zetas.size == 0:
        return np.zeros(0)
    if np.any(zetas <= 0) or not np.all(np.isfinite(zetas)):
        raise ParameterDomainError("spindle lifetimes must be positive and finite")
    times = np.linspace(0.0, 1.0, n_grid + 1)
    unit = besq_bridge_at(stream, 0.0, 1.0, 4.0 + 2.0 * alpha, times, size=zetas.size)
    return zetas ** 2 * trapezoid(unit, times, axis=0)


def path_record(kind: str, params: Dict[str, Any], path: GridPath) -> Dict[str, Any]:
    return {"kind": kind, "params": params, "times": path.times, "values": path.values}


def dump_paths_ndjson(records: Iterable[Dict[str, Any]], path: Path) -> Path:
    """One NDJSON record per path: {kind, params, times, values}."""
    return write_ndjson(path, records)

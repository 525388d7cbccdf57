"""Lévy measure of the stable(1+alpha) scaffolding and its exact passage laws."""

from typing import Optional, Tuple, Union

import numpy as np
from scipy.special import gamma as gamma_fn

from .models import ParameterDomainError, check_real
from .rng import RngStream, sample_beta, sample_positive_stable, sample_uniform

ArrayOrFloat = Union[float, np.ndarray]


def _alpha(alpha: float) -> float:
    return check_real("alpha", alpha, low=0.0, high=1.0, low_open=True, high_open=True)


def levy_constant(alpha: float) -> float:
    """C with Pi(dz) = C z^(-2-alpha) dz matching psi(c) = c^(1+alpha) / (2^alpha Gamma(1+alpha))."""
    a = _alpha(alpha)
    return a * (1.0 + a) / (2.0 ** a * gamma_fn(1.0 + a) * gamma_fn(1.0 - a))


def laplace_exponent(c: ArrayOrFloat, alpha: float) -> ArrayOrFloat:
    a = _alpha(alpha)
    return np.asarray(c, dtype=float) ** (1.0 + a) / (2.0 ** a * gamma_fn(1.0 + a))


def levy_jump_rate(z: ArrayOrFloat, alpha: float) -> ArrayOrFloat:
    """Lévy density of the scaffolding jumps."""
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr <= 0) or not np.all(np.isfinite(z_arr)):
        raise ParameterDomainError("jump size must be positive and finite")
    out = levy_constant(alpha) * z_arr ** (-2.0 - alpha)
    return float(out) if out.ndim == 0 else out


def levy_tail(eps: float, alpha: float) -> float:
    """Pi((eps, inf)): arrival rate of jumps of size at least eps."""
    eps = check_real("eps", eps, low=0.0, low_open=True)
    return levy_constant(alpha) * eps ** (-1.0 - alpha) / (1.0 + alpha)


def compensating_drift(eps: float, alpha: float) -> float:
    """Drift making the eps-truncated process a martingale: minus the mean jump rate above eps."""
    eps = check_real("eps", eps, low=0.0, low_open=True)
    return -levy_constant(alpha) * eps ** (-alpha) / alpha


def small_jump_variance(eps: float, alpha: float) -> float:
    """Variance rate of the omitted jumps below eps."""
    eps = check_real("eps", eps, low=0.0, low_open=True)
    return levy_constant(alpha) * eps ** (1.0 - alpha) / (1.0 - alpha)


def sample_jump_sizes(stream: RngStream, eps: float, alpha: float, size: int) -> np.ndarray:
    """Jump sizes from the normalized tail of Pi above eps (Pareto with index 1 + alpha)."""
    return eps * sample_uniform(stream, size) ** (-1.0 / (1.0 + alpha))


def sample_descent_time(stream: RngStream, height: ArrayOrFloat, alpha: float,
                        size: Optional[int] = None) -> ArrayOrFloat:
    """Exact time for the scaffolding to creep down by `height`.

    The first-passage times below a level form a stable subordinator with
    Laplace exponent psi^{-1}, so T(h) = h^(1+alpha) 2^alpha Gamma(1+alpha) S,
    with S positive stable of index 1/(1+alpha).
    """
    a = _alpha(alpha)
    h = np.asarray(height, dtype=float)
    if np.any(h < 0):
        raise ParameterDomainError("descent height must be nonnegative")
    s = sample_positive_stable(stream, 1.0 / (1.0 + a), size=size)
    return h ** (1.0 + a) * 2.0 ** a * gamma_fn(1.0 + a) * s


def sample_ascent(stream: RngStream, distance: float, alpha: float) -> Tuple[float, float]:
    """First passage above a level at `distance` from below.

    Returns (undershoot, jump): the pre-jump point sits `undershoot` below the
    level and the crossing jump has size `jump` > undershoot. The gap between
    the level and the prior supremum is Beta(1-alpha, alpha) times the
    distance, the undershoot is that gap times U^(-1/alpha), and the jump is
    drawn from the Lévy tail above the undershoot.
    """
    x = check_real("distance", distance, low=0.0, low_open=True)
    a = _alpha(alpha)
    gap = x * sample_beta(stream, 1.0 - a, a)
    undershoot = gap * sample_uniform(stream) ** (-1.0 / a)
    jump = undershoot * sample_uniform(stream) ** (-1.0 / (1.0 + a))
    return float(undershoot), float(jump)


def sup_excursion_rate(y: ArrayOrFloat, alpha: float) -> ArrayOrFloat:
    """Rate per unit local time at 0 of excursions of X whose supremum exceeds y."""
    a = _alpha(alpha)
    return 2.0 ** (-a) * np.asarray(y, dtype=float) ** (-a)


def inf_excursion_rate(y: ArrayOrFloat, alpha: float) -> ArrayOrFloat:
    """Rate per unit local time at (0,0) of excursions whose H-infimum is below -y (y^(d-1))."""
    a = _alpha(alpha)
    return np.asarray(y, dtype=float) ** (-a)

"""
Closed-form reference laws: Laplace transforms, the Lévy tail of the skewer subordinator,
Poisson-Dirichlet samplers and the pseudo-stationary composite law, with a registry.
"""

import json
import logging
import math
from dataclasses import dataclass
from functools import partial
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid, quad
from scipy.special import gamma as gamma_fn
from scipy.special import gammaincc

from .besq import besq_transition
from .models import AbsorptionSignal, LawSpec, ParameterDomainError, check_real
from .rng import RngStream, sample_exponential, sample_gamma, sample_uniform

logger = logging.getLogger(__name__)

# Sticks drawn per Poisson-Dirichlet sample before ranking
PD_STICKS = 500
LAGUERRE_NODES = 80


def _d(d: float) -> float:
    return check_real("d", d, low=0.0, high=1.0, low_open=True, high_open=True)


def _gamma_arg(gamma: float) -> float:
    return check_real("gamma", gamma, low=0.0)


def lt_leftmost_semigroup(x: float, y: float, gamma: float, d: float) -> float:
    """E_x exp(-gamma L(y)) for the leftmost spindle process started at L(0) = x.

    Written as (1 + 2 gamma y)^(1-d) exp(-gamma x / (1 + 2 gamma y)) - (2 gamma y)^(1-d) exp(-x / 2y),
    which is 1 at gamma = 0.
    """
    x = check_real("x", x, low=0.0)
    y = check_real("y", y, low=0.0, low_open=True)
    g = _gamma_arg(gamma)
    d = _d(d)
    s = 2.0 * g * y
    return float((1.0 + s) ** (1.0 - d) * math.exp(-g * x / (1.0 + s)) - s ** (1.0 - d) * math.exp(-x / (2.0 * y)))


def lt_kernel_p_y(x: float, y: float, gamma: float, d: float) -> float:
    """integral e^(-gamma a) p_y(x, da): the surviving part of a single atom after time y."""
    x = check_real("x", x, low=0.0, low_open=True)
    y = check_real("y", y, low=0.0, low_open=True)
    g = _gamma_arg(gamma)
    d = _d(d)
    return float((1.0 + g * y) ** (1.0 - d) * (math.exp(-g * x / (1.0 + g * y)) - math.exp(-x / y)))


def lt_type1_leftmost(b: float, y: float, gamma: float, alpha: float) -> float:
    """Laplace transform of the leftmost block at level y of a type-1 clade of mass b, given survival.

    (1 + gamma/r)^alpha (e^(b r^2/(r + gamma)) - 1) / (e^(b r) - 1) with r = 1/2y, evaluated
    without overflow for large b r.
    """
    b = check_real("b", b, low=0.0, low_open=True)
    y = check_real("y", y, low=0.0, low_open=True)
    g = _gamma_arg(gamma)
    alpha = check_real("alpha", alpha, low=0.0, high=1.0, low_open=True, high_open=True)
    r = 1.0 / (2.0 * y)
    a = b * r * r / (r + g)
    c = b * r
    return float((1.0 + g / r) ** alpha * math.exp(a - c) * math.expm1(-a) / math.expm1(-c))


def type1_survival(b: float, y: float) -> float:
    """Probability that the clade of a block of mass b reaches level y."""
    return float(-math.expm1(-b / (2.0 * y)))


def phi_y_denominator(gamma: float, y: float, d: float) -> float:
    """1 + y^(1-d) integral ((1-d)/Gamma(d)) s^(d-2) (1 - e^(-gamma s)) e^(-s/y) ds = (1 + gamma y)^(1-d)."""
    g = _gamma_arg(gamma)
    y = check_real("y", y, low=0.0, low_open=True)
    return float((1.0 + g * y) ** (1.0 - _d(d)))


def phi_y_denominator_quad(gamma: float, y: float, d: float) -> float:
    """Quadrature of the same integral, for checking the closed form."""
    g = _gamma_arg(gamma)
    d = _d(d)
    c = (1.0 - d) / gamma_fn(d)
    integrand = lambda s: c * s ** (d - 2.0) * (-math.expm1(-g * s)) * math.exp(-s / y)
    head, _ = quad(integrand, 0.0, y, limit=200)
    tail, _ = quad(integrand, y, math.inf, limit=200)
    return 1.0 + y ** (1.0 - d) * (head + tail)


def phi_y_exponential(gamma_in: float, x: float, y: float, d: float) -> float:
    """phi_y(x) for phi(a) = e^(-gamma_in a): e^(-x/y) + (integral phi dp_y(x, .)) / denominator.

    With exponential phi this equals e^(-gamma_in x / (1 + gamma_in y)).
    """
    x = check_real("x", x, low=0.0, low_open=True)
    y = check_real("y", y, low=0.0, low_open=True)
    surviving = lt_kernel_p_y(x, y, gamma_in, d)
    return float(math.exp(-x / y) + surviving / phi_y_denominator(gamma_in, y, d))


def pi_y_density(s, y: float, d: float):
    return (1.0 - d) / gamma_fn(d) * np.asarray(s, dtype=float) ** (d - 2.0) * np.exp(-np.asarray(s) / y)


def pi_y_tail(epsilon: float, y: float, d: float) -> float:
    """Pi_y((epsilon, inf)) for Pi_y(ds) = ((1-d)/Gamma(d)) s^(d-2) e^(-s/y) ds."""
    y = check_real("y", y, low=0.0, low_open=True)
    d = _d(d)
    if not epsilon > 0:
        raise ParameterDomainError(f"epsilon={epsilon}: the Lévy measure has infinite mass near 0")
    x = epsilon / y
    return float(y ** (d - 1.0) * (x ** (d - 1.0) * math.exp(-x) / gamma_fn(d) - gammaincc(d, x)))


def pi_y_tail_quad(epsilon: float, y: float, d: float) -> float:
    d = _d(d)
    value, _ = quad(lambda s: pi_y_density(s, y, d), epsilon, math.inf, limit=200, epsabs=0.0, epsrel=1e-12)
    return float(value)


def pi_y_tail_laguerre(epsilon: float, y: float, d: float, nodes: int = LAGUERRE_NODES) -> float:
    """Gauss-Laguerre rule after the shift s = epsilon + y u."""
    d = _d(d)
    u, w = np.polynomial.laguerre.laggauss(nodes)
    c = (1.0 - d) / gamma_fn(d)
    return float(c * y * math.exp(-epsilon / y) * np.sum(w * (epsilon + y * u) ** (d - 2.0)))


def pi_y_tail_asymptote(epsilon: float, y: float, d: float) -> float:
    return float((1.0 - d) / gamma_fn(d) * epsilon ** (d - 2.0) * y * math.exp(-epsilon / y))


def lt_besq(x: float, delta: float, y: float, gamma: float) -> float:
    x = check_real("x", x, low=0.0)
    delta = check_real("delta", delta, low=0.0)
    y = check_real("y", y, low=0.0)
    g = _gamma_arg(gamma)
    s = 1.0 + 2.0 * g * y
    return float(s ** (-delta / 2.0) * math.exp(-g * x / s))


def besq0_extinction(x: float, y: float) -> float:
    """P_x(BESQ(0) is 0 at time y)."""
    x = check_real("x", x, low=0.0)
    y = check_real("y", y, low=0.0, low_open=True)
    return float(math.exp(-x / (2.0 * y)))


def exp_start_extinction(rho: float, y: float) -> float:
    """BESQ(0) extinction by time y from an Exp(rho/2) start."""
    rho = check_real("rho", rho, low=0.0, low_open=True)
    y = check_real("y", y, low=0.0)
    return float(rho * y / (rho * y + 1.0))


def sample_gem(stream: RngStream, alpha: float, theta: float, k: int,
               size: Optional[int] = None) -> Tuple[np.ndarray, Any]:
    """First k GEM(alpha, theta) sticks and the unbroken remainder.

    W_i ~ Beta(1 - alpha, theta + i alpha), P_i = W_i prod_(j<i) (1 - W_j).
    """
    alpha = check_real("alpha", alpha, low=0.0, high=1.0, high_open=True)
    theta = check_real("theta", theta, low=-alpha, low_open=True)
    if k < 1:
        raise ParameterDomainError(f"need at least one stick, got k={k}")
    n = 1 if size is None else size
    b = theta + alpha * np.arange(1, k + 1)
    w = stream.generator.beta(1.0 - alpha, b, size=(n, k))
    log_rest = np.cumsum(np.log1p(-w), axis=1)
    before = np.exp(np.concatenate((np.zeros((n, 1)), log_rest[:, :-1]), axis=1))
    sticks = w * before
    residual = np.exp(log_rest[:, -1])
    if size is None:
        return sticks[0], float(residual[0])
    return sticks, residual


def sample_pd(stream: RngStream, alpha: float, theta: float, k: int, size: Optional[int] = None,
              sticks: int = PD_STICKS) -> Tuple[np.ndarray, Any]:
    """Largest k masses of PD(alpha, theta), ranked, from `sticks` GEM sticks; also the unranked remainder."""
    if theta not in (0.0, alpha):
        logger.debug(f"PD({alpha}, {theta}) requested outside the two laws used by the evolutions")
    raw, residual = sample_gem(stream, alpha, theta, max(k, sticks), size=size if size is not None else 1)
    ranked = -np.sort(-raw, axis=1)[:, :k]
    if size is None:
        return ranked[0], float(residual[0])
    return ranked, residual


@dataclass
class KernelDraw:
    """Ranked draw from the type-1 transition of one block: survival flag, mass of the non-leftmost part
    and its largest blocks. The leftmost block is not sampled."""
    survived: np.ndarray
    rest_mass: np.ndarray
    rest_ranked: np.ndarray


def sample_type1_kernel(stream: RngStream, b: float, y: float, alpha: float, k: int,
                        size: int = 1) -> KernelDraw:
    """Order-invariant part of the type-1 kernel: survival w.p. 1 - e^(-b/2y), then Gamma(alpha, 1/2y) x PD(alpha, alpha)."""
    b = check_real("b", b, low=0.0, low_open=True)
    y = check_real("y", y, low=0.0, low_open=True)
    alive = sample_uniform(stream, size) < type1_survival(b, y)
    mass = sample_gamma(stream, alpha, 1.0 / (2.0 * y), size=size) * alive
    ranked, _ = sample_pd(stream, alpha, alpha, k, size=size)
    return KernelDraw(survived=alive, rest_mass=mass, rest_ranked=ranked * mass[:, None])


@dataclass
class PseudoStationarySample:
    """Atoms of mu^y = sum delta(x_i Q(y) / 2), (x_i) ~ PD(alpha, 0), Q ~ BESQ(0) from Exp(rho/2)."""
    total: np.ndarray
    ranked: np.ndarray

    @property
    def extinct(self) -> np.ndarray:
        return self.total == 0.0

    def normalized_largest(self) -> np.ndarray:
        alive = ~self.extinct
        return self.ranked[alive, 0] / self.total[alive]


def pseudo_stationary_reference(stream: RngStream, alpha: float, rho: float, y: float, k: int,
                                size: int = 1) -> PseudoStationarySample:
    rho = check_real("rho", rho, low=0.0, low_open=True)
    y = check_real("y", y, low=0.0)
    q0 = sample_exponential(stream, rho / 2.0, size)
    q = besq_transition(stream, q0, 0.0, y) if y > 0 else q0
    ranked, _ = sample_pd(stream, alpha, 0.0, k, size=size)
    return PseudoStationarySample(total=q / 2.0, ranked=ranked * (q[:, None] / 2.0))


def rho_time_change(levels: Sequence[float], total_mass: Sequence[float], u: float) -> float:
    """rho(u) = inf{y : integral_0^y dz / lambda^z > u} on a level grid, by trapezoid and linear inversion.

    Raises AbsorptionSignal when the mass hits 0 before the integral reaches u.
    """
    u = check_real("u", u, low=0.0)
    y = np.asarray(levels, dtype=float)
    lam = np.asarray(total_mass, dtype=float)
    if y.size < 2 or y.shape != lam.shape or y[0] != 0.0 or np.any(np.diff(y) <= 0):
        raise ParameterDomainError("levels must start at 0 and increase, one mass per level")
    if u == 0.0:
        return 0.0
    dead = np.flatnonzero(lam <= 0)
    stop = dead[0] if dead.size else y.size
    if stop < 2:
        raise AbsorptionSignal(f"total mass is 0 at level {y[stop] if stop < y.size else y[-1]:g}",
                               level=float(y[min(stop, y.size - 1)]))
    clock = cumulative_trapezoid(1.0 / lam[:stop], y[:stop], initial=0.0)
    if clock[-1] < u:
        if dead.size:
            raise AbsorptionSignal(f"total mass hit 0 at level {y[stop]:g} before the clock reached {u:g}",
                                   level=float(y[stop]))
        raise ParameterDomainError(f"level grid ends at {y[-1]:g} before the clock reaches {u:g}")
    return float(np.interp(u, clock, y[:stop]))


@dataclass
class LawEntry:
    spec: LawSpec
    evaluator: Callable[..., float]
    required_vars: set


class LawRegistry:
    """Closed-form laws by name, bindable to parameters for Monte Carlo comparison."""

    def __init__(self):
        self.entries: Dict[str, LawEntry] = {}
        for entry in self._create_entries():
            self.entries[entry.spec.name] = entry

    def names(self) -> List[str]:
        return sorted(self.entries)

    def get(self, name: str) -> LawEntry:
        if name not in self.entries:
            raise KeyError(f"Unknown law {name!r}; known: {', '.join(self.names())}")
        return self.entries[name]

    def bind(self, name: str, **params) -> Callable[[float], float]:
        """Fix every parameter but the transform variable; returns gamma -> value."""
        entry = self.get(name)
        missing = entry.required_vars - set(params)
        if missing:
            raise ValueError(f"Missing required parameters for {name}: {missing}")
        if entry.spec.kind == "laplace_transform":
            return lambda gamma: entry.evaluator(gamma=gamma, **params)
        return partial(entry.evaluator, **params)

    def to_json(self) -> str:
        return json.dumps([self.entries[n].spec.model_dump() for n in self.names()], indent=2)

    def _create_entries(self) -> List[LawEntry]:
        return [
            LawEntry(LawSpec(
                name="leftmost-semigroup", kind="laplace_transform",
                anchor="Laplace transform of the leftmost spindle process",
                parameters={"x": ">= 0", "y": "> 0", "d": "(0, 1)"}, domain="gamma >= 0",
                formula="(1+2gy)^(1-d) exp(-gx/(1+2gy)) - (2gy)^(1-d) exp(-x/2y)",
            ), lt_leftmost_semigroup, {"x", "y", "d"}),
            LawEntry(LawSpec(
                name="kernel-p-y", kind="laplace_transform",
                anchor="single-atom transition kernel of the measure-valued process",
                parameters={"x": "> 0", "y": "> 0", "d": "(0, 1)"}, domain="gamma >= 0",
                formula="(1+gy)^(1-d) (exp(-gx/(1+gy)) - exp(-x/y))",
            ), lt_kernel_p_y, {"x", "y", "d"}),
            LawEntry(LawSpec(
                name="type1-leftmost", kind="laplace_transform",
                anchor="leftmost block of the type-1 transition kernel, given survival",
                parameters={"b": "> 0", "y": "> 0", "alpha": "(0, 1)"}, domain="gamma >= 0",
                formula="(1+g/r)^alpha (exp(b r^2/(r+g)) - 1) / (exp(b r) - 1), r = 1/2y",
            ), lt_type1_leftmost, {"b", "y", "alpha"}),
            LawEntry(LawSpec(
                name="phi-y-exponential", kind="laplace_transform",
                anchor="evolution of exponential test functions under the measure-valued kernel",
                parameters={"x": "> 0", "y": "> 0", "d": "(0, 1)"}, domain="gamma >= 0",
                formula="exp(-x/y) + kernel-p-y / (1+gy)^(1-d)",
            ), lambda gamma, x, y, d: phi_y_exponential(gamma, x, y, d), {"x", "y", "d"}),
            LawEntry(LawSpec(
                name="besq", kind="laplace_transform", anchor="BESQ(delta) marginal",
                parameters={"x": ">= 0", "delta": ">= 0", "y": ">= 0"}, domain="gamma >= 0",
                formula="(1+2gy)^(-delta/2) exp(-gx/(1+2gy))",
            ), lt_besq, {"x", "delta", "y"}),
            LawEntry(LawSpec(
                name="pi-y-tail", kind="tail_rate",
                anchor="Lévy measure of the subordinator of skewer block sizes",
                parameters={"y": "> 0", "d": "(0, 1)"}, domain="epsilon > 0",
                formula="y^(d-1) (x^(d-1) e^(-x)/Gamma(d) - Q(d, x)), x = epsilon/y",
            ), pi_y_tail, {"y", "d"}),
            LawEntry(LawSpec(
                name="besq0-extinction", kind="density", anchor="BESQ(0) absorption by time y",
                parameters={"x": ">= 0", "y": "> 0"}, formula="exp(-x/2y)",
            ), besq0_extinction, {"x", "y"}),
            LawEntry(LawSpec(
                name="exp-start-extinction", kind="density",
                anchor="extinction of the pseudo-stationary total mass",
                parameters={"rho": "> 0", "y": ">= 0"}, formula="rho y / (rho y + 1)",
            ), exp_start_extinction, {"rho", "y"}),
            LawEntry(LawSpec(
                name="pseudo-stationary", kind="sampler",
                anchor="PD(alpha, 0) masses scaled by BESQ(0) from Exp(rho/2), halved",
                parameters={"alpha": "(0, 1)", "rho": "> 0", "y": ">= 0", "k": ">= 1"},
            ), pseudo_stationary_reference, {"alpha", "rho", "y", "k"}),
            LawEntry(LawSpec(
                name="poisson-dirichlet", kind="sampler", anchor="ranked GEM(alpha, theta) sticks",
                parameters={"alpha": "[0, 1)", "theta": "0 or alpha", "k": ">= 1"},
            ), sample_pd, {"alpha", "theta", "k"}),
        ]


law_registry = LawRegistry()

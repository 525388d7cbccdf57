import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import gamma as gamma_fn

from ipdiff.levy import (
    compensating_drift,
    inf_excursion_rate,
    laplace_exponent,
    levy_jump_rate,
    levy_tail,
    sample_ascent,
    sample_descent_time,
    sample_jump_sizes,
    sup_excursion_rate,
)
from ipdiff.models import ParameterDomainError


@pytest.mark.parametrize("a", [0.3, 0.5, 0.8])
def test_levy_measure_matches_laplace_exponent(a):
    c = 1.3
    integrand = lambda z: (math.exp(-c * z) - 1 + c * z) * levy_jump_rate(z, a)
    value = quad(integrand, 0, 1)[0] + quad(integrand, 1, math.inf)[0]
    assert value == pytest.approx(float(laplace_exponent(c, a)), rel=1e-5)


def test_tail_and_drift_integrals(alpha):
    eps = 0.01
    tail = quad(lambda z: levy_jump_rate(z, alpha), eps, math.inf)[0]
    mean = quad(lambda z: z * levy_jump_rate(z, alpha), eps, math.inf)[0]
    assert levy_tail(eps, alpha) == pytest.approx(tail, rel=1e-6)
    assert compensating_drift(eps, alpha) == pytest.approx(-mean, rel=1e-6)


def test_jump_rate_domain(alpha):
    with pytest.raises(ParameterDomainError):
        levy_jump_rate(0.0, alpha)


def test_jump_sizes_above_eps(stream, alpha):
    assert np.all(sample_jump_sizes(stream, 0.05, alpha, 10_000) >= 0.05)


def test_excursion_rate_ratio(alpha):
    y = np.array([0.1, 0.4])
    ratio = inf_excursion_rate(y, alpha) / sup_excursion_rate(y, alpha)
    assert np.allclose(ratio, 2.0 ** alpha)


def test_descent_time_laplace(stream, alpha):
    t = sample_descent_time(stream, 1.0, alpha, size=100_000)
    inverse_exponent = (2.0 ** alpha * gamma_fn(1.0 + alpha)) ** (1.0 / (1.0 + alpha))
    assert abs(np.mean(np.exp(-t)) - math.exp(-inverse_exponent)) < 0.01


def test_ascent_crosses_level(stream, alpha):
    for s in stream.spawn(200):
        undershoot, jump = sample_ascent(s, 0.3, alpha)
        assert undershoot > 0
        assert jump > undershoot

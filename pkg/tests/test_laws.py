import json
import math

import numpy as np
import pytest

from ipdiff.besq import besq_transition
from ipdiff.laws import (
    exp_start_extinction,
    law_registry,
    lt_besq,
    lt_kernel_p_y,
    lt_leftmost_semigroup,
    lt_type1_leftmost,
    phi_y_denominator,
    phi_y_denominator_quad,
    phi_y_exponential,
    pi_y_tail,
    pi_y_tail_asymptote,
    pi_y_tail_laguerre,
    pi_y_tail_quad,
    pseudo_stationary_reference,
    rho_time_change,
    sample_gem,
    sample_pd,
    sample_type1_kernel,
    type1_survival,
)
from ipdiff.models import AbsorptionSignal, ParameterDomainError
from ipdiff.scaffolding import sample_leftmost_spindle_process
from ipdiff.verification import mc_laplace_compare

GAMMAS = (0.5, 1.0, 2.0)


def test_leftmost_semigroup_values():
    assert lt_leftmost_semigroup(0.0, 1.0, 1.0, 0.5) == pytest.approx(math.sqrt(3) - math.sqrt(2))
    assert lt_leftmost_semigroup(1.0, 1.0, 0.0, 0.5) == pytest.approx(1.0)


def test_kernel_value():
    assert lt_kernel_p_y(1.0, 1.0, 1.0, 0.5) == pytest.approx(math.sqrt(2) * (math.exp(-0.5) - math.exp(-1.0)))
    # at gamma = 0 only the survival probability is left
    assert lt_kernel_p_y(1.0, 2.0, 0.0, 0.3) == pytest.approx(-math.expm1(-0.5))


def test_type1_leftmost_value():
    expected = math.sqrt(2) * math.expm1(0.5) / math.expm1(1.0)
    assert lt_type1_leftmost(1.0, 0.5, 1.0, 0.5) == pytest.approx(expected)
    assert lt_type1_leftmost(1.0, 0.5, 0.0, 0.5) == pytest.approx(1.0)
    # large b r stays finite
    assert math.isfinite(lt_type1_leftmost(1e4, 1e-3, 1.0, 0.5))


def test_type1_survival():
    assert type1_survival(1.0, 0.5) == pytest.approx(1.0 - math.exp(-1.0))


@pytest.mark.parametrize("gamma,y,d", [(0.5, 1.0, 0.5), (2.0, 0.3, 0.2), (1.0, 2.0, 0.8)])
def test_denominator_closed_form(gamma, y, d):
    assert phi_y_denominator(gamma, y, d) == pytest.approx(phi_y_denominator_quad(gamma, y, d), rel=1e-5)


@pytest.mark.parametrize("gamma,x,y", [(0.5, 1.0, 1.0), (2.0, 0.3, 0.5)])
def test_exponential_fixed_point(gamma, x, y):
    assert phi_y_exponential(gamma, x, y, 0.4) == pytest.approx(math.exp(-gamma * x / (1.0 + gamma * y)))


@pytest.mark.parametrize("eps,y,d", [(0.5, 1.0, 0.5), (1.0, 2.0, 0.3), (1.0, 0.5, 0.7)])
def test_pi_tail_three_ways(eps, y, d):
    closed = pi_y_tail(eps, y, d)
    assert closed == pytest.approx(pi_y_tail_quad(eps, y, d), rel=1e-8)
    assert closed == pytest.approx(pi_y_tail_laguerre(eps, y, d), rel=1e-4)


def test_pi_tail_asymptote():
    y, d = 1.0, 0.5
    assert pi_y_tail(40.0 * y, y, d) == pytest.approx(pi_y_tail_asymptote(40.0 * y, y, d), rel=0.05)


def test_pi_tail_needs_positive_epsilon():
    with pytest.raises(ParameterDomainError):
        pi_y_tail(0.0, 1.0, 0.5)


def test_lt_besq_at_zero_time():
    assert lt_besq(2.0, 3.0, 0.0, 0.7) == pytest.approx(math.exp(-1.4))


def test_besq_transform_matches_sampler(stream):
    sample = besq_transition(stream, 1.0, 2.0, 0.5, size=20_000)
    report = mc_laplace_compare(sample, GAMMAS, law_registry.bind("besq", x=1.0, delta=2.0, y=0.5))
    assert report.passed, report.z_scores


@pytest.mark.parametrize("x", [0.5, 1.0])
def test_leftmost_transform_matches_sampler(streams, alpha, x):
    sample = np.array([sample_leftmost_spindle_process(streams(i), x, [1.0], alpha)[0] for i in range(3000)])
    report = mc_laplace_compare(sample, GAMMAS, law_registry.bind("leftmost-semigroup", x=x, y=1.0, d=1.0 - alpha))
    assert report.passed, report.z_scores


def test_pd_ranked(stream):
    ranked, residual = sample_pd(stream, 0.5, 0.0, 5, size=500)
    assert ranked.shape == (500, 5)
    assert np.all(np.diff(ranked, axis=1) <= 0)
    assert np.all(ranked.sum(axis=1) <= 1.0 + 1e-12)
    assert residual.shape == (500,)


def test_gem_first_stick(stream):
    sticks, _ = sample_gem(stream, 0.5, 0.5, 3, size=20_000)
    assert abs(sticks[:, 0].mean() - 1.0 / 3.0) < 0.01


def test_gem_domain(stream):
    with pytest.raises(ParameterDomainError):
        sample_gem(stream, 0.5, -0.6, 3)
    with pytest.raises(ParameterDomainError):
        sample_gem(stream, 0.5, 0.0, 0)


def test_type1_kernel_draw(stream):
    draw = sample_type1_kernel(stream, 1.0, 0.5, 0.5, k=3, size=20_000)
    p = type1_survival(1.0, 0.5)
    assert abs(draw.survived.mean() - p) < 4 * math.sqrt(p * (1 - p) / 20_000)
    assert np.all(draw.rest_mass[~draw.survived] == 0.0)
    assert np.all(draw.rest_ranked.sum(axis=1) <= draw.rest_mass + 1e-12)


def test_pseudo_stationary_extinction(stream):
    sample = pseudo_stationary_reference(stream, 0.5, 1.0, 1.0, k=3, size=20_000)
    assert abs(sample.extinct.mean() - exp_start_extinction(1.0, 1.0)) < 0.02
    largest = sample.normalized_largest()
    assert np.all((largest > 0) & (largest <= 1))


def test_rho_time_change():
    assert rho_time_change([0.0, 1.0, 2.0], [1.0, 1.0, 1.0], 0.5) == pytest.approx(0.5)
    assert rho_time_change([0.0, 1.0, 2.0], [2.0, 2.0, 2.0], 0.5) == pytest.approx(1.0)
    assert rho_time_change([0.0, 1.0], [1.0, 1.0], 0.0) == 0.0


def test_rho_time_change_absorbed():
    with pytest.raises(AbsorptionSignal) as info:
        rho_time_change([0.0, 1.0, 2.0], [1.0, 1.0, 0.0], 5.0)
    assert info.value.level == 2.0
    with pytest.raises(ParameterDomainError):
        rho_time_change([0.0, 1.0, 2.0], [1.0, 1.0, 1.0], 5.0)


def test_registry():
    assert "leftmost-semigroup" in law_registry.names()
    assert law_registry.bind("leftmost-semigroup", x=0.0, y=1.0, d=0.5)(1.0) == pytest.approx(
        math.sqrt(3) - math.sqrt(2))
    assert law_registry.bind("besq0-extinction", x=1.0, y=0.5)() == pytest.approx(math.exp(-1.0))
    with pytest.raises(ValueError):
        law_registry.bind("kernel-p-y", x=1.0)
    with pytest.raises(KeyError):
        law_registry.get("no-such-law")
    names = [entry["name"] for entry in json.loads(law_registry.to_json())]
    assert names == sorted(names)

import math

import numpy as np
import pytest

from ipdiff.models import ParameterDomainError
from ipdiff.rng import (
    RngStream,
    sample_beta,
    sample_gamma,
    sample_noncentral_chisq,
    sample_poisson,
    sample_positive_stable,
)
from ipdiff.verification import ks_two_sample


def test_same_key_same_sequence():
    a = sample_gamma(RngStream(7, 3), 0.5, 2.0, size=100)
    b = sample_gamma(RngStream(7, 3), 0.5, 2.0, size=100)
    assert np.array_equal(a, b)


def test_distinct_index_differs():
    a = sample_gamma(RngStream(7, 3), 1.0, 1.0, size=10)
    b = sample_gamma(RngStream(7, 4), 1.0, 1.0, size=10)
    assert not np.array_equal(a, b)


def test_spawn_continues_numbering():
    s = RngStream(1, 2)
    first = s.spawn(2)
    nxt = s.child()
    assert [c.path for c in first] == [(0,), (1,)]
    assert nxt.path == (2,)
    assert RngStream(1, 2).spawn(3)[2].path == nxt.path


@pytest.mark.parametrize("seed", [-1, 2**64, 1.5])
def test_bad_seed_rejected(seed):
    with pytest.raises(ParameterDomainError):
        RngStream(seed)


def test_gamma_small_shape_moments(stream):
    x = sample_gamma(stream, 0.5, 2.0, size=200_000)
    se = math.sqrt(0.125 / x.size)
    assert abs(x.mean() - 0.25) < 4 * se
    assert abs(x.var() - 0.125) / 0.125 < 0.05


@pytest.mark.parametrize("shape,rate", [(0.0, 1.0), (1.0, 0.0), (float("nan"), 1.0), (1.0, float("inf"))])
def test_gamma_domain(stream, shape, rate):
    with pytest.raises(ParameterDomainError):
        sample_gamma(stream, shape, rate)


def test_poisson_zero_mean(stream):
    assert np.all(sample_poisson(stream, 0.0, size=1000) == 0)


def test_poisson_negative_mean(stream):
    with pytest.raises(ParameterDomainError):
        sample_poisson(stream, -1.0)


def test_poisson_zero_probability(stream):
    x = sample_poisson(stream, 0.1, size=200_000)
    p = math.exp(-0.1)
    assert abs(np.mean(x == 0) - p) < 4 * math.sqrt(p * (1 - p) / x.size)


def test_noncentral_chisq_degenerate(stream):
    assert sample_noncentral_chisq(stream, 0.0, 0.0) == 0.0


def test_noncentral_chisq_mean(stream):
    x = sample_noncentral_chisq(stream, 1.0, 3.0, size=200_000)
    se = math.sqrt(2 * (1 + 2 * 3) / x.size)
    assert abs(x.mean() - 4.0) < 4 * se


def test_noncentral_chisq_central_case_is_gamma(streams):
    a = sample_noncentral_chisq(streams(1), 3.0, 0.0, size=5000)
    b = sample_gamma(streams(2), 1.5, 0.5, size=5000)
    _, p = ks_two_sample(a, b)
    assert p > 0.01


def test_beta_moments(stream):
    x = sample_beta(stream, 0.5, 0.5, size=200_000)
    assert abs(x.mean() - 0.5) < 4 * math.sqrt(0.125 / x.size)


def test_positive_stable_laplace(stream):
    s = sample_positive_stable(stream, 0.5, size=100_000)
    assert abs(np.mean(np.exp(-s)) - math.exp(-1.0)) < 0.01

import math

import numpy as np
import pytest

from ipdiff.models import ParameterDomainError, ResolutionError, TestReport
from ipdiff.rng import RngStream
from ipdiff.verification import (
    Summary,
    fit_power_law,
    hill_tail_index,
    hill_test,
    ks_report,
    ks_two_sample,
    laplace_z_scores,
    mc_laplace_compare,
    moment_test,
    null_rejection_rate,
    proportion_test,
    rate_ratio_test,
)

GAMMAS = (0.5, 1.0, 2.0)


@pytest.fixture
def gen(stream):
    return stream.generator


def test_ks_same_and_different(gen):
    a = gen.standard_normal(500)
    _, p_same = ks_two_sample(a, gen.standard_normal(500))
    _, p_diff = ks_two_sample(a, gen.standard_normal(500) + 1.0)
    assert p_same > 1e-3
    assert p_diff < 1e-6


def test_ks_needs_enough_points(gen):
    with pytest.raises(ParameterDomainError):
        ks_two_sample(gen.random(10), gen.random(100))


def test_ks_report_expectations(gen):
    a, b = gen.standard_normal(400), gen.standard_normal(400) + 1.0
    assert ks_report("shifted", "", a, b, expect_same=False).passed
    assert not ks_report("shifted", "", a, b, expect_same=True).passed


def test_hill_on_pareto(gen):
    sample = gen.random(100_000) ** (-1.0 / 1.5)
    est = hill_tail_index(sample, bootstrap=0)
    assert est.index == pytest.approx(1.5, abs=0.3)
    assert est.heavy_tailed
    assert hill_test("pareto", "", sample, 1.5, 0.3, stream=RngStream(1)).passed
    assert not hill_test("pareto-wrong", "", sample, 3.0, 0.3, stream=RngStream(1)).passed


def test_hill_needs_a_tail(gen):
    with pytest.raises(ResolutionError):
        hill_tail_index(gen.random(1000) ** -2.0)


def test_laplace_compare(gen):
    sample = gen.standard_exponential(20_000)
    assert mc_laplace_compare(sample, GAMMAS, lambda g: 1.0 / (1.0 + g)).passed
    assert not mc_laplace_compare(sample, GAMMAS, lambda g: 1.0 / (1.0 + 2.0 * g)).passed


def test_laplace_sub_probability():
    sample = np.ones(100)
    present = np.zeros(100, dtype=bool)
    means, expected, z = laplace_z_scores(sample, GAMMAS, lambda g: 0.0, present=present)
    assert np.all(means == 0.0) and np.all(z == 0.0)
    with pytest.raises(ParameterDomainError):
        laplace_z_scores(sample, GAMMAS, lambda g: 0.0, present=present[:10])


def test_moment_test(gen):
    sample = gen.standard_normal(10_000)
    assert moment_test(sample, 0.0, 1.0).passed
    assert not moment_test(sample, 0.0, 2.0).passed
    assert not moment_test(sample, 0.5).passed


def test_moment_test_on_folded_summary(gen):
    sample = 1.0 + 2.0 * gen.standard_normal(3_000)
    folded = Summary.merge_all(Summary.of(chunk) for chunk in np.array_split(sample, 7))
    assert folded.count == sample.size
    direct, merged = moment_test(sample, 1.0, 4.0), moment_test(folded, 1.0, 4.0)
    assert merged.passed == direct.passed
    assert merged.statistic == pytest.approx(direct.statistic)
    assert merged.metadata["variance"] == pytest.approx(direct.metadata["variance"])


def test_proportion_test():
    assert proportion_test(50, 100, 0.5).passed
    assert not proportion_test(90, 100, 0.5).passed
    with pytest.raises(ParameterDomainError):
        proportion_test(1, 0, 0.5)
    with pytest.raises(ParameterDomainError):
        proportion_test(1, 10, 1.5)


def test_power_law_fit_exact():
    y = np.array([0.1, 0.2, 0.4, 0.8])
    fit = fit_power_law(y, 100.0 * y ** -0.5)
    assert fit.slope == pytest.approx(-0.5)
    assert fit.amplitude == pytest.approx(100.0)


def test_power_law_fit_rejects():
    with pytest.raises(ParameterDomainError):
        fit_power_law([0.1, 0.2, 0.4], [3.0, 0.0, 1.0])
    with pytest.raises(ParameterDomainError):
        fit_power_law([0.1, 0.2], [3.0, 1.0])


def test_rate_ratio_exact():
    y = np.array([0.05, 0.1, 0.2, 0.4])
    rate = lambda v: v ** -0.5
    assert rate_ratio_test(y, 50.0 * rate(y), rate, exposure=50.0).passed
    assert not rate_ratio_test(y, 80.0 * rate(y), rate, exposure=50.0).passed
    report = rate_ratio_test(y, 2.0 * 10.0 * rate(y), rate, exposure=10.0,
                             reference_counts=20.0 * rate(y), reference_exposure=20.0, expected_ratio=2.0)
    assert report.passed
    assert report.metadata["ratio"] == pytest.approx(2.0)


def test_summary_merge():
    merged = Summary.merge_all([Summary.of([1.0, 2.0]), Summary.of([3.0])])
    assert merged.count == 3
    assert merged.mean == pytest.approx(2.0)
    assert merged.variance == pytest.approx(1.0)
    assert list(merged.sorted_values()) == [1.0, 2.0, 3.0]
    assert math.isnan(Summary().mean)


def test_null_rejection_rate(streams):
    always = lambda s: TestReport(name="t", anchor="", passed=True, tolerance="")
    never = lambda s: TestReport(name="t", anchor="", passed=False, tolerance="")
    pool = [streams(i) for i in range(4)]
    assert null_rejection_rate(always, pool) == 0.0
    assert null_rejection_rate(never, pool) == 1.0

import math

import numpy as np
import pytest

from ipdiff.besq import Spindle, spindle_bridge
from ipdiff.bessel_side import (
    Excursion,
    beta_from_bessel,
    brownian_residual_qv,
    build_R_H_from_scaffolding,
    compute_H_direct,
    conditional_maximum_cdf,
    crosscheck_constructions,
    dump_excursions_ndjson,
    excursion_from_spindle,
    excursion_maxima,
    excursion_maxima_test,
    lambda_minus_profile,
    level_local_time,
    residual_qv_slope,
    residual_qv_slope_se,
    rh_local_time_increments,
    round_trip_error,
    sample_bessel_path,
    spindle_from_excursion,
)
from ipdiff.config import ROUND_TRIP_TOLERANCE
from ipdiff.execution_engine import execute_with_retry
from ipdiff.models import ParameterDomainError, ResolutionError
from ipdiff.rng import RngStream
from ipdiff.scaffolding import clade_from_block, excursion_summaries, run_cycles
from ipdiff.skewer import skewer
from ipdiff.utils import read_ndjson

PARABOLA = Spindle.from_function(lambda z: z * (1.0 - z), 1.0, 1e-3)


@pytest.fixture
def bessel_path(stream, alpha):
    return execute_with_retry(
        lambda s, horizon: sample_bessel_path(s, alpha, 0.01, 0.5, y_calib=0.2, horizon=horizon), stream, 200.0)


def test_excursion_of_parabola():
    e = excursion_from_spindle(PARABOLA)
    assert e.lifetime == pytest.approx(1.0 / 6.0, rel=1e-5)
    assert e.maximum == pytest.approx(0.125, rel=1e-6)
    assert e.heights[-1] == pytest.approx(1.0)


def test_round_trip():
    assert round_trip_error(PARABOLA) < ROUND_TRIP_TOLERANCE
    back = spindle_from_excursion(excursion_from_spindle(PARABOLA))
    assert back.zeta == pytest.approx(1.0, rel=0.01)


def test_round_trip_of_sampled_spindles(streams, alpha):
    for i in range(25):
        f = spindle_bridge(streams(i), 1.0, alpha, dt=1e-4)
        back = spindle_from_excursion(excursion_from_spindle(f))
        assert back.zeta == pytest.approx(f.zeta, rel=1e-6)
        assert np.allclose(back.profile.times, f.profile.times, atol=1e-9)
        assert round_trip_error(f) < ROUND_TRIP_TOLERANCE


def test_too_few_points():
    e = Excursion(np.array([0.0, 0.1, 0.2]), np.array([0.0, 0.5, 0.0]))
    with pytest.raises(ResolutionError):
        spindle_from_excursion(e)


def test_compute_H_constant_R():
    t = np.linspace(0.0, 1.0, 1001)
    H = compute_H_direct(t, np.ones_like(t), 0.5, baseline_zero=True)
    assert H == pytest.approx(t / 2.0)


def test_compute_H_coarse_grid():
    t = np.linspace(0.0, 1.0, 6)
    with pytest.raises(ResolutionError):
        compute_H_direct(t, np.array([0.0, 0.1, 0.5, 1.0, 2.0, 0.0]), 0.5)


def test_compute_H_shape_mismatch():
    with pytest.raises(ParameterDomainError):
        compute_H_direct(np.zeros(3), np.zeros(4), 0.5)


def test_clade_is_rejected(stream, alpha):
    clade = clade_from_block(stream, 1.0, alpha, 0.01, levels=[0.0])
    with pytest.raises(ParameterDomainError):
        build_R_H_from_scaffolding(clade)


def test_bessel_blocks_match_skewer(bessel_path):
    for y in (0.1, 0.3):
        assert beta_from_bessel(bessel_path, y) == skewer(bessel_path.source, y)


def test_level_local_time_is_increasing(bessel_path):
    llt = level_local_time(bessel_path, 0.1)
    assert np.all(np.diff(llt.times) >= 0)
    assert llt.at(bessel_path.end_time + 1.0) == pytest.approx(llt.total)


def test_bessel_path_shape(bessel_path):
    assert bessel_path.has_grid
    assert bessel_path.d == 0.5
    assert bessel_path.end_time == pytest.approx(bessel_path.lifetime.sum())
    assert np.all(np.diff(bessel_path.origin_times()) >= 0)
    assert excursion_maxima(bessel_path).size == bessel_path.n
    elapsed, qv = brownian_residual_qv(bessel_path)
    assert elapsed == pytest.approx(bessel_path.end_time)
    assert qv >= 0.0


def test_level0_increments_per_rh_excursion(stream, alpha):
    X = execute_with_retry(lambda s, horizon: run_cycles(s, alpha, 0.01, 200, levels=[0.0], spindles="levels",
                                                         ceiling=0.05, floor=-0.05, horizon=horizon), stream, 200.0)
    path = build_R_H_from_scaffolding(X, stream.child())
    increments = rh_local_time_increments(path, 0.0)
    table = excursion_summaries(X)
    assert increments.size == path.origin_times().size - 1
    assert increments == pytest.approx(table.central_mass[table.complete])
    assert increments.sum() <= level_local_time(path, 0.0).total + 1e-12


def test_excursion_dump(bessel_path, tmp_path):
    records = read_ndjson(dump_excursions_ndjson(bessel_path, tmp_path / "rh.ndjson"))
    assert records[0]["kind"] == "bessel_path"
    assert len(records) == 1 + bessel_path.n


def test_qv_slope():
    assert residual_qv_slope([(1.0, 2.0), (2.0, 4.0)]) == pytest.approx(2.0)
    with pytest.raises(ResolutionError):
        residual_qv_slope([(0.0, 0.0)])


def test_qv_slope_standard_error():
    assert residual_qv_slope_se([(1.0, 2.0), (2.0, 4.0)]) == pytest.approx(0.0)
    assert residual_qv_slope_se([(1.0, 1.0), (1.0, 3.0)]) == pytest.approx(1.0)
    assert math.isnan(residual_qv_slope_se([(1.0, 2.0)]))


def test_maxima_law(stream):
    d = 0.5
    maxima = 0.1 * stream.generator.random(2000) ** (-1.0 / (2.0 - d))
    assert conditional_maximum_cdf(d)(1.0) == 0.0
    assert excursion_maxima_test(maxima, 0.2, d).passed


def test_crosscheck_at_zero_is_vacuous(stream, alpha):
    report = crosscheck_constructions(stream, alpha, 0.0, [0.1], 0.01, replicates=10)
    assert report.passed
    assert report.metadata["vacuous"] is True


def test_lambda_minus_profile(alpha):
    levels = [0.0, 0.5, 1.0]
    profile = lambda_minus_profile(RngStream(5, 0), alpha, 0.05, levels)
    assert profile.shape == (3,)
    assert np.all(profile >= 0)
    assert np.array_equal(profile, lambda_minus_profile(RngStream(5, 0), alpha, 0.05, levels))

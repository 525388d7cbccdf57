import math

import numpy as np
import pytest

from ipdiff.execution_engine import execute_with_retry
from ipdiff.models import HorizonExhausted, ParameterDomainError
from ipdiff.rng import RngStream
from ipdiff.scaffolding import (
    Clade,
    clade_from_block,
    default_y_calib,
    dump_scaffolding_ndjson,
    dump_scaffolding_npz,
    excursion_summaries,
    first_passage,
    leftmost_spindle_process,
    local_time_zero,
    run_cycles,
    sample_leftmost_spindle_process,
    sample_marked_scaffolding,
    stitch,
    stop_at_local_time,
    type0_skewer_run,
    type1_scaffolding,
    type1_skewer_run,
)
from ipdiff.skewer import IntervalPartition, skewer
from ipdiff.utils import read_ndjson
from ipdiff.walker import CEILING

EPS = 0.01


def test_marked_scaffolding_reconstructs(stream, alpha):
    X = sample_marked_scaffolding(stream, alpha, EPS, horizon=0.5, dt=1e-3)
    assert X.reconstruction_error() < 1e-9
    assert X.spindles.n == X.n_jumps
    assert np.allclose(X.spindle_zeta, X.jump_sizes)
    assert X.spindle_post == pytest.approx(X.spindle_pre + X.spindle_zeta)


def test_same_stream_same_path(alpha):
    a = sample_marked_scaffolding(RngStream(3, 1), alpha, EPS, horizon=0.2, spindles="none")
    b = sample_marked_scaffolding(RngStream(3, 1), alpha, EPS, horizon=0.2, spindles="none")
    assert np.array_equal(a.event_times, b.event_times)
    assert np.array_equal(a.event_post, b.event_post)


def test_first_passage(stream, alpha):
    X = sample_marked_scaffolding(stream, alpha, EPS, horizon=1.0, x0=0.1, spindles="none")
    assert first_passage(X, 1.0) == 0.0
    with pytest.raises(HorizonExhausted):
        first_passage(X, -1e6)


@pytest.mark.parametrize("b", [0.3, 1.0])
def test_clade_starts_with_its_block(stream, alpha, b):
    clade = clade_from_block(stream, b, alpha, EPS, levels=[0.0])
    assert isinstance(clade, Clade)
    assert clade.has_initial_spindle
    assert clade.stop_reason == "first_passage"
    assert skewer(clade, 0.0).blocks.tolist() == [pytest.approx(b)]


def test_stitch_places_clades_side_by_side(streams, alpha):
    clades = [clade_from_block(streams(i), 0.5, alpha, EPS, levels=[0.0, 0.1]) for i in range(3)]
    X = stitch(clades)
    assert X.horizon == pytest.approx(sum(c.horizon for c in clades))
    assert X.spindles.n == sum(c.spindles.n for c in clades)
    assert skewer(X, 0.0).blocks.tolist() == pytest.approx([0.5, 0.5, 0.5])


def test_type1_mean_mass(streams, alpha):
    beta0 = IntervalPartition.from_blocks([1.0])
    masses = np.array([type1_skewer_run(streams(i), beta0, [0.5], alpha, 1e-3)[0].mass for i in range(200)])
    # total mass follows BESQ_1(0): mean 1, variance 4 * 0.5
    assert abs(masses.mean() - 1.0) < 0.4


def test_type1_all_blocks_below_eps(stream, alpha):
    beta0 = IntervalPartition.from_blocks([1e-4, 2e-4])
    assert type1_scaffolding(stream, beta0, [0.0, 0.5], alpha, EPS) is None
    parts = type1_skewer_run(stream, beta0, [0.0, 0.5], alpha, EPS)
    assert all(p.count == 0 for p in parts)


def test_type0_levels_checked(stream, alpha):
    with pytest.raises(ParameterDomainError):
        type0_skewer_run(stream, 0.5, [0.25, 1.0], alpha, EPS)


def test_type0_partitions_have_no_deficit(stream, alpha):
    parts = type0_skewer_run(stream, 0.5, [0.0, 0.25], alpha, EPS)
    assert len(parts) == 2
    assert all(p.deficit == 0.0 for p in parts)


def test_leftmost_process_from_mass(stream, alpha):
    values = sample_leftmost_spindle_process(stream, 1.0, [0.0, 0.5, 1.0, 2.0], alpha)
    assert values.shape == (4,)
    assert values[0] == 1.0
    assert np.all(values[1:] >= 0)


def test_leftmost_process_from_zero(stream, alpha):
    values = sample_leftmost_spindle_process(stream, 0.0, [0.0, 0.5], alpha)
    assert values[0] == 0.0
    assert values[1] > 0.0


def test_leftmost_of_clade(stream, alpha):
    clade = clade_from_block(stream, 1.0, alpha, EPS, levels=[0.0])
    assert leftmost_spindle_process(clade, [0.0])[0] == pytest.approx(1.0)


def test_local_time_steps(stream, alpha):
    X = sample_marked_scaffolding(stream, alpha, EPS, horizon=2.0, spindles="none")
    lt = local_time_zero(X, 0.05)
    assert np.all(np.diff(lt.step_times) > 0)
    assert lt.total == pytest.approx(lt.step_times.size / lt.rate)
    if lt.step_times.size:
        assert lt.inverse(0.0) == lt.step_times[0]
    with pytest.raises(HorizonExhausted):
        lt.inverse(lt.total + 1.0)


def test_stop_at_local_time(stream, alpha):
    X = stop_at_local_time(stream, alpha, EPS, 0.5, levels=[0.1, 0.2])
    assert X.stop_reason == "local_time"
    assert X.end_level == 0.0
    assert X.meta["y_calib"] == pytest.approx(0.05)


def test_ceiling_pruning_keeps_the_zero_set(stream, alpha):
    X = run_cycles(stream, alpha, EPS, 40, ceiling=0.05, floor=-0.05)
    assert X.meta["ceiling_skips"] > 0
    zero_times, _ = X.zeros()
    assert zero_times.size == 41
    table = excursion_summaries(X)
    assert len(table) == 41
    visited = X.event_pre[X.event_kind != CEILING]
    assert table.infimum.min() >= min(visited.min(), 0.0)


def test_local_time_counts_match_calibration_under_pruning(stream, alpha):
    X = execute_with_retry(
        lambda s, horizon: stop_at_local_time(s, alpha, EPS, 5.0, y_calib=0.1, levels=[0.1, 0.2],
                                              interpolate=False, horizon=horizon), stream)
    assert X.meta["ceiling_skips"] > 0
    lt = local_time_zero(X, 0.1)
    assert lt.step_times.size == X.meta["calibrated_arrivals"]
    table = excursion_summaries(X)
    assert int(np.sum(table.supremum[table.complete] > 0.1)) == X.meta["calibrated_arrivals"]


def test_default_y_calib():
    assert default_y_calib([0.0, 0.2, 1.0]) == pytest.approx(0.1)
    assert default_y_calib(None) == 1.0


def test_excursion_summaries(stream, alpha):
    X = run_cycles(stream, alpha, EPS, 6, levels=[0.0], spindles="levels")
    table = excursion_summaries(X)
    assert len(table) == 7
    assert np.all(table.supremum >= 0) and np.all(table.infimum <= 0)
    assert table.complete.tolist() == [True] * 6 + [False]
    assert np.all(np.isfinite(table.central_mass))
    assert np.all(table.end >= table.start)
    assert len(table.records()) == 7


def test_excursion_mass_unknown_without_spindles(stream, alpha):
    X = run_cycles(stream, alpha, EPS, 2)
    assert np.all(np.isnan(excursion_summaries(X).central_mass))


def test_ndjson_dump(stream, alpha, tmp_path):
    X = sample_marked_scaffolding(stream, alpha, 0.05, horizon=0.5, dt=1e-3)
    records = read_ndjson(dump_scaffolding_ndjson(X, tmp_path / "x.ndjson", params={"seed": 1}))
    assert records[0]["kind"] == "scaffolding"
    assert records[0]["params"] == {"seed": 1}
    assert len(records) == 1 + X.spindles.n
    for rec in records[1:]:
        assert rec["offsets"][0] == 0.0
        assert math.isclose(rec["offsets"][-1], rec["zeta"])


def test_npz_dump(stream, alpha, tmp_path):
    X = sample_marked_scaffolding(stream, alpha, 0.05, horizon=0.5, dt=1e-3)
    with np.load(dump_scaffolding_npz(X, tmp_path / "x.npz")) as data:
        assert np.array_equal(data["event_times"], X.event_times)
        assert data["zeta"].size == X.spindles.n
        assert data["scalars"][0] == alpha

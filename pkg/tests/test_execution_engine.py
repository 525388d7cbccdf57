import pytest

from ipdiff.execution_engine import execute_with_retry, replicate_streams, run_replicates
from ipdiff.models import HorizonExhausted
from ipdiff.rng import sample_uniform


def needs_long_horizon(stream, horizon):
    if horizon < 4.0:
        raise HorizonExhausted(f"horizon {horizon} too short")
    return horizon


def draw(stream, horizon):
    return float(sample_uniform(stream))


def never_finishes(stream, horizon):
    raise HorizonExhausted("never")


def test_retry_grows_horizon(stream):
    assert execute_with_retry(needs_long_horizon, stream, horizon=1.0) == 4.0


def test_retry_gives_up(stream):
    with pytest.raises(HorizonExhausted):
        execute_with_retry(never_finishes, stream, horizon=1.0)


def test_replicate_streams_are_keyed_by_index():
    streams = replicate_streams(5, 3, offset=10)
    assert [s.stream_index for s in streams] == [10, 11, 12]
    assert all(s.master_seed == 5 for s in streams)


def test_results_do_not_depend_on_workers():
    serial = run_replicates(draw, replicate_streams(5, 6), threads=1)
    parallel = run_replicates(draw, replicate_streams(5, 6), threads=2)
    assert serial == parallel
    assert len(set(serial)) == 6

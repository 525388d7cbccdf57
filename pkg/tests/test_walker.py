import numpy as np
import pytest

from ipdiff.levy import compensating_drift
from ipdiff.models import HorizonExhausted, ParameterDomainError
from ipdiff.walker import CEILING, JUMP, StopRule, walk

EPS = 0.01


def _reconstruct(result, s):
    cum = np.concatenate(([0.0], np.cumsum(result.event_post - result.event_pre)))
    idx = np.searchsorted(result.event_times, s, side="right")
    return result.x0 + result.drift * s + cum[idx]


def test_horizon_walk(stream, alpha):
    result = walk(stream, alpha, EPS, StopRule("horizon"), horizon=1.0)
    assert result.stop_reason == "horizon"
    assert result.end_time == pytest.approx(1.0)
    assert result.drift == pytest.approx(compensating_drift(EPS, alpha))
    assert np.all(np.diff(result.event_times) >= 0)
    assert np.all(result.event_post - result.event_pre >= EPS)
    assert _reconstruct(result, result.end_time) == pytest.approx(result.end_level, abs=1e-9)


def test_first_passage_below(stream, alpha):
    result = walk(stream, alpha, EPS, StopRule("below", level=0.0), x0=0.2, horizon=50.0)
    assert result.stop_reason == "first_passage"
    assert result.end_level == 0.0
    assert np.all(result.event_pre > 0.0)
    assert _reconstruct(result, result.end_time) == pytest.approx(0.0, abs=1e-9)


def test_first_passage_above(stream, alpha):
    result = walk(stream, alpha, EPS, StopRule("above", level=0.3), horizon=50.0)
    assert result.stop_reason == "first_passage_above"
    assert result.end_level > 0.3
    assert result.event_post[-1] == result.end_level
    assert np.all(result.event_post[:-1] <= 0.3)


def test_horizon_exhausted_carries_partial(stream, alpha):
    with pytest.raises(HorizonExhausted) as info:
        walk(stream, alpha, EPS, StopRule("below", level=-100.0), horizon=0.01)
    assert info.value.partial.stop_reason == "horizon"


def test_ceiling_prunes_high_stretches(stream, alpha):
    result = walk(stream, alpha, EPS, StopRule("horizon"), horizon=2.0, ceiling=0.05)
    resets = result.event_kind != JUMP
    assert np.all(result.event_kind[resets] == CEILING)
    assert np.all(result.event_post[resets] == 0.05)
    assert result.meta["ceiling_skips"] == int(resets.sum())


@pytest.mark.parametrize("ceiling,floor,target", [(0.1, 0.2, 0.3), (None, 0.0, 0.0)])
def test_bad_floor(stream, alpha, ceiling, floor, target):
    with pytest.raises(ParameterDomainError):
        walk(stream, alpha, EPS, StopRule("horizon"), ceiling=ceiling, floor=floor, floor_target=target)


def test_cycles_counts_zeros(stream, alpha):
    result = walk(stream, alpha, EPS, StopRule("cycles", cycles=4), horizon=50.0)
    assert result.stop_reason == "local_time"
    assert result.zero_times.size == 5
    assert result.zero_times[0] == 0.0
    assert np.all(np.diff(result.zero_times) > 0)
    assert result.end_time == result.zero_times[-1]


def test_zero_local_time_stops_at_once(stream, alpha):
    result = walk(stream, alpha, EPS, StopRule("local_time", target=0.0), horizon=1.0)
    assert result.end_time == 0.0
    assert result.event_times.size == 0


def test_excursion_tracking_needs_zero_start(stream, alpha):
    with pytest.raises(ParameterDomainError):
        walk(stream, alpha, EPS, StopRule("cycles", cycles=1), x0=0.5)

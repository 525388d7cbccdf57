import numpy as np
import pytest

from ipdiff.models import ParameterDomainError
from ipdiff.skewer import (
    IntervalPartition,
    aggregate_mass,
    concatenate,
    dH,
    level_header,
    path_continuity_stat,
    skewer,
    skewer_levels,
    write_level_csv,
)


class TentScaffolding:
    """Two tent-shaped spindles: jumps at times 1 and 2 from levels 0 and 0.5, each of lifetime 1."""

    spindle_times = np.array([1.0, 2.0])
    spindle_pre = np.array([0.0, 0.5])
    spindle_zeta = np.array([1.0, 1.0])

    def spindle_width(self, rows, z):
        return np.minimum(z, self.spindle_zeta[rows] - z)


def test_partition_validation():
    with pytest.raises(ParameterDomainError):
        IntervalPartition.from_blocks([1.0, 0.0])
    with pytest.raises(ParameterDomainError):
        IntervalPartition.from_blocks([1.0, 2.0], total_mass=2.0)


def test_partition_basics():
    beta = IntervalPartition.from_blocks([0.5, 2.0, 1.0], total_mass=4.0)
    assert beta.count == len(beta) == 3
    assert beta.deficit == pytest.approx(0.5)
    assert list(beta.ranked()) == [2.0, 1.0, 0.5]
    assert list(beta.top(2)) == [2.0, 1.0]
    assert list(beta.boundaries()) == [0.0, 0.5, 2.5, 3.5, 4.0]
    assert list(beta.phi()) == [0.25, 1.0, 0.5]
    assert beta.normalized().mass == 1.0


def test_truncate_keeps_mass():
    beta = IntervalPartition.from_blocks([0.01, 1.0, 0.02])
    cut = beta.truncate(0.05)
    assert cut.count == 1
    assert cut.mass == beta.mass
    assert cut.deficit == pytest.approx(0.03)


def test_empty_partition():
    empty = IntervalPartition.empty()
    assert empty.mass == 0.0 and empty.count == 0
    with pytest.raises(ParameterDomainError):
        empty.normalized()


def test_dH():
    a = IntervalPartition.from_blocks([1.0, 1.0])
    assert dH(a, a) == 0.0
    assert dH(a, IntervalPartition.from_blocks([0.5, 1.5])) == pytest.approx(0.5)
    assert dH(a, IntervalPartition.from_blocks([2.0])) == pytest.approx(1.0)


def test_concatenate():
    a = IntervalPartition.from_blocks([1.0], total_mass=1.5)
    b = IntervalPartition.from_blocks([2.0, 3.0])
    c = concatenate([a, b])
    assert list(c.blocks) == [1.0, 2.0, 3.0]
    assert c.mass == pytest.approx(6.5)
    assert concatenate([]) == IntervalPartition.empty()


def test_skewer_of_tents():
    X = TentScaffolding()
    assert skewer(X, 0.25).blocks.tolist() == [0.25]
    assert skewer(X, 0.75).blocks.tolist() == [0.25, 0.25]
    assert skewer(X, 1.25).blocks.tolist() == [0.25]
    assert skewer(X, 2.0).count == 0
    # a spindle touching the level only at its base contributes no block
    assert skewer(X, 0.5).blocks.tolist() == [0.5]


def test_aggregate_mass_is_monotone_in_time():
    X = TentScaffolding()
    assert aggregate_mass(X, 0.75, 0.5) == 0.0
    assert aggregate_mass(X, 0.75, 1.0) == pytest.approx(0.25)
    assert aggregate_mass(X, 0.75, 3.0) == pytest.approx(0.5)


def test_continuity_stat():
    X = TentScaffolding()
    parts = skewer_levels(X, [0.7, 0.75, 0.8])
    assert path_continuity_stat(parts) == pytest.approx(0.05)
    assert path_continuity_stat(parts[:1]) == 0.0


def test_level_csv(tmp_path):
    out = write_level_csv(tmp_path / "levels.csv", [0.0, 0.5],
                          [IntervalPartition.from_blocks([1.0]), IntervalPartition.empty()],
                          meta={"config_hash": "abc", "master_seed": 7})
    lines = out.read_text().splitlines()
    assert lines[0] == "# config_hash=abc,master_seed=7"
    assert lines[1] == ",".join(level_header())
    assert lines[2] == "0,1,1,1,0,0,0,0"
    assert lines[3] == "0.5,0,0,0,0,0,0,0"

import numpy as np
import pytest

from ppdiag.core import (
    EventSequence,
    NetworkEventLog,
    PairIndex,
    all_pairs,
    counting_process,
    jitter_ties,
    project_pair,
)
from ppdiag.errors import OutOfRangeError, ValidationError
from ppdiag.models import BlockAlphaSpec, GeneratorMatrix, NetworkBaseParams
from ppdiag.rng import RandomSource
from ppdiag.simulate import simulate_network


def test_event_sequence_basic():
    seq = EventSequence([1.0, 3.0], 5.0)
    assert len(seq) == 2
    assert seq.times.flags.writeable is False
    assert seq == EventSequence(np.array([1.0, 3.0]), 5.0)


@pytest.mark.parametrize(
    "times, horizon",
    [
        ([0.0, 1.0], 2.0),  # t = 0 excluded
        ([1.0, 1.0], 2.0),  # tie
        ([2.0, 1.0], 3.0),  # decreasing
        ([1.0, 3.0], 2.0),  # beyond horizon
        ([1.0, np.nan], 2.0),
        ([1.0], 0.0),
        ([1.0], -1.0),
    ],
)
def test_event_sequence_rejects(times, horizon):
    with pytest.raises(ValidationError):
        EventSequence(times, horizon)


def test_tie_error_names_index():
    with pytest.raises(ValidationError, match="2"):
        EventSequence([0.5, 1.0, 1.0], 2.0)


def test_event_at_horizon_allowed():
    assert len(EventSequence([1.0, 2.0], 2.0)) == 2


def test_empty_sequence():
    seq = EventSequence([], 4.0)
    assert len(seq) == 0
    assert counting_process(seq, 4.0) == 0


@pytest.mark.parametrize("t, expected", [(0.0, 0), (1.0, 1), (2.5, 1), (3.0, 2), (4.0, 2)])
def test_counting_process(t, expected):
    assert counting_process(EventSequence([1.0, 3.0], 4.0), t) == expected


@pytest.mark.parametrize("t", [-0.1, 4.1])
def test_counting_process_range(t):
    with pytest.raises(OutOfRangeError):
        counting_process(EventSequence([1.0, 3.0], 4.0), t)


def test_pair_index():
    p = PairIndex(1, 2)
    assert str(p) == "(1,2)"
    with pytest.raises(ValidationError):
        PairIndex(3, 3)
    with pytest.raises(ValidationError):
        PairIndex(1, 5).check(4)
    assert len(all_pairs(4)) == 12
    assert all_pairs(3)[:2] == [PairIndex(1, 2), PairIndex(1, 3)]


def test_project_pair_example():
    log = NetworkEventLog.from_events(2, [(1.0, 1, 2), (2.0, 2, 1), (3.0, 1, 2)], 5.0)
    assert project_pair(log, PairIndex(1, 2)).times.tolist() == [1.0, 3.0]
    assert project_pair(log, (2, 1)).times.tolist() == [2.0]
    with pytest.raises(ValidationError):
        project_pair(log, PairIndex(1, 1))
    with pytest.raises(ValidationError):
        project_pair(log, PairIndex(1, 3))


def test_network_log_rejects_bad_rows():
    with pytest.raises(ValidationError, match="self-loop"):
        NetworkEventLog.from_events(3, [(1.0, 2, 2)], 5.0)
    with pytest.raises(ValidationError, match="out of range"):
        NetworkEventLog.from_events(3, [(1.0, 1, 4)], 5.0)
    with pytest.raises(ValidationError):
        NetworkEventLog.from_events(3, [(1.0, 1, 2), (1.0, 1, 2)], 5.0)
    # the same time on different pairs is fine
    log = NetworkEventLog.from_events(3, [(1.0, 1, 2), (1.0, 2, 1)], 5.0)
    assert len(log) == 2


def test_projection_partitions_simulated_network():
    base = NetworkBaseParams(0.05, 0.08, 22.0, GeneratorMatrix(0.01, 0.04))
    spec = BlockAlphaSpec(((1, 2, 3, 4), (5, 6, 7, 8, 9, 10)), 20.0, 0.5)
    log = simulate_network(base, spec, 10, 500.0, RandomSource(1)).log
    total = sum(len(project_pair(log, p)) for p in log.pairs())
    assert total == len(log)
    assert log.count_matrix().sum() == len(log)
    merged = np.sort(np.concatenate([log.sequence(p).times for p in log.pairs()]))
    assert np.array_equal(merged, log.times)


def test_jitter_ties():
    out = jitter_ties([1.0, 1.0, 1.0, 2.0, 2.0, 3.0])
    assert np.allclose(out, [1.0, 1.0 + 1e-9, 1.0 + 2e-9, 2.0, 2.0 + 1e-9, 3.0], rtol=0, atol=1e-15)
    assert np.all(np.diff(out) > 0)

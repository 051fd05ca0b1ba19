
import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from itertools import combinations

import numpy as np
import pytest

from models.events import PixelTrack, SensorGeometry, canonicalize_arrays, group_tracks
from models.filters import (
    FilterKind,
    FilterParams,
    filter_masks,
    filter_stream,
    fsae_filter,
    ie_filter,
    oracle_filter,
    stream_filter_masks,
)
from utils.errors import ConfigError


@pytest.fixture
def params():
    """Default 12 ms thresholds"""
    return FilterParams()


@pytest.fixture
def random_tracks():
    """10,000 random tracks of 1-8 distinct times"""
    rng = np.random.default_rng(2024)
    tracks = []
    for index in range(10_000):
        length = int(rng.integers(1, 9))
        times = np.sort(rng.choice(60_000, size=length, replace=False))
        tracks.append(PixelTrack(x=index % 100, y=index // 100, p=1, times=times))
    return tracks


def test_worked_example(params):
    """Test a hand-checked track with tau = 12 ms"""

    track = PixelTrack(x=0, y=0, p=1, times=[0, 5_000, 20_000, 21_000, 40_000])

    assert fsae_filter(track, params).kept_times.tolist() == [0, 20_000, 40_000]
    assert ie_filter(track, params).kept_times.tolist() == [0, 20_000]
    assert ie_filter(track, params).source_count == 5


def test_isolated_event_is_not_inceptive(params):
    """Test a lone event passes FSAE but never IE"""

    track = PixelTrack(x=0, y=0, p=1, times=[500])

    assert len(fsae_filter(track, params)) == 1
    assert len(ie_filter(track, params)) == 0


def test_thresholds_are_strict():
    """Test gaps equal to a threshold fail both comparisons"""

    params = FilterParams(tau_minus_us=100, tau_plus_us=50)
    track = PixelTrack(x=0, y=0, p=1, times=[0, 100, 150, 251, 300])

    # 100: prior gap 100 is not > 100; 251: prior gap 101 passes, next gap 49 < 50
    assert fsae_filter(track, params).kept_times.tolist() == [0, 251]
    assert ie_filter(track, params).kept_times.tolist() == [251]


def test_empty_track(params):
    """Test empty tracks filter to nothing"""

    track = PixelTrack(x=0, y=0, p=-1, times=[])

    assert len(fsae_filter(track, params)) == 0
    assert len(ie_filter(track, params)) == 0


@pytest.mark.parametrize('tau_minus, tau_plus', [(5, 5), (10, 10), (10, 20), (20, 10), (1, 40)])
def test_exhaustive_small_grid_matches_oracle(tau_minus, tau_plus):
    """Test every track of up to 5 times drawn from a small grid against the oracle"""

    params = FilterParams(tau_minus_us=tau_minus, tau_plus_us=tau_plus)
    grid = [0, 5, 10, 15, 20, 30, 41, 60]

    for length in range(0, 6):
        for times in combinations(grid, length):
            track = PixelTrack(x=0, y=0, p=1, times=list(times))
            for kind, production in ((FilterKind.FSAE, fsae_filter), (FilterKind.IE, ie_filter)):
                assert production(track, params) == oracle_filter(track, kind, params), (times, kind)


def test_random_tracks_match_oracle(random_tracks, params):
    """Test 10,000 random tracks, per track and through the vectorized stream path"""

    geometry = SensorGeometry(100, 100)
    xs = np.concatenate([np.full(len(t), t.x) for t in random_tracks])
    ys = np.concatenate([np.full(len(t), t.y) for t in random_tracks])
    ts = np.concatenate([t.times for t in random_tracks])
    stream, _ = canonicalize_arrays(xs, ys, ts, np.ones(len(ts), dtype=int), geometry=geometry)

    tracks = group_tracks(stream)
    fsae, ie = filter_masks(tracks, params)

    for index, track in enumerate(random_tracks):
        expected_fsae = oracle_filter(track, 'fsae', params)
        expected_ie = oracle_filter(track, 'ie', params)
        assert fsae_filter(track, params) == expected_fsae
        assert ie_filter(track, params) == expected_ie

        # grouped tracks are ordered by (y, x, p), which is the construction order here
        lo, hi = tracks.starts[index], tracks.starts[index + 1]
        assert np.array_equal(tracks.times[lo:hi][fsae[lo:hi]], expected_fsae.kept_times)
        assert np.array_equal(tracks.times[lo:hi][ie[lo:hi]], expected_ie.kept_times)


def test_subset_chain_on_random_streams():
    """Test IE is a subset of FSAE, which is a subset of the raw stream"""

    rng = np.random.default_rng(11)
    geometry = SensorGeometry(8, 8)

    for _ in range(20):
        n = int(rng.integers(1, 2_000))
        stream, _ = canonicalize_arrays(
            rng.integers(0, 8, n), rng.integers(0, 8, n), rng.integers(0, 200_000, n), rng.choice([-1, 1], n),
            geometry=geometry
        )
        params = FilterParams(int(rng.integers(1, 30_000)), int(rng.integers(1, 30_000)))
        fsae_mask, ie_mask = stream_filter_masks(stream, params)

        assert not np.any(ie_mask & ~fsae_mask)
        assert filter_stream(stream, 'ie', params) == stream.select(ie_mask)
        assert filter_stream(stream, FilterKind.FSAE, params) == stream.select(fsae_mask)
        assert len(stream.select(ie_mask)) <= len(stream.select(fsae_mask)) <= len(stream)


def test_filters_ignore_time_offset():
    """Test the kept events do not change when every timestamp is shifted"""

    rng = np.random.default_rng(31)
    geometry = SensorGeometry(8, 8)
    stream, _ = canonicalize_arrays(
        rng.integers(0, 8, 4_000), rng.integers(0, 8, 4_000), rng.integers(0, 300_000, 4_000),
        rng.choice([-1, 1], 4_000), geometry=geometry
    )

    for params in (FilterParams(), FilterParams(3_000, 20_000)):
        fsae, ie = stream_filter_masks(stream, params)
        for offset in (1, 12_345, 2**33):
            shifted_fsae, shifted_ie = stream_filter_masks(stream.shifted(offset), params)
            assert np.array_equal(shifted_fsae, fsae)
            assert np.array_equal(shifted_ie, ie)


def test_fsae_keeps_all_of_its_own_output():
    """Test running FSAE again on FSAE survivors with the same threshold removes nothing"""

    rng = np.random.default_rng(17)
    geometry = SensorGeometry(6, 6)

    for tau_minus in (500, 12_000, 40_000):
        stream, _ = canonicalize_arrays(
            rng.integers(0, 6, 3_000), rng.integers(0, 6, 3_000), rng.integers(0, 400_000, 3_000),
            rng.choice([-1, 1], 3_000), geometry=geometry
        )
        params = FilterParams(tau_minus, 12_000)
        once = filter_stream(stream, 'fsae', params)

        assert filter_stream(once, 'fsae', params) == once


def test_fsae_count_shrinks_as_tau_minus_grows():
    """Test a stricter prior-gap threshold never keeps more events"""

    rng = np.random.default_rng(5)
    geometry = SensorGeometry(4, 4)
    stream, _ = canonicalize_arrays(
        rng.integers(0, 4, 3_000), rng.integers(0, 4, 3_000), rng.integers(0, 500_000, 3_000),
        rng.choice([-1, 1], 3_000), geometry=geometry
    )

    counts = [len(filter_stream(stream, 'fsae', FilterParams(tau, 12_000))) for tau in (100, 1_000, 5_000, 20_000)]

    assert counts == sorted(counts, reverse=True)


def test_filter_params_validation():
    """Test thresholds must be positive integers"""

    assert FilterParams().tag == 't12000'
    assert FilterParams(1_000, 2_000).tag == 'tm1000_tp2000'

    with pytest.raises(ConfigError):
        FilterParams(tau_minus_us=0)
    with pytest.raises(ConfigError):
        FilterParams(tau_plus_us=2.5)


if __name__ == '__main__':
    pytest.main([__file__, '-v'])

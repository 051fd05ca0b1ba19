
import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import numpy as np
import pytest

from models.events import (
    Event,
    EventStream,
    PixelTrack,
    SensorGeometry,
    canonical_order,
    canonicalize_arrays,
    flatten_tracks,
    group_tracks,
    sort_stream,
)
from utils.errors import GeometryError, PolarityError, WindowError


@pytest.fixture
def geometry():
    """Small 4x3 sensor"""
    return SensorGeometry(4, 3)


@pytest.fixture
def random_stream():
    """Random canonical stream with plenty of same-pixel repeats"""
    rng = np.random.default_rng(7)
    geometry = SensorGeometry(6, 5)
    n = 400
    stream, _ = canonicalize_arrays(
        rng.integers(0, 6, n), rng.integers(0, 5, n),
        rng.integers(0, 50_000, n), rng.choice([-1, 1], n),
        geometry=geometry
    )
    return stream


def test_sort_stream_canonical_order(geometry):
    """Test events come out ordered by (t, y, x, p)"""

    events = [
        Event(x=1, y=0, t=50, p=1),
        Event(x=3, y=2, t=10, p=-1),
        Event(x=0, y=2, t=10, p=1),
        Event(x=0, y=2, t=10, p=-1),
        Event(x=2, y=1, t=10, p=1),
    ]
    stream = sort_stream(events, geometry)

    assert [(e.t, e.y, e.x, e.p) for e in stream] == [
        (10, 1, 2, 1),
        (10, 2, 0, -1),
        (10, 2, 0, 1),
        (10, 2, 3, -1),
        (50, 0, 1, 1),
    ]
    assert stream.t_start == 10
    assert stream.t_end == 50
    stream.check_invariants()


def test_exact_duplicates_collapse(geometry):
    """Test identical events collapse to one"""

    stream, duplicates = canonicalize_arrays(
        [1, 1, 1, 2], [0, 0, 0, 0], [5, 5, 5, 5], [1, 1, -1, 1], geometry=geometry
    )

    assert duplicates == 1
    assert len(stream) == 3


def test_out_of_bounds_event_names_index(geometry):
    """Test GeometryError reports the first offending event"""

    with pytest.raises(GeometryError) as exc_info:
        canonicalize_arrays([0, 1, 4], [0, 0, 0], [1, 2, 3], [1, 1, 1], geometry=geometry)

    assert exc_info.value.index == 2


def test_bad_polarity_rejected(geometry):
    """Test polarity outside {-1, +1} is an error"""

    with pytest.raises(PolarityError):
        canonicalize_arrays([0], [0], [1], [0], geometry=geometry)


def test_negative_timestamp_rejected(geometry):
    """Test negative times are rejected"""

    with pytest.raises(WindowError):
        canonicalize_arrays([0], [0], [-1], [1], geometry=geometry)


def test_window_must_hold_events(geometry):
    """Test an explicit window has to contain every event"""

    with pytest.raises(WindowError):
        canonicalize_arrays([0], [0], [100], [1], geometry=geometry, t_start=0, t_end=50)


def test_stream_columns_are_read_only(random_stream):
    """Test stream arrays cannot be modified in place"""

    with pytest.raises(ValueError):
        random_stream.t[0] = 1


def test_geometry_basics():
    """Test geometry helpers"""

    geometry = SensorGeometry(304, 240)

    assert geometry.n_pixels == 304 * 240
    assert geometry.shape == (240, 304)
    assert geometry.contains(303, 239)
    assert not geometry.contains(304, 0)
    assert str(geometry) == '304x240'
    assert SensorGeometry.infer(np.array([3, 7]), np.array([2, 0])) == SensorGeometry(8, 3)

    with pytest.raises(GeometryError):
        SensorGeometry(0, 10)


def test_group_tracks_layout(geometry):
    """Test tracks are per pixel and polarity with ascending times"""

    stream, _ = canonicalize_arrays(
        [1, 1, 1, 2, 1], [0, 0, 0, 2, 0], [30, 10, 20, 5, 15], [1, 1, -1, 1, 1], geometry=geometry
    )
    tracks = group_tracks(stream)

    assert len(tracks) == 3
    assert tracks.event_count == len(stream)
    # tracks ordered by (y, x, p)
    assert [(t.y, t.x, t.p) for t in tracks] == [(0, 1, -1), (0, 1, 1), (2, 2, 1)]
    assert tracks[1].times.tolist() == [10, 15, 30]
    assert tracks.lengths.tolist() == [1, 3, 1]
    assert np.array_equal(stream.t[tracks.source_index], tracks.times)


def test_sort_stream_matches_comparison_sort():
    """Test 10,000 random events against a plain tuple sort with duplicates dropped"""

    rng = np.random.default_rng(99)
    geometry = SensorGeometry(16, 12)
    n = 10_000
    columns = (rng.integers(0, 16, n), rng.integers(0, 12, n), rng.integers(0, 3_000, n), rng.choice([-1, 1], n))
    events = [Event(x=int(x), y=int(y), t=int(t), p=int(p)) for x, y, t, p in zip(*columns)]

    stream = sort_stream(events, geometry)
    expected = sorted({(e.t, e.y, e.x, e.p) for e in events})

    assert [(e.t, e.y, e.x, e.p) for e in stream] == expected
    assert len(stream) < n


def test_group_tracks_matches_bucketing(random_stream):
    """Test grouping against a dict of (x, y, p) buckets"""

    buckets = {}
    for event in random_stream:
        buckets.setdefault((event.x, event.y, event.p), []).append(event.t)

    tracks = group_tracks(random_stream)

    assert {(track.x, track.y, track.p): track.times.tolist() for track in tracks} == buckets
    assert [(track.y, track.x, track.p) for track in tracks] == sorted((y, x, p) for x, y, p in buckets)
    assert all(np.all(np.diff(track.times) > 0) for track in tracks)


def test_group_flatten_round_trip(random_stream):
    """Test flatten_tracks inverts group_tracks"""

    tracks = group_tracks(random_stream)
    rebuilt = flatten_tracks(tracks, random_stream.geometry, random_stream.t_start, random_stream.t_end)
    rebuilt_from_list = flatten_tracks(list(tracks), random_stream.geometry, random_stream.t_start, random_stream.t_end)

    assert rebuilt == random_stream
    assert rebuilt_from_list == random_stream


def test_empty_stream(geometry):
    """Test empty streams group into zero tracks"""

    stream = EventStream.empty(geometry, t_start=100, t_end=200)
    tracks = group_tracks(stream)

    assert len(stream) == 0
    assert stream.duration_us == 100
    assert len(tracks) == 0
    assert tracks.event_count == 0
    assert flatten_tracks([], geometry, 100, 200) == stream


def test_pixel_track_collapses_duplicates():
    """Test PixelTrack sorts and de-duplicates its times"""

    track = PixelTrack(x=0, y=0, p=1, times=[30, 10, 10, 20])

    assert track.times.tolist() == [10, 20, 30]
    with pytest.raises(PolarityError):
        PixelTrack(x=0, y=0, p=2, times=[1])


def test_read_only_track_times_must_increase():
    """Test frozen int64 times are accepted only when strictly increasing"""

    frozen = np.array([10, 20, 30], dtype=np.int64)
    frozen.flags.writeable = False
    assert PixelTrack(x=0, y=0, p=1, times=frozen).times is frozen

    for values in ([30, 10, 20], [10, 10, 20]):
        unordered = np.array(values, dtype=np.int64)
        unordered.flags.writeable = False
        with pytest.raises(ValueError):
            PixelTrack(x=0, y=0, p=1, times=unordered)


def test_select_keeps_window(random_stream):
    """Test masked subsets keep geometry, window and order"""

    mask = random_stream.p > 0
    subset = random_stream.select(mask)

    assert len(subset) == int(mask.sum())
    assert (subset.t_start, subset.t_end) == (random_stream.t_start, random_stream.t_end)
    subset.check_invariants()


def test_shifted_moves_times_and_window(random_stream):
    """Test shifting by a constant"""

    shifted = random_stream.shifted(1_000_000)

    assert np.array_equal(shifted.t, random_stream.t + 1_000_000)
    assert shifted.t_start == random_stream.t_start + 1_000_000
    assert shifted.shifted(-1_000_000) == random_stream
    with pytest.raises(WindowError):
        random_stream.shifted(-random_stream.t_start - 1)


def test_window_and_split(geometry):
    """Test time windows and fixed-length splitting"""

    stream, _ = canonicalize_arrays(
        [0, 1, 2, 3, 0], [0, 0, 0, 0, 1], [0, 99, 100, 250, 399], [1, 1, 1, 1, 1], geometry=geometry
    )

    window = stream.window(100, 300)
    assert window.t.tolist() == [100, 250]
    assert (window.t_start, window.t_end) == (100, 300)

    pieces = stream.split(100)
    assert [piece.t.tolist() for piece in pieces] == [[0, 99], [100], [250], [399]]
    assert [(piece.t_start, piece.t_end) for piece in pieces] == [(0, 100), (100, 200), (200, 300), (300, 400)]
    assert EventStream.empty(geometry).split(100) == []

    with pytest.raises(WindowError):
        stream.window(300, 100)


def test_invariant_check_catches_unsorted(geometry):
    """Test the raw constructor trusts input but check_invariants does not"""

    stream = EventStream(
        geometry=geometry, x=[0, 0], y=[0, 0], t=[20, 10], p=[1, 1], t_start=10, t_end=20
    )

    with pytest.raises(WindowError):
        stream.check_invariants()


def test_lexsort_fallback_matches_packed_order():
    """Test huge timestamps on a large sensor take the lexicographic path"""

    rng = np.random.default_rng(3)
    geometry = SensorGeometry(10_000, 10_000)
    n = 300
    x = rng.integers(0, 10_000, n)
    y = rng.integers(0, 10_000, n)
    t = rng.integers(10**11, 10**11 + 50, n)
    p = rng.choice([-1, 1], n)

    stream, _ = canonicalize_arrays(x, y, t, p, geometry=geometry)
    expected = sorted(set(zip(t.tolist(), y.tolist(), x.tolist(), p.tolist())))

    assert list(zip(stream.t.tolist(), stream.y.tolist(), stream.x.tolist(), stream.p.tolist())) == expected


def test_canonical_order_keeps_first_duplicate(geometry):
    """Test canonical_order marks later duplicates for removal"""

    order, keep = canonical_order([1, 0, 1], [0, 0, 0], [5, 9, 5], [1, 1, 1], geometry=geometry)

    assert order.tolist() == [0, 2, 1]
    assert keep.tolist() == [True, False, True]


if __name__ == '__main__':
    pytest.main([__file__, '-v'])


import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import numpy as np
import pytest

from models.events import SensorGeometry, canonicalize_arrays, group_tracks
from models.filters import FilterParams
from models.surfaces import (
    Aggregator,
    ChannelKind,
    SurfaceVariant,
    compose_frame,
    count_channel,
    flip_frame,
    iets_surface,
    normalize,
    time_surface,
)
from services.frame_export import export_frame


@pytest.fixture
def three_pixel_stream():
    """
    Row of three pixels, tau = 12 ms:
      (0,0)+ at 0, 1000        -> inceptive event at 0
      (1,0)+ at 5000           -> isolated, falls back to 5000
      (2,0)- at 2000, 30000    -> no inceptive event, falls back to 16000
    """
    stream, _ = canonicalize_arrays(
        [0, 0, 1, 2, 2], [0, 0, 0, 0, 0], [0, 1_000, 5_000, 2_000, 30_000], [1, 1, 1, -1, -1],
        geometry=SensorGeometry(3, 1)
    )
    return stream


@pytest.fixture
def random_stream():
    """Random 16x12 stream with bursts and isolated events"""
    rng = np.random.default_rng(99)
    n = 3_000
    stream, _ = canonicalize_arrays(
        rng.integers(0, 16, n), rng.integers(0, 12, n), rng.integers(0, 100_000, n), rng.choice([-1, 1], n),
        geometry=SensorGeometry(16, 12), t_start=0, t_end=100_000
    )
    return stream


def test_iets_surface_with_fallback(three_pixel_stream):
    """Test raw IETS values and the fallback map"""

    params = FilterParams()

    positive, pos_fallback = iets_surface(three_pixel_stream, 1, params)
    negative, neg_fallback = iets_surface(three_pixel_stream, -1, params)

    assert positive.value_at(0, 0) == 0.0
    assert positive.value_at(1, 0) == 5_000.0
    assert positive.value_at(2, 0) is None
    assert pos_fallback.tolist() == [[False, True, False]]
    assert negative.value_at(2, 0) == 16_000.0
    assert neg_fallback.tolist() == [[False, False, True]]
    assert positive.channel_kind is ChannelKind.TS_POS


def test_iets_surface_without_fallback(three_pixel_stream):
    """Test pixels without inceptive events stay empty when fallback is off"""

    positive, fallback = iets_surface(three_pixel_stream, 1, FilterParams(), fallback=False)

    assert positive.filled.tolist() == [[True, False, False]]
    assert not fallback.any()


def test_compose_frame_iets(three_pixel_stream):
    """Test normalized three-channel frame"""

    frame = compose_frame(three_pixel_stream, FilterParams())

    assert frame.variant is SurfaceVariant.IETS
    assert frame.events_used == 1
    assert frame.fallback_pixels == 2
    assert frame.pos.to_array().tolist() == [[0.0, 1.0, 0.0]]
    assert frame.neg.to_array().tolist() == [[0.0, 0.0, 1.0]]
    assert frame.count.to_array().tolist() == [[1.0, 0.5, 1.0]]
    assert frame.to_array().shape == (3, 1, 3)


def test_compose_frame_variants(three_pixel_stream):
    """Test which events each variant uses"""

    params = FilterParams()
    raw = compose_frame(three_pixel_stream, params, variant='raw_ts')
    fsae = compose_frame(three_pixel_stream, params, variant='fsae')
    nofb = compose_frame(three_pixel_stream, params, variant=SurfaceVariant.IETS_NOFB)

    assert raw.events_used == 5
    # FSAE keeps 0, 5000, 2000, 30000
    assert fsae.events_used == 4
    assert nofb.events_used == 1
    assert nofb.fallback_pixels == 0
    assert nofb.pos.filled.tolist() == [[True, False, False]]
    assert nofb.neg.filled_count == 0
    # raw mean times: 500 and 5000
    assert raw.pos.to_array().tolist() == [[0.0, 1.0, 0.0]]
    # count channel never depends on the variant
    for frame in (raw, fsae, nofb):
        assert frame.count.to_array().tolist() == [[1.0, 0.5, 1.0]]


@pytest.mark.parametrize('aggregator, expected', [
    (Aggregator.MEAN, 2_250.0),
    (Aggregator.MIN, 0.0),
    (Aggregator.MAX, 5_000.0),
    (Aggregator.MEDIAN, 2_000.0),
])
def test_aggregators(aggregator, expected):
    """Test each aggregator on one track"""

    stream, _ = canonicalize_arrays(
        [0, 0, 0, 0], [0, 0, 0, 0], [0, 1_000, 3_000, 5_000], [1, 1, 1, 1], geometry=SensorGeometry(1, 1)
    )
    surface = time_surface(group_tracks(stream), 1, aggregator)

    assert surface.value_at(0, 0) == expected


def test_time_surface_matches_per_pixel_recomputation(random_stream):
    """Test every aggregator against a per-pixel loop over the raw events"""

    tracks = group_tracks(random_stream)
    reducers = {
        Aggregator.MEAN: lambda times: sum(times) / len(times),
        Aggregator.MIN: min,
        Aggregator.MAX: max,
        Aggregator.MEDIAN: lambda times: float(np.median(times)),
    }

    for polarity in (1, -1):
        per_pixel = {}
        for event in random_stream:
            if event.p == polarity:
                per_pixel.setdefault((event.x, event.y), []).append(event.t)

        for aggregator, reduce in reducers.items():
            surface = time_surface(tracks, polarity, aggregator)
            assert surface.filled_count == len(per_pixel)
            for (x, y), times in per_pixel.items():
                assert surface.value_at(x, y) == pytest.approx(reduce(times), abs=1e-9)


def test_count_channel_matches_histogram(random_stream):
    """Test per-pixel counts against a 2-D histogram of both polarities"""

    geometry = random_stream.geometry
    histogram, _, _ = np.histogram2d(
        random_stream.y, random_stream.x,
        bins=(geometry.height, geometry.width),
        range=((0, geometry.height), (0, geometry.width))
    )

    counts = count_channel(random_stream)

    assert np.array_equal(counts.values, histogram)
    assert np.array_equal(counts.filled, histogram > 0)


def test_later_inceptive_event_is_brighter():
    """Test single-inceptive pixels keep their arrival order after normalization"""

    # one 1 ms burst per pixel, starting at 10, 40 and 70 ms
    stream, _ = canonicalize_arrays(
        [0, 0, 1, 1, 2, 2], [0] * 6, [10_000, 11_000, 40_000, 41_000, 70_000, 71_000], [1] * 6,
        geometry=SensorGeometry(3, 1), t_start=0, t_end=100_000
    )
    frame = compose_frame(stream, FilterParams())
    first, second, third = frame.pos.to_array()[0]

    assert frame.events_used == 3
    assert frame.fallback_pixels == 0
    assert first < second < third


def test_two_inceptive_bursts_average():
    """Test two inceptive bursts at 0 and 50 ms give a mean of 25 ms"""

    stream, _ = canonicalize_arrays(
        [0] * 4, [0] * 4, [0, 1_000, 50_000, 51_000], [1] * 4, geometry=SensorGeometry(1, 1)
    )
    surface, fallback = iets_surface(stream, 1, FilterParams())

    assert surface.value_at(0, 0) == 25_000.0
    assert not fallback.any()


def test_aggregators_agree_on_singleton_tracks():
    """Test mean, min, max and median coincide when every track holds one event"""

    rng = np.random.default_rng(12)
    geometry = SensorGeometry(10, 10)
    pixels = rng.permutation(geometry.n_pixels)[:60]
    stream, _ = canonicalize_arrays(
        pixels % 10, pixels // 10, rng.integers(0, 100_000, 60), rng.choice([-1, 1], 60), geometry=geometry
    )
    tracks = group_tracks(stream)

    assert set(tracks.lengths.tolist()) == {1}
    for polarity in (1, -1):
        surfaces = [time_surface(tracks, polarity, aggregator).to_array() for aggregator in Aggregator]
        for surface in surfaces[1:]:
            assert np.array_equal(surface, surfaces[0])


def test_normalize_constant_surface(three_pixel_stream):
    """Test a surface with one distinct value normalizes to 1"""

    surface = time_surface(group_tracks(three_pixel_stream), -1)
    normalized = normalize(surface)

    assert normalized.normalized
    assert normalized.to_array().tolist() == [[0.0, 0.0, 1.0]]
    assert normalize(count_channel(three_pixel_stream)).values.max() == 1.0


def test_values_in_unit_range(random_stream):
    """Test every channel of every variant lies in [0, 1]"""

    for variant in SurfaceVariant:
        array = compose_frame(random_stream, FilterParams(), variant=variant).to_array()
        assert array.min() >= 0.0
        assert array.max() <= 1.0


def test_fallback_fills_exactly_raw_pixels(random_stream):
    """Test IETS channels are non-empty exactly where raw events of that polarity exist"""

    frame = compose_frame(random_stream, FilterParams(3_000, 3_000))
    tracks = group_tracks(random_stream)

    for polarity, channel in ((1, frame.pos), (-1, frame.neg)):
        raw = np.zeros(random_stream.geometry.n_pixels, dtype=bool)
        raw[tracks.polarity(polarity).pixel_index] = True
        assert np.array_equal(channel.filled, raw.reshape(random_stream.geometry.shape))


@pytest.mark.parametrize('fmt', ['png8', 'raw_f32'])
def test_shift_invariance(random_stream, fmt):
    """Test adding a constant to every timestamp leaves exported frames byte-identical"""

    params = FilterParams()
    for variant in SurfaceVariant:
        original = export_frame(compose_frame(random_stream, params, variant=variant), fmt)
        shifted = export_frame(compose_frame(random_stream.shifted(987_654_321), params, variant=variant), fmt)
        assert original == shifted


def test_stage_times_recorded(random_stream):
    """Test the optional per-stage timing breakdown"""

    stage_times = {}
    compose_frame(random_stream, FilterParams(), stage_times=stage_times)

    assert set(stage_times) == {'group', 'filter', 'surface', 'count'}
    assert all(seconds >= 0.0 for seconds in stage_times.values())


def test_flip_frame(three_pixel_stream):
    """Test horizontal mirroring"""

    frame = compose_frame(three_pixel_stream, FilterParams())
    flipped = flip_frame(frame)

    assert np.array_equal(flipped.to_array(), frame.to_array()[:, :, ::-1])
    assert flipped.fallback_used[0].tolist() == [[False, True, False]]
    assert flipped.fallback_used[1].tolist() == [[True, False, False]]
    assert flip_frame(flipped).to_array().tolist() == frame.to_array().tolist()


def test_empty_stream_frame():
    """Test an empty stream composes to an all-zero frame"""

    stream, _ = canonicalize_arrays([], [], [], [], geometry=SensorGeometry(5, 4))
    frame = compose_frame(stream, FilterParams())

    assert frame.to_array().shape == (3, 4, 5)
    assert not frame.to_array().any()
    assert frame.events_used == 0


def test_variant_parse():
    """Test variant names and aliases"""

    assert SurfaceVariant.parse('fsae') is SurfaceVariant.FSAE_TS
    assert SurfaceVariant.parse('raw') is SurfaceVariant.RAW_TS
    assert SurfaceVariant.parse('iets_nofb') is SurfaceVariant.IETS_NOFB
    with pytest.raises(ValueError):
        SurfaceVariant.parse('nope')


if __name__ == '__main__':
    pytest.main([__file__, '-v'])

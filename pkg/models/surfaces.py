# models/surfaces.py

import logging
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Optional, Tuple, Union

import numpy as np

from models.events import EventStream, SensorGeometry, TrackSet, group_tracks
from models.filters import FilterParams, filter_masks

logger = logging.getLogger(__name__)


class Aggregator(str, Enum):
    """Operator turning the event times of one pixel into a surface value"""
    MEAN = 'mean'
    MIN = 'min'
    MAX = 'max'
    MEDIAN = 'median'


class ChannelKind(str, Enum):
    TS_POS = 'ts_pos'
    TS_NEG = 'ts_neg'
    COUNT = 'count'


class SurfaceVariant(str, Enum):
    """
    Which events feed the two time channels of a frame.

    raw_ts: every event; fsae_ts: FSAE survivors; iets: inceptive events with
    the mean-time fallback; iets_nofb: inceptive events only.
    """
    RAW_TS = 'raw_ts'
    FSAE_TS = 'fsae_ts'
    IETS = 'iets'
    IETS_NOFB = 'iets_nofb'

    @classmethod
    def parse(cls, value: Union['SurfaceVariant', str]) -> 'SurfaceVariant':
        if isinstance(value, cls):
            return value
        aliases = {'fsae': cls.FSAE_TS, 'raw': cls.RAW_TS}
        return aliases.get(str(value), None) or cls(str(value))


POLARITY_CHANNEL = {1: ChannelKind.TS_POS, -1: ChannelKind.TS_NEG}


@dataclass(frozen=True, eq=False)
class SurfaceImage:
    """
    One channel of per-pixel values.

    ``filled`` marks pixels that received events; unfilled pixels keep value 0
    but stay distinguishable from a real 0 until export.
    """
    geometry: SensorGeometry
    values: np.ndarray
    filled: np.ndarray
    channel_kind: ChannelKind
    params: Dict[str, object] = field(default_factory=dict)
    normalized: bool = False

    def __post_init__(self):
        if self.values.shape != self.geometry.shape or self.filled.shape != self.geometry.shape:
            raise ValueError(f"Surface arrays must have shape {self.geometry.shape}")
        self.values.flags.writeable = False
        self.filled.flags.writeable = False

    @property
    def filled_count(self) -> int:
        return int(np.count_nonzero(self.filled))

    def to_array(self) -> np.ndarray:
        """Values with empty pixels rendered as 0"""
        return np.where(self.filled, self.values, 0.0)

    def value_at(self, x: int, y: int):
        """Value of one pixel, None when it is empty"""
        return float(self.values[y, x]) if self.filled[y, x] else None


@dataclass(frozen=True, eq=False)
class IetsFrame:
    """
    Three-channel image: positive time surface, negative time surface, event count.

    fallback_used[0] / fallback_used[1] flag the pixels of the positive /
    negative channel whose value came from the mean-time fallback.
    """
    pos: SurfaceImage
    neg: SurfaceImage
    count: SurfaceImage
    fallback_used: np.ndarray
    variant: SurfaceVariant = SurfaceVariant.IETS
    events_used: int = 0

    def __post_init__(self):
        geometries = {self.pos.geometry, self.neg.geometry, self.count.geometry}
        if len(geometries) != 1:
            raise ValueError("Frame channels must share one geometry")
        self.fallback_used.flags.writeable = False

    @property
    def geometry(self) -> SensorGeometry:
        return self.pos.geometry

    @property
    def channels(self) -> Tuple[SurfaceImage, SurfaceImage, SurfaceImage]:
        return self.pos, self.neg, self.count

    @property
    def fallback_pixels(self) -> int:
        return int(np.count_nonzero(self.fallback_used))

    def to_array(self) -> np.ndarray:
        """(3, H, W) float64 array, channel order pos, neg, count"""
        return np.stack([channel.to_array() for channel in self.channels])


# ============================================================
# AGGREGATION
# ============================================================

def _aggregate(tracks: TrackSet, aggregator: Aggregator) -> np.ndarray:
    """One value per track; track times are ascending, which min/max/median rely on"""
    if not len(tracks):
        return np.zeros(0, dtype=np.float64)
    starts = tracks.starts[:-1]
    lengths = tracks.lengths
    times = tracks.times

    if aggregator is Aggregator.MEAN:
        # Integer sums are exact; one rounding in the division
        return np.add.reduceat(times, starts) / lengths
    if aggregator is Aggregator.MIN:
        return times[starts].astype(np.float64)
    if aggregator is Aggregator.MAX:
        return times[tracks.starts[1:] - 1].astype(np.float64)
    if aggregator is Aggregator.MEDIAN:
        lower = times[starts + (lengths - 1) // 2]
        upper = times[starts + lengths // 2]
        return (lower + upper) / 2.0
    raise ValueError(f"Unknown aggregator: {aggregator}")


def _paint(geometry: SensorGeometry, pixel_index: np.ndarray, values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    image = np.zeros(geometry.n_pixels, dtype=np.float64)
    filled = np.zeros(geometry.n_pixels, dtype=bool)
    image[pixel_index] = values
    filled[pixel_index] = True
    return image.reshape(geometry.shape), filled.reshape(geometry.shape)


def time_surface(
    tracks: TrackSet,
    polarity: int,
    aggregator: Union[Aggregator, str] = Aggregator.MEAN
) -> SurfaceImage:
    """
    Raw time surface of one polarity: aggregator over each pixel's event times (in us).

    Pixels without events of that polarity are left empty.
    """
    aggregator = Aggregator(aggregator)
    selected = tracks.polarity(polarity)
    values, filled = _paint(tracks.geometry, selected.pixel_index, _aggregate(selected, aggregator))
    return SurfaceImage(
        geometry=tracks.geometry,
        values=values,
        filled=filled,
        channel_kind=POLARITY_CHANNEL[polarity],
        params={'aggregator': aggregator.value}
    )


def _filtered_surface(
    tracks: TrackSet,
    event_mask: np.ndarray,
    polarity: int,
    aggregator: Aggregator,
    fallback: bool
) -> Tuple[SurfaceImage, np.ndarray]:
    """Surface over the masked events of one polarity, optionally completed with raw mean times"""
    geometry = tracks.geometry
    polarity_mask = tracks.event_polarity() == polarity
    kept = tracks.subset(event_mask & polarity_mask)
    values, filled = _paint(geometry, kept.pixel_index, _aggregate(kept, aggregator))

    fallback_used = np.zeros(geometry.shape, dtype=bool)
    if fallback:
        raw = tracks.subset(polarity_mask)
        raw_values, raw_filled = _paint(geometry, raw.pixel_index, _aggregate(raw, Aggregator.MEAN))
        fallback_used = raw_filled & ~filled
        values = np.where(fallback_used, raw_values, values)
        filled = filled | fallback_used

    surface = SurfaceImage(
        geometry=geometry,
        values=values,
        filled=filled,
        channel_kind=POLARITY_CHANNEL[polarity],
        params={'aggregator': aggregator.value, 'fallback': fallback}
    )
    return surface, fallback_used


def iets_surface(
    stream: EventStream,
    polarity: int,
    params: FilterParams,
    aggregator: Union[Aggregator, str] = Aggregator.MEAN,
    fallback: bool = True
) -> Tuple[SurfaceImage, np.ndarray]:
    """
    Time surface over the inceptive events of one polarity.

    A pixel with no inceptive event but with raw events of that polarity gets
    the mean of all its raw times (always the mean, whatever the aggregator)
    and is flagged in the returned fallback map.

    Returns:
        (raw-valued SurfaceImage, bool fallback map of shape (H, W))
    """
    aggregator = Aggregator(aggregator)
    tracks = group_tracks(stream)
    _, ie = filter_masks(tracks, params)
    surface, fallback_used = _filtered_surface(tracks, ie, polarity, aggregator, fallback)
    surface.params.update(tau_minus_us=params.tau_minus_us, tau_plus_us=params.tau_plus_us)
    return surface, fallback_used


def count_channel(stream: EventStream) -> SurfaceImage:
    """Unfiltered event count per pixel, both polarities together"""
    geometry = stream.geometry
    counts = np.bincount(stream.pixel_index, minlength=geometry.n_pixels).astype(np.float64)
    counts = counts.reshape(geometry.shape)
    return SurfaceImage(
        geometry=geometry,
        values=counts,
        filled=counts > 0,
        channel_kind=ChannelKind.COUNT
    )


def normalize(surface: SurfaceImage) -> SurfaceImage:
    """
    Scale a raw surface into [0, 1] over its own non-empty pixels.

    Time channels use (v - min) / (max - min), the count channel v / max.
    When max equals min every non-empty pixel becomes 1. Empty pixels stay
    empty (0 on export).
    """
    values = np.zeros(surface.geometry.shape, dtype=np.float64)
    filled = surface.filled
    if filled.any():
        present = surface.values[filled]
        if surface.channel_kind is ChannelKind.COUNT:
            low, high = 0.0, float(present.max())
        else:
            low, high = float(present.min()), float(present.max())
        if high == low:
            values[filled] = 1.0
        else:
            scaled = (present - low) / (high - low)
            values[filled] = np.clip(scaled, 0.0, 1.0)

    return replace(
        surface,
        values=values,
        filled=filled.copy(),
        params=dict(surface.params),
        normalized=True
    )


# ============================================================
# FRAMES
# ============================================================

def _variant_mask(tracks: TrackSet, params: FilterParams, variant: SurfaceVariant) -> np.ndarray:
    if variant is SurfaceVariant.RAW_TS:
        return np.ones(tracks.event_count, dtype=bool)
    fsae, ie = filter_masks(tracks, params)
    return fsae if variant is SurfaceVariant.FSAE_TS else ie


def compose_frame(
    stream: EventStream,
    params: FilterParams,
    variant: Union[SurfaceVariant, str] = SurfaceVariant.IETS,
    aggregator: Union[Aggregator, str] = Aggregator.MEAN,
    stage_times: Optional[Dict[str, float]] = None
) -> IetsFrame:
    """
    Build the normalized three-channel frame of one sample.

    Times are rebased to the window start before any arithmetic, so shifting
    a whole stream in time yields a bit-identical frame.

    Args:
        stage_times: when given, seconds spent in the group / filter / surface /
            count stages are added to it (benchmark breakdown)
    """
    variant = SurfaceVariant.parse(variant)
    aggregator = Aggregator(aggregator)
    fallback = variant is SurfaceVariant.IETS

    clock = time.perf_counter()

    def lap(stage: str):
        nonlocal clock
        if stage_times is not None:
            now = time.perf_counter()
            stage_times[stage] = stage_times.get(stage, 0.0) + (now - clock)
            clock = now

    rebased = stream.shifted(-stream.t_start)
    tracks = group_tracks(rebased)
    lap('group')
    mask = _variant_mask(tracks, params, variant)
    lap('filter')

    provenance = {
        'variant': variant.value,
        'aggregator': aggregator.value,
        'tau_minus_us': params.tau_minus_us,
        'tau_plus_us': params.tau_plus_us,
    }
    channels = []
    fallback_maps = []
    for polarity in (1, -1):
        surface, fallback_used = _filtered_surface(tracks, mask, polarity, aggregator, fallback)
        surface.params.update(provenance)
        channels.append(normalize(surface))
        fallback_maps.append(fallback_used)
    lap('surface')
    count = normalize(count_channel(stream))
    lap('count')

    frame = IetsFrame(
        pos=channels[0],
        neg=channels[1],
        count=count,
        fallback_used=np.stack(fallback_maps),
        variant=variant,
        events_used=int(np.count_nonzero(mask))
    )
    logger.debug(
        f"Frame {variant.value}: {frame.events_used}/{len(stream)} events, "
        f"{frame.fallback_pixels} fallback pixels"
    )
    return frame


def flip_frame(frame: IetsFrame) -> IetsFrame:
    """Left-right mirror of a frame (training augmentation)"""
    def mirror(surface: SurfaceImage) -> SurfaceImage:
        return replace(
            surface,
            values=np.ascontiguousarray(surface.values[:, ::-1]),
            filled=np.ascontiguousarray(surface.filled[:, ::-1]),
            params=dict(surface.params)
        )

    return IetsFrame(
        pos=mirror(frame.pos),
        neg=mirror(frame.neg),
        count=mirror(frame.count),
        fallback_used=np.ascontiguousarray(frame.fallback_used[:, :, ::-1]),
        variant=frame.variant,
        events_used=frame.events_used
    )

# models/filters.py

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Tuple, Union

import numpy as np

from models.events import EventStream, PixelTrack, TrackSet, group_tracks
from utils.errors import ConfigError

logger = logging.getLogger(__name__)

DEFAULT_TAU_US = 12_000


class FilterKind(str, Enum):
    FSAE = 'fsae'
    IE = 'ie'


@dataclass(frozen=True)
class FilterParams:
    """
    Thresholds of the temporal filters, in microseconds.

    tau_minus_us: an event must follow the previous same-pixel event by more than this
    tau_plus_us: an inceptive event needs a successor sooner than this
    """
    tau_minus_us: int = DEFAULT_TAU_US
    tau_plus_us: int = DEFAULT_TAU_US

    def __post_init__(self):
        for name in ('tau_minus_us', 'tau_plus_us'):
            value = getattr(self, name)
            if int(value) != value or int(value) <= 0:
                raise ConfigError(f"{name} must be a positive integer number of microseconds, got {value}")
            object.__setattr__(self, name, int(value))

    @property
    def tag(self) -> str:
        """Short form used in output file names"""
        if self.tau_minus_us == self.tau_plus_us:
            return f"t{self.tau_minus_us}"
        return f"tm{self.tau_minus_us}_tp{self.tau_plus_us}"


@dataclass(frozen=True, eq=False)
class FilteredTrack:
    """Surviving times of one pixel track"""
    x: int
    y: int
    p: int
    kept_times: np.ndarray
    source_count: int

    def __len__(self) -> int:
        return len(self.kept_times)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FilteredTrack):
            return NotImplemented
        return (
            (self.x, self.y, self.p, self.source_count) == (other.x, other.y, other.p, other.source_count)
            and np.array_equal(self.kept_times, other.kept_times)
        )

    __hash__ = None


# ============================================================
# VECTORIZED MASKS
# ============================================================
# Both masks work on a flat array of track-ordered times plus markers for
# the first/last event of each track, so a single track and a whole stream
# go through the same code.

def _prior_gap_mask(times: np.ndarray, first: np.ndarray, tau_minus_us: int) -> np.ndarray:
    """t_i - t_{i-1} > tau_minus, vacuously true for the first event of a track"""
    keep = np.ones(len(times), dtype=bool)
    if len(times) > 1:
        keep[1:] = np.diff(times) > tau_minus_us
    keep[first] = True
    return keep


def _successor_mask(times: np.ndarray, last: np.ndarray, tau_plus_us: int) -> np.ndarray:
    """t_{i+1} - t_i < tau_plus, false for the last event of a track"""
    keep = np.zeros(len(times), dtype=bool)
    if len(times) > 1:
        keep[:-1] = np.diff(times) < tau_plus_us
    keep[last] = False
    return keep


def filter_masks(tracks: TrackSet, params: FilterParams) -> Tuple[np.ndarray, np.ndarray]:
    """
    FSAE and inceptive-event masks over every event of a TrackSet, in track order.

    Returns:
        (fsae_mask, ie_mask); ie_mask implies fsae_mask
    """
    fsae = _prior_gap_mask(tracks.times, tracks.first_mask, params.tau_minus_us)
    ie = fsae & _successor_mask(tracks.times, tracks.last_mask, params.tau_plus_us)
    return fsae, ie


def _single_track_masks(track: PixelTrack, params: FilterParams) -> Tuple[np.ndarray, np.ndarray]:
    n = len(track)
    first = np.zeros(n, dtype=bool)
    last = np.zeros(n, dtype=bool)
    if n:
        first[0] = True
        last[-1] = True
    fsae = _prior_gap_mask(track.times, first, params.tau_minus_us)
    ie = fsae & _successor_mask(track.times, last, params.tau_plus_us)
    return fsae, ie


def _filtered(track: PixelTrack, mask: np.ndarray) -> FilteredTrack:
    kept = track.times[mask]
    kept.flags.writeable = False
    return FilteredTrack(x=track.x, y=track.y, p=track.p, kept_times=kept, source_count=len(track))


# ============================================================
# PER-TRACK FILTERS
# ============================================================

def fsae_filter(track: PixelTrack, params: FilterParams) -> FilteredTrack:
    """Keep t_i when t_i - t_{i-1} > tau_minus; the first event of a track always passes"""
    fsae, _ = _single_track_masks(track, params)
    return _filtered(track, fsae)


def ie_filter(track: PixelTrack, params: FilterParams) -> FilteredTrack:
    """
    Keep the inceptive events of a track.

    t_i passes when it is the first event or t_i - t_{i-1} > tau_minus, and a
    successor exists with t_{i+1} - t_i < tau_plus. Isolated events and the
    last event of a track never pass.
    """
    _, ie = _single_track_masks(track, params)
    return _filtered(track, ie)


def filter_stream(stream: EventStream, kind: Union[FilterKind, str], params: FilterParams) -> EventStream:
    """Apply the FSAE or IE filter to every (x, y, p) track and return the surviving events"""
    kind = FilterKind(kind)
    tracks = group_tracks(stream)
    fsae, ie = filter_masks(tracks, params)
    track_mask = fsae if kind is FilterKind.FSAE else ie

    mask = np.zeros(len(stream), dtype=bool)
    mask[tracks.source_index] = track_mask
    kept = stream.select(mask)
    logger.debug(f"{kind.value} kept {len(kept)}/{len(stream)} events ({params.tag})")
    return kept


def stream_filter_masks(stream: EventStream, params: FilterParams) -> Tuple[np.ndarray, np.ndarray]:
    """(fsae_mask, ie_mask) aligned with the events of a canonical stream"""
    tracks = group_tracks(stream)
    fsae, ie = filter_masks(tracks, params)
    fsae_mask = np.zeros(len(stream), dtype=bool)
    ie_mask = np.zeros(len(stream), dtype=bool)
    fsae_mask[tracks.source_index] = fsae
    ie_mask[tracks.source_index] = ie
    return fsae_mask, ie_mask


# ============================================================
# REFERENCE TRANSCRIPTION
# ============================================================

def oracle_filter(track: PixelTrack, kind: Union[FilterKind, str], params: FilterParams) -> FilteredTrack:
    """
    Literal, deliberately slow reading of the filter definitions.

    Predecessor and successor of every time are found by scanning the whole
    track, the boundary rules are spelled out, and no helper from this module
    is used. Only meant for cross-checking fsae_filter / ie_filter.
    """
    kind_name = kind.value if isinstance(kind, FilterKind) else str(kind)
    times = [int(t) for t in track.times]
    kept = []
    for t_i in times:
        earlier = [s for s in times if s < t_i]
        later = [s for s in times if s > t_i]

        if earlier:
            t_prev = max(earlier)
            prior_ok = (t_i - t_prev) > params.tau_minus_us
        else:
            prior_ok = True

        if later:
            t_next = min(later)
            next_ok = (t_next - t_i) < params.tau_plus_us
        else:
            next_ok = False

        if kind_name == 'fsae':
            keep = prior_ok
        elif kind_name == 'ie':
            keep = prior_ok and next_ok
        else:
            raise ValueError(f"Unknown filter kind: {kind}")

        if keep:
            kept.append(t_i)

    kept_times = np.array(kept, dtype=np.int64)
    kept_times.flags.writeable = False
    return FilteredTrack(x=track.x, y=track.y, p=track.p, kept_times=kept_times, source_count=len(times))

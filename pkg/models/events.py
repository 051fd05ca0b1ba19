# models/events.py

import logging
from dataclasses import dataclass
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple, Union, overload

import numpy as np

from utils.errors import GeometryError, PolarityError, WindowError

logger = logging.getLogger(__name__)

TIME_DTYPE = np.int64
COORD_DTYPE = np.int32
POLARITY_DTYPE = np.int8

# Largest value the packed (t, y, x, p) sort key may reach
_MAX_PACKED_KEY = np.iinfo(np.int64).max


def _readonly(values, dtype) -> np.ndarray:
    array = np.array(values, dtype=dtype, copy=True).reshape(-1)
    array.flags.writeable = False
    return array


def _freeze(array: np.ndarray) -> np.ndarray:
    # Only for arrays this module just allocated
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class Event:
    """One sensor event: column x, row y, timestamp t in microseconds, polarity p in {-1, +1}"""
    x: int
    y: int
    t: int
    p: int


@dataclass(frozen=True)
class SensorGeometry:
    """Sensor size in pixels"""
    width: int
    height: int

    def __post_init__(self):
        if int(self.width) < 1 or int(self.height) < 1:
            raise GeometryError(f"Sensor geometry must be at least 1x1, got {self.width}x{self.height}")
        object.__setattr__(self, 'width', int(self.width))
        object.__setattr__(self, 'height', int(self.height))

    @property
    def n_pixels(self) -> int:
        return self.width * self.height

    @property
    def shape(self) -> Tuple[int, int]:
        """(rows, columns), the numpy image shape"""
        return self.height, self.width

    def contains(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    @classmethod
    def infer(cls, x: np.ndarray, y: np.ndarray) -> 'SensorGeometry':
        """Smallest geometry holding every coordinate (max + 1); 1x1 for no events"""
        width = int(np.max(x)) + 1 if len(x) else 1
        height = int(np.max(y)) + 1 if len(y) else 1
        return cls(width=width, height=height)

    def __str__(self) -> str:
        return f"{self.width}x{self.height}"


@dataclass(frozen=True, eq=False)
class EventStream:
    """
    Time-ordered events of one sensor plus the time window they belong to.

    Events are stored column-wise (x, y, t, p arrays, all read-only) and are
    sorted by (t, y, x, p) with no exact duplicates. Build streams through
    ``sort_stream`` / ``canonicalize_arrays``; the raw constructor trusts its input.
    """
    geometry: SensorGeometry
    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    p: np.ndarray
    t_start: int
    t_end: int

    def __post_init__(self):
        for name, dtype in (('x', COORD_DTYPE), ('y', COORD_DTYPE), ('t', TIME_DTYPE), ('p', POLARITY_DTYPE)):
            value = getattr(self, name)
            if not (isinstance(value, np.ndarray) and value.dtype == dtype and not value.flags.writeable):
                object.__setattr__(self, name, _readonly(value, dtype))
        lengths = {len(self.x), len(self.y), len(self.t), len(self.p)}
        if len(lengths) != 1:
            raise ValueError(f"Event columns differ in length: {sorted(lengths)}")
        object.__setattr__(self, 't_start', int(self.t_start))
        object.__setattr__(self, 't_end', int(self.t_end))
        if self.t_end < self.t_start:
            raise WindowError(f"Window end {self.t_end} precedes start {self.t_start}")

    # ------------------------------------------------------------
    # Sequence behaviour
    # ------------------------------------------------------------

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[Event]:
        for x, y, t, p in zip(self.x.tolist(), self.y.tolist(), self.t.tolist(), self.p.tolist()):
            yield Event(x=x, y=y, t=t, p=p)

    def __getitem__(self, index: int) -> Event:
        return Event(
            x=int(self.x[index]), y=int(self.y[index]),
            t=int(self.t[index]), p=int(self.p[index])
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.geometry == other.geometry
            and self.t_start == other.t_start
            and self.t_end == other.t_end
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.p, other.p)
        )

    __hash__ = None

    def __repr__(self) -> str:
        return (
            f"EventStream({len(self)} events, {self.geometry}, "
            f"window=[{self.t_start}, {self.t_end}] us)"
        )

    @property
    def events(self) -> List[Event]:
        return list(self)

    @property
    def duration_us(self) -> int:
        return self.t_end - self.t_start

    @property
    def pixel_index(self) -> np.ndarray:
        """Flat pixel index y * width + x of every event"""
        return self.y.astype(np.int64) * self.geometry.width + self.x

    # ------------------------------------------------------------
    # Derived streams
    # ------------------------------------------------------------

    @classmethod
    def empty(cls, geometry: SensorGeometry, t_start: int = 0, t_end: Optional[int] = None) -> 'EventStream':
        return cls(
            geometry=geometry,
            x=_freeze(np.zeros(0, COORD_DTYPE)),
            y=_freeze(np.zeros(0, COORD_DTYPE)),
            t=_freeze(np.zeros(0, TIME_DTYPE)),
            p=_freeze(np.zeros(0, POLARITY_DTYPE)),
            t_start=t_start,
            t_end=t_start if t_end is None else t_end
        )

    def select(self, mask: np.ndarray) -> 'EventStream':
        """Keep the events where mask is True; a subset of a canonical stream stays canonical"""
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != self.t.shape:
            raise ValueError(f"Mask of shape {mask.shape} does not match {len(self)} events")
        return EventStream(
            geometry=self.geometry,
            x=_freeze(self.x[mask]),
            y=_freeze(self.y[mask]),
            t=_freeze(self.t[mask]),
            p=_freeze(self.p[mask]),
            t_start=self.t_start,
            t_end=self.t_end
        )

    def window(self, t_start: int, t_end: int) -> 'EventStream':
        """Events with t_start <= t <= t_end, re-windowed to [t_start, t_end]"""
        t_start, t_end = int(t_start), int(t_end)
        if t_start < 0 or t_end < t_start:
            raise WindowError(f"Invalid window [{t_start}, {t_end}]")
        lo = int(np.searchsorted(self.t, t_start, side='left'))
        hi = int(np.searchsorted(self.t, t_end, side='right'))
        return EventStream(
            geometry=self.geometry,
            x=_freeze(self.x[lo:hi].copy()),
            y=_freeze(self.y[lo:hi].copy()),
            t=_freeze(self.t[lo:hi].copy()),
            p=_freeze(self.p[lo:hi].copy()),
            t_start=t_start,
            t_end=t_end
        )

    def split(self, window_us: int) -> List['EventStream']:
        """Consecutive non-empty windows [k*w, (k+1)*w] holding the events with k*w <= t < (k+1)*w"""
        if window_us <= 0:
            raise WindowError(f"Window length must be > 0, got {window_us}")
        if not len(self):
            return []
        pieces = []
        for k in range(int(self.t[0]) // window_us, int(self.t[-1]) // window_us + 1):
            piece = self.window(k * window_us, (k + 1) * window_us)
            piece = piece.select(piece.t < (k + 1) * window_us)
            if len(piece):
                pieces.append(piece)
        return pieces

    def shifted(self, offset_us: int) -> 'EventStream':
        """Same events with every timestamp and the window moved by offset_us"""
        offset_us = int(offset_us)
        if self.t_start + offset_us < 0:
            raise WindowError(f"Shift by {offset_us} us makes timestamps negative")
        return EventStream(
            geometry=self.geometry,
            x=self.x,
            y=self.y,
            t=_freeze(self.t + offset_us),
            p=self.p,
            t_start=self.t_start + offset_us,
            t_end=self.t_end + offset_us
        )

    def check_invariants(self):
        """Raise if the stream breaks bounds, polarity, window or ordering rules"""
        _check_events(self.x, self.y, self.t, self.p, self.geometry)
        if len(self):
            if self.t[0] < self.t_start or self.t[-1] > self.t_end:
                raise WindowError(
                    f"Events span [{self.t[0]}, {self.t[-1]}] outside window [{self.t_start}, {self.t_end}]"
                )
            key = _sort_key(self.x, self.y, self.t, self.p, self.geometry)
            if key is not None:
                broken = np.flatnonzero(key[1:] <= key[:-1])
                if len(broken):
                    raise WindowError("Events are not in canonical (t, y, x, p) order", index=int(broken[0]) + 1)


@dataclass(frozen=True, eq=False)
class PixelTrack:
    """Ordered event times of one pixel and polarity; duplicate times collapse on construction"""
    x: int
    y: int
    p: int
    times: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'x', int(self.x))
        object.__setattr__(self, 'y', int(self.y))
        object.__setattr__(self, 'p', int(self.p))
        if self.p not in (-1, 1):
            raise PolarityError(f"Track polarity must be -1 or +1, got {self.p}")
        times = self.times
        if not (isinstance(times, np.ndarray) and times.dtype == TIME_DTYPE and not times.flags.writeable):
            times = _freeze(np.unique(np.asarray(times, dtype=TIME_DTYPE)))
        elif times.ndim != 1 or np.any(np.diff(times) <= 0):
            raise ValueError("Read-only track times must be a strictly increasing 1-D array")
        object.__setattr__(self, 'times', times)

    def __len__(self) -> int:
        return len(self.times)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PixelTrack):
            return NotImplemented
        return (self.x, self.y, self.p) == (other.x, other.y, other.p) and np.array_equal(self.times, other.times)

    __hash__ = None

    def __repr__(self) -> str:
        return f"PixelTrack(x={self.x}, y={self.y}, p={self.p:+d}, {len(self)} events)"


class TrackSet(Sequence[PixelTrack]):
    """
    All pixel tracks of one stream, stored flat.

    ``times`` holds every event time in track order, tracks ordered by
    (y, x, p); track k spans ``times[starts[k]:starts[k + 1]]``.
    ``source_index[i]`` is the position in the source stream of the
    i-th track-ordered event.
    """

    def __init__(
        self,
        geometry: SensorGeometry,
        times: np.ndarray,
        starts: np.ndarray,
        x: np.ndarray,
        y: np.ndarray,
        p: np.ndarray,
        source_index: np.ndarray
    ):
        self.geometry = geometry
        self.times = _freeze(times)
        self.starts = _freeze(starts)
        self.x = _freeze(x)
        self.y = _freeze(y)
        self.p = _freeze(p)
        self.source_index = _freeze(source_index)

    def __len__(self) -> int:
        return len(self.x)

    @overload
    def __getitem__(self, index: int) -> PixelTrack: ...

    @overload
    def __getitem__(self, index: slice) -> List[PixelTrack]: ...

    def __getitem__(self, index):
        if isinstance(index, slice):
            return [self[i] for i in range(*index.indices(len(self)))]
        if index < 0:
            index += len(self)
        if not 0 <= index < len(self):
            raise IndexError(index)
        lo, hi = int(self.starts[index]), int(self.starts[index + 1])
        return PixelTrack(
            x=int(self.x[index]), y=int(self.y[index]), p=int(self.p[index]),
            times=_freeze(self.times[lo:hi].copy())
        )

    def __repr__(self) -> str:
        return f"TrackSet({len(self)} tracks, {self.event_count} events, {self.geometry})"

    @property
    def event_count(self) -> int:
        return len(self.times)

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.starts)

    @property
    def first_mask(self) -> np.ndarray:
        """True for the first event of every track"""
        mask = np.zeros(self.event_count, dtype=bool)
        mask[self.starts[:-1]] = True
        return mask

    @property
    def last_mask(self) -> np.ndarray:
        """True for the last event of every track"""
        mask = np.zeros(self.event_count, dtype=bool)
        mask[self.starts[1:] - 1] = True
        return mask

    @property
    def pixel_index(self) -> np.ndarray:
        """Flat pixel index of every track"""
        return self.y.astype(np.int64) * self.geometry.width + self.x

    def track_ids(self) -> np.ndarray:
        """Track number of every track-ordered event"""
        return np.repeat(np.arange(len(self), dtype=np.int64), self.lengths)

    def event_polarity(self) -> np.ndarray:
        """Polarity of every track-ordered event"""
        return np.repeat(self.p, self.lengths)

    def subset(self, event_mask: np.ndarray) -> 'TrackSet':
        """Keep the masked events; tracks left without events disappear"""
        event_mask = np.asarray(event_mask, dtype=bool)
        if event_mask.shape != self.times.shape:
            raise ValueError(f"Mask of shape {event_mask.shape} does not match {self.event_count} events")
        kept_per_track = np.add.reduceat(event_mask.astype(np.int64), self.starts[:-1]) if len(self) else \
            np.zeros(0, dtype=np.int64)
        keep = kept_per_track > 0
        lengths = kept_per_track[keep]
        starts = np.zeros(len(lengths) + 1, dtype=np.int64)
        np.cumsum(lengths, out=starts[1:])
        return TrackSet(
            geometry=self.geometry,
            times=self.times[event_mask],
            starts=starts,
            x=self.x[keep],
            y=self.y[keep],
            p=self.p[keep],
            source_index=self.source_index[event_mask]
        )

    def polarity(self, p: int) -> 'TrackSet':
        """Tracks of one polarity only"""
        return self.subset(self.event_polarity() == p)


# ============================================================
# CANONICALIZATION
# ============================================================

def _check_events(x: np.ndarray, y: np.ndarray, t: np.ndarray, p: np.ndarray, geometry: SensorGeometry):
    if not len(t):
        return
    outside = (x < 0) | (x >= geometry.width) | (y < 0) | (y >= geometry.height)
    if outside.any():
        index = int(np.flatnonzero(outside)[0])
        raise GeometryError(
            f"Event at ({int(x[index])}, {int(y[index])}) is outside the {geometry} sensor",
            index=index
        )
    bad_polarity = (p != 1) & (p != -1)
    if bad_polarity.any():
        index = int(np.flatnonzero(bad_polarity)[0])
        raise PolarityError(f"Polarity {int(p[index])} is not -1 or +1", index=index)
    negative = t < 0
    if negative.any():
        index = int(np.flatnonzero(negative)[0])
        raise WindowError(f"Timestamp {int(t[index])} is negative", index=index)


def _sort_key(x, y, t, p, geometry: SensorGeometry) -> Optional[np.ndarray]:
    """
    Pack (t, y, x, p) into one int64 whose order is the canonical order.

    Returns None when the packed value could overflow; callers fall back
    to a lexicographic sort.
    """
    if not len(t):
        return np.zeros(0, dtype=np.int64)
    slots = 2 * geometry.n_pixels
    if (int(t.max()) + 1) * slots > _MAX_PACKED_KEY:
        return None
    key = t.astype(np.int64) * slots
    key += (y.astype(np.int64) * geometry.width + x) * 2
    key += p > 0
    return key


def canonical_order(x, y, t, p, geometry: SensorGeometry) -> Tuple[np.ndarray, np.ndarray]:
    """
    Stable permutation putting events in (t, y, x, p) order, plus a mask that
    is False for exact duplicates of the preceding (sorted) event.

    Lets callers carry per-event payloads (labels) through canonicalization.
    """
    x = np.asarray(x, dtype=np.int64).reshape(-1)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    t = np.asarray(t, dtype=np.int64).reshape(-1)
    p = np.asarray(p, dtype=np.int64).reshape(-1)
    _check_events(x, y, t, p, geometry)
    key = _sort_key(x, y, t, p, geometry)
    if key is None:
        order = np.lexsort((p, x, y, t))
        xs, ys, ts, ps = x[order], y[order], t[order], p[order]
        same = (ts[1:] == ts[:-1]) & (ys[1:] == ys[:-1]) & (xs[1:] == xs[:-1]) & (ps[1:] == ps[:-1])
    else:
        order = np.argsort(key, kind='stable')
        sorted_key = key[order]
        same = sorted_key[1:] == sorted_key[:-1]
    keep = np.ones(len(t), dtype=bool)
    keep[1:] = ~same
    return order, keep


def canonicalize_arrays(
    x,
    y,
    t,
    p,
    geometry: SensorGeometry,
    t_start: Optional[int] = None,
    t_end: Optional[int] = None
) -> Tuple[EventStream, int]:
    """
    Validate, sort and de-duplicate column arrays into a canonical stream.

    Args:
        x, y, t, p: Event columns of equal length (any integer dtype)
        geometry: Sensor geometry every event must fall into
        t_start, t_end: Window bounds; default to the first/last event time

    Returns:
        (stream, number of exact duplicates removed)
    """
    x = np.asarray(x, dtype=np.int64).reshape(-1)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    t = np.asarray(t, dtype=np.int64).reshape(-1)
    p = np.asarray(p, dtype=np.int64).reshape(-1)
    if not (len(x) == len(y) == len(t) == len(p)):
        raise ValueError("Event columns differ in length")

    _check_events(x, y, t, p, geometry)

    key = _sort_key(x, y, t, p, geometry)
    if key is None:
        order = np.lexsort((p, x, y, t))
        x, y, t, p = x[order], y[order], t[order], p[order]
        same = (t[1:] == t[:-1]) & (y[1:] == y[:-1]) & (x[1:] == x[:-1]) & (p[1:] == p[:-1])
    else:
        if len(key) > 1 and np.any(key[1:] < key[:-1]):
            order = np.argsort(key, kind='stable')
            key = key[order]
            x, y, t, p = x[order], y[order], t[order], p[order]
        same = key[1:] == key[:-1]

    duplicates = int(np.count_nonzero(same))
    if duplicates:
        keep = np.ones(len(t), dtype=bool)
        keep[1:] = ~same
        x, y, t, p = x[keep], y[keep], t[keep], p[keep]
        logger.debug(f"Collapsed {duplicates} duplicate events")

    if t_start is None:
        t_start = int(t[0]) if len(t) else 0
    if t_end is None:
        t_end = int(t[-1]) if len(t) else int(t_start)
    if len(t):
        if int(t[0]) < t_start:
            raise WindowError(f"Timestamp {int(t[0])} precedes window start {t_start}", index=0)
        if int(t[-1]) > t_end:
            raise WindowError(f"Timestamp {int(t[-1])} follows window end {t_end}", index=len(t) - 1)

    stream = EventStream(
        geometry=geometry,
        x=_freeze(x.astype(COORD_DTYPE)),
        y=_freeze(y.astype(COORD_DTYPE)),
        t=_freeze(t.astype(TIME_DTYPE)),
        p=_freeze(p.astype(POLARITY_DTYPE)),
        t_start=t_start,
        t_end=t_end
    )
    return stream, duplicates


def sort_stream(
    events: Union[Iterable[Event], EventStream],
    geometry: SensorGeometry,
    t_start: Optional[int] = None,
    t_end: Optional[int] = None
) -> EventStream:
    """
    Put events in canonical (t, y, x, p) order with exact duplicates collapsed.

    Raises GeometryError naming the index of the first out-of-bounds event.
    """
    if isinstance(events, EventStream):
        columns = (events.x, events.y, events.t, events.p)
    else:
        events = list(events)
        columns = (
            [e.x for e in events], [e.y for e in events],
            [e.t for e in events], [e.p for e in events]
        )
    stream, _ = canonicalize_arrays(*columns, geometry=geometry, t_start=t_start, t_end=t_end)
    return stream


# ============================================================
# GROUPING
# ============================================================

def group_tracks(stream: EventStream) -> TrackSet:
    """Split a canonical stream into per-pixel, per-polarity tracks"""
    geometry = stream.geometry
    if not len(stream):
        empty_coord = np.zeros(0, dtype=COORD_DTYPE)
        return TrackSet(
            geometry=geometry,
            times=np.zeros(0, dtype=TIME_DTYPE),
            starts=np.zeros(1, dtype=np.int64),
            x=empty_coord,
            y=empty_coord.copy(),
            p=np.zeros(0, dtype=POLARITY_DTYPE),
            source_index=np.zeros(0, dtype=np.int64)
        )

    # (y, x, p) slot per event; the stable sort keeps times ascending inside a slot
    slot = stream.pixel_index * 2 + (stream.p > 0)
    order = np.argsort(slot, kind='stable')
    slot_sorted = slot[order]

    boundaries = np.flatnonzero(slot_sorted[1:] != slot_sorted[:-1]) + 1
    starts = np.concatenate(([0], boundaries, [len(order)])).astype(np.int64)
    heads = order[starts[:-1]]

    return TrackSet(
        geometry=geometry,
        times=stream.t[order],
        starts=starts,
        x=stream.x[heads],
        y=stream.y[heads],
        p=stream.p[heads],
        source_index=order.astype(np.int64)
    )


def flatten_tracks(
    tracks: Iterable[PixelTrack],
    geometry: SensorGeometry,
    t_start: Optional[int] = None,
    t_end: Optional[int] = None
) -> EventStream:
    """Rebuild a canonical stream from tracks (inverse of group_tracks)"""
    if isinstance(tracks, TrackSet):
        lengths = tracks.lengths
        stream, _ = canonicalize_arrays(
            np.repeat(tracks.x, lengths), np.repeat(tracks.y, lengths),
            tracks.times, np.repeat(tracks.p, lengths),
            geometry=geometry, t_start=t_start, t_end=t_end
        )
        return stream

    xs, ys, ts, ps = [], [], [], []
    for track in tracks:
        n = len(track)
        xs.append(np.full(n, track.x, dtype=np.int64))
        ys.append(np.full(n, track.y, dtype=np.int64))
        ts.append(track.times)
        ps.append(np.full(n, track.p, dtype=np.int64))
    if not ts:
        return EventStream.empty(geometry, t_start=t_start or 0, t_end=t_end)
    stream, _ = canonicalize_arrays(
        np.concatenate(xs), np.concatenate(ys), np.concatenate(ts), np.concatenate(ps),
        geometry=geometry, t_start=t_start, t_end=t_end
    )
    return stream

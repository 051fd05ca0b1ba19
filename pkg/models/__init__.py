# models/__init__.py

from .events import Event, EventStream, PixelTrack, SensorGeometry, TrackSet, group_tracks, sort_stream
from .filters import FilterKind, FilterParams, filter_stream
from .surfaces import Aggregator, IetsFrame, SurfaceImage, SurfaceVariant, compose_frame

__all__ = [
    'Event', 'EventStream', 'PixelTrack', 'SensorGeometry', 'TrackSet', 'group_tracks', 'sort_stream',
    'FilterKind', 'FilterParams', 'filter_stream',
    'Aggregator', 'IetsFrame', 'SurfaceImage', 'SurfaceVariant', 'compose_frame',
]

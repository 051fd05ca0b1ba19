# models/synth.py

"""
Ground-truth synthetic events from a level-crossing sensor model.

Each pixel follows a piecewise-linear log-intensity trace. An event fires every
time the trace moves one threshold away from the pixel's reference level; the
reference then moves to the crossed level. The first emitted event of a
monotone transition is labeled inceptive, the rest of that transition are
scaling events, and injected background events are labeled noise.
"""

import logging
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, List, NamedTuple, Optional, Tuple, Union

import numpy as np

from models.events import EventStream, SensorGeometry, canonical_order, canonicalize_arrays
from utils.errors import ConfigError

logger = logging.getLogger(__name__)

# Relative tolerance on level comparisons (ramps built from exact multiples of the threshold)
_LEVEL_EPS = 1e-9

CLASS_NAMES = ('left_to_right', 'right_to_left')
SLANT_CLASS_NAMES = ('top_first', 'bottom_first')

# Label of a left-right mirrored sample; classes not listed keep their label
MIRRORED_LABELS = {'left_to_right': 'right_to_left', 'right_to_left': 'left_to_right'}


class EventLabel(IntEnum):
    INCEPTIVE = 0
    SCALING = 1
    NOISE = 2


@dataclass(frozen=True)
class SensorModel:
    """
    Sensor parameters for synthetic generation.

    Args:
        threshold: log-intensity step per event
        refractory_us: minimum gap between emitted events at one pixel (0 disables)
        noise_rate: background events per pixel per second
        rng_seed: seed for every random draw made with this model
    """
    threshold: float = 0.2
    refractory_us: int = 0
    noise_rate: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if not self.threshold > 0:
            raise ConfigError(f"threshold must be > 0, got {self.threshold}")
        if self.refractory_us < 0:
            raise ConfigError(f"refractory_us must be >= 0, got {self.refractory_us}")
        if self.noise_rate < 0:
            raise ConfigError(f"noise_rate must be >= 0, got {self.noise_rate}")


@dataclass(frozen=True, eq=False)
class IntensityTrace:
    """Piecewise-linear log intensity of one pixel; a repeated time is a vertical step"""
    x: int
    y: int
    times_us: np.ndarray
    log_values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times_us, dtype=np.int64).reshape(-1)
        values = np.asarray(self.log_values, dtype=np.float64).reshape(-1)
        if len(times) != len(values) or len(times) == 0:
            raise ValueError("Trace needs matching, non-empty times and values")
        if np.any(np.diff(times) < 0):
            raise ValueError("Trace times must be non-decreasing")
        if not np.all(np.isfinite(values)):
            raise ValueError("Trace values must be finite")
        object.__setattr__(self, 'times_us', times)
        object.__setattr__(self, 'log_values', values)


@dataclass(frozen=True, eq=False)
class LabeledStream:
    """Canonical stream plus one EventLabel per event (same order)"""
    stream: EventStream
    labels: np.ndarray

    def __post_init__(self):
        labels = np.array(self.labels, dtype=np.int8, copy=True).reshape(-1)
        if len(labels) != len(self.stream):
            raise ValueError(f"{len(labels)} labels for {len(self.stream)} events")
        labels.flags.writeable = False
        object.__setattr__(self, 'labels', labels)

    def __len__(self) -> int:
        return len(self.stream)

    @property
    def inceptive_mask(self) -> np.ndarray:
        return self.labels == EventLabel.INCEPTIVE

    def label_counts(self) -> dict:
        return {label.name.lower(): int(np.count_nonzero(self.labels == label)) for label in EventLabel}

    @classmethod
    def from_arrays(
        cls,
        x, y, t, p,
        labels,
        geometry: SensorGeometry,
        t_start: Optional[int] = None,
        t_end: Optional[int] = None
    ) -> 'LabeledStream':
        """Canonicalize columns and carry labels along; of two exact duplicates the earlier input wins"""
        x, y, t, p = (np.asarray(column, dtype=np.int64).reshape(-1) for column in (x, y, t, p))
        labels = np.asarray(labels, dtype=np.int8).reshape(-1)
        order, keep = canonical_order(x, y, t, p, geometry)
        selected = order[keep]
        stream, _ = canonicalize_arrays(
            x[selected], y[selected], t[selected], p[selected],
            geometry=geometry, t_start=t_start, t_end=t_end
        )
        return cls(stream=stream, labels=labels[selected])


class SceneSample(NamedTuple):
    name: str
    label: str
    labeled: LabeledStream


# ============================================================
# LEVEL CROSSINGS
# ============================================================

def _trace_events(trace: IntensityTrace, model: SensorModel) -> Tuple[List[int], List[int], List[int]]:
    """(stamps, polarities, labels) for one pixel"""
    threshold = model.threshold
    eps = _LEVEL_EPS * threshold
    times, values = trace.times_us, trace.log_values

    stamps, polarities, labels = [], [], []
    reference = float(values[0])
    last_stamp = None
    direction = 0
    emitted_in_transition = False

    for i in range(len(times) - 1):
        t0, t1 = int(times[i]), int(times[i + 1])
        v0, v1 = float(values[i]), float(values[i + 1])
        change = v1 - v0
        segment_direction = (change > 0) - (change < 0)
        if segment_direction != direction:
            emitted_in_transition = False
            direction = segment_direction
        if segment_direction == 0:
            continue

        while True:
            level = reference + segment_direction * threshold
            if segment_direction > 0 and v1 < level - eps:
                break
            if segment_direction < 0 and v1 > level + eps:
                break
            reference = level
            fraction = min(max((level - v0) / change, 0.0), 1.0)
            stamp = math.floor(t0 + fraction * (t1 - t0) + 0.5)

            if model.refractory_us > 0 and last_stamp is not None and stamp - last_stamp < model.refractory_us:
                continue
            if last_stamp is not None and stamp <= last_stamp:
                stamp = last_stamp + 1
            last_stamp = stamp

            stamps.append(stamp)
            polarities.append(segment_direction)
            labels.append(EventLabel.SCALING if emitted_in_transition else EventLabel.INCEPTIVE)
            emitted_in_transition = True

    return stamps, polarities, labels


def events_from_intensity(
    traces: Union[IntensityTrace, Iterable[IntensityTrace]],
    model: SensorModel,
    geometry: Optional[SensorGeometry] = None,
    t_start: Optional[int] = None,
    t_end: Optional[int] = None
) -> LabeledStream:
    """
    Emit labeled events for one or more pixel traces.

    Args:
        traces: a trace or an iterable of traces (one per pixel)
        model: threshold and refractory period (noise is added by inject_noise)
        geometry: sensor size; inferred from the trace coordinates when omitted
        t_start, t_end: window of the resulting stream; default to the first/last event
    """
    if isinstance(traces, IntensityTrace):
        traces = [traces]

    xs, ys, ts, ps, ls = [], [], [], [], []
    for trace in traces:
        stamps, polarities, labels = _trace_events(trace, model)
        xs.append(np.full(len(stamps), trace.x, dtype=np.int64))
        ys.append(np.full(len(stamps), trace.y, dtype=np.int64))
        ts.append(np.asarray(stamps, dtype=np.int64))
        ps.append(np.asarray(polarities, dtype=np.int64))
        ls.append(np.asarray(labels, dtype=np.int8))

    if not xs:
        xs, ys, ts, ps, ls = [np.zeros(0, dtype=np.int64)] * 4 + [np.zeros(0, dtype=np.int8)]
    x, y, t, p, labels = (np.concatenate(column) for column in (xs, ys, ts, ps, ls))

    if geometry is None:
        geometry = SensorGeometry.infer(x, y)
    return LabeledStream.from_arrays(x, y, t, p, labels, geometry=geometry, t_start=t_start, t_end=t_end)


# ============================================================
# NOISE
# ============================================================

def inject_noise(labeled: LabeledStream, model: SensorModel, rng: Optional[np.random.Generator] = None) -> LabeledStream:
    """
    Add homogeneous, polarity-balanced background events over the stream's window.

    The count is Poisson with mean noise_rate * pixels * duration; pixels and
    times are uniform. Signal events win over noise on exact duplicates.
    """
    if model.noise_rate == 0:
        return labeled

    stream = labeled.stream
    geometry = stream.geometry
    rng = rng if rng is not None else np.random.default_rng(model.rng_seed)

    duration_s = (stream.t_end - stream.t_start) / 1e6
    expected = model.noise_rate * geometry.n_pixels * duration_s
    n_noise = int(rng.poisson(expected))

    noise_x = rng.integers(0, geometry.width, size=n_noise)
    noise_y = rng.integers(0, geometry.height, size=n_noise)
    noise_t = rng.integers(stream.t_start, stream.t_end + 1, size=n_noise)
    noise_p = rng.integers(0, 2, size=n_noise) * 2 - 1

    logger.debug(f"Injecting {n_noise} noise events (expected {expected:.1f})")
    return LabeledStream.from_arrays(
        np.concatenate((stream.x, noise_x)),
        np.concatenate((stream.y, noise_y)),
        np.concatenate((stream.t, noise_t)),
        np.concatenate((stream.p, noise_p)),
        np.concatenate((labeled.labels, np.full(n_noise, EventLabel.NOISE, dtype=np.int8))),
        geometry=geometry,
        t_start=stream.t_start,
        t_end=stream.t_end
    )


# ============================================================
# SCENES
# ============================================================

def edge_arrivals(geometry: SensorGeometry, velocity: float, direction: int = 1, delay_us: int = 0) -> np.ndarray:
    """Arrival time (us) of the edge at every column"""
    if not velocity > 0:
        raise ConfigError(f"velocity must be > 0, got {velocity}")
    if direction not in (1, -1):
        raise ConfigError(f"direction must be 1 or -1, got {direction}")
    columns = np.arange(geometry.width, dtype=np.float64)
    distance = columns if direction == 1 else (geometry.width - 1) - columns
    return (delay_us + np.floor(distance * 1e6 / velocity + 0.5)).astype(np.int64)


def moving_edge_scene(
    geometry: SensorGeometry,
    velocity: float,
    contrast_steps: int,
    model: SensorModel,
    direction: int = 1,
    polarity: int = 1,
    delay_us: int = 0,
    spacing_us: int = 500,
    t_end: Optional[int] = None,
    rows: Optional[Iterable[int]] = None
) -> Tuple[LabeledStream, np.ndarray]:
    """
    A vertical edge sweeping horizontally at `velocity` px/s.

    Every pixel of column x ramps its log intensity by contrast_steps thresholds,
    one crossing every spacing_us, with the first crossing exactly at the
    column's arrival time. Columns whose burst would not finish by t_end are
    left out. `rows` limits the edge to a band of rows (default: all). Noise
    is added when the model has a non-zero noise_rate.

    Returns:
        (labeled stream, arrival time per column)
    """
    if contrast_steps < 1:
        raise ConfigError(f"contrast_steps must be >= 1, got {contrast_steps}")
    if spacing_us < 1:
        raise ConfigError(f"spacing_us must be >= 1, got {spacing_us}")
    if polarity not in (1, -1):
        raise ConfigError(f"polarity must be 1 or -1, got {polarity}")

    rows = list(range(geometry.height)) if rows is None else [int(row) for row in rows]
    arrivals = edge_arrivals(geometry, velocity, direction, delay_us)
    swing = polarity * contrast_steps * model.threshold

    traces = []
    for column, arrival in enumerate(arrivals):
        burst_end = int(arrival) + (contrast_steps - 1) * spacing_us
        if t_end is not None and burst_end > t_end:
            continue
        ramp_start = int(arrival) - spacing_us
        times = [ramp_start, ramp_start + contrast_steps * spacing_us]
        for row in rows:
            traces.append(IntensityTrace(x=column, y=row, times_us=times, log_values=[0.0, swing]))

    labeled = events_from_intensity(traces, model, geometry=geometry, t_start=0, t_end=t_end)
    return inject_noise(labeled, model), arrivals


def two_class_scenes(
    n_per_class: int,
    geometry: SensorGeometry = SensorGeometry(32, 32),
    model: Optional[SensorModel] = None,
    seed: int = 0,
    window_us: int = 100_000,
    contrast_range: Tuple[int, int] = (2, 4),
    edge_rows: Optional[int] = None
) -> List[SceneSample]:
    """
    Synthetic two-class task: left-to-right vs right-to-left edge sweeps.

    Per sample: sweep duration 40-80 ms, start delay 0-10 ms, contrast drawn
    from contrast_range (inclusive) and a random edge polarity, plus background
    noise from `model` (default 5 events/pixel/s). With edge_rows the edge
    covers a band of that many rows at a random height instead of the full
    sensor. Samples are ordered class by class.
    """
    low, high = contrast_range
    if not 1 <= low <= high:
        raise ConfigError(f"contrast_range must satisfy 1 <= low <= high, got {contrast_range}")
    if edge_rows is not None and not 1 <= edge_rows <= geometry.height:
        raise ConfigError(f"edge_rows must be in [1, {geometry.height}], got {edge_rows}")
    model = model or SensorModel(noise_rate=5.0)
    children = np.random.SeedSequence(seed).spawn(len(CLASS_NAMES) * n_per_class)

    samples = []
    for class_index, class_name in enumerate(CLASS_NAMES):
        direction = 1 if class_index == 0 else -1
        for i in range(n_per_class):
            rng = np.random.default_rng(children[class_index * n_per_class + i])
            sweep_us = int(rng.integers(40_000, 80_001))
            velocity = max(geometry.width - 1, 1) * 1e6 / sweep_us
            rows = None
            if edge_rows is not None:
                top = int(rng.integers(0, geometry.height - edge_rows + 1))
                rows = range(top, top + edge_rows)
            scene, _ = moving_edge_scene(
                geometry,
                velocity=velocity,
                contrast_steps=int(rng.integers(low, high + 1)),
                model=SensorModel(threshold=model.threshold, refractory_us=model.refractory_us),
                direction=direction,
                polarity=int(rng.choice((-1, 1))),
                delay_us=int(rng.integers(0, 10_001)),
                t_end=window_us,
                rows=rows
            )
            scene = inject_noise(scene, model, rng=rng)
            samples.append(SceneSample(name=f"{class_name}_{i:04d}", label=class_name, labeled=scene))

    logger.info(f"✅ Generated {len(samples)} synthetic scenes ({n_per_class} per class)")
    return samples


def slanted_edge_arrivals(
    geometry: SensorGeometry,
    sweep_us: float,
    slant_columns: float,
    top_first: bool,
    delay_us: int = 0
) -> np.ndarray:
    """
    (H, W) arrival times of a slanted edge sweeping left to right.

    The leading end of the edge is ahead of the trailing end by slant_columns
    columns; sweep_us is the time to cross W - 1 columns.
    """
    if not sweep_us > 0:
        raise ConfigError(f"sweep_us must be > 0, got {sweep_us}")
    if slant_columns < 0:
        raise ConfigError(f"slant_columns must be >= 0, got {slant_columns}")
    column_us = sweep_us / max(geometry.width - 1, 1)
    rows = np.arange(geometry.height, dtype=np.float64) / max(geometry.height - 1, 1)
    lag = slant_columns * (rows if top_first else 1.0 - rows)
    columns = np.arange(geometry.width, dtype=np.float64)
    return (delay_us + np.floor((columns[None, :] + lag[:, None]) * column_us + 0.5)).astype(np.int64)


def slanted_edge_scenes(
    n_per_class: int,
    geometry: SensorGeometry = SensorGeometry(32, 32),
    model: Optional[SensorModel] = None,
    seed: int = 0,
    window_us: int = 100_000,
    slant_range: Tuple[float, float] = (1.0, 8.0),
    contrast_range: Tuple[int, int] = (2, 10),
    spacing_range: Tuple[int, int] = (500, 2_500),
    polarity: int = 1
) -> List[SceneSample]:
    """
    Synthetic two-class task: which end of a slanted edge arrives first.

    Every sample is a left-to-right sweep of 30-50 ms after a 2-10 ms delay.
    The slant (columns of lag between the two ends) is drawn from slant_range.
    Contrast changes linearly from the top row to the bottom row between two
    values drawn from contrast_range, and all crossings of a pixel are
    spacing_us apart (drawn once per sample from spacing_range). Raw mean
    times therefore lag by (contrast - 1) * spacing / 2 in a row-dependent
    way that is unrelated to the class, while the first event of every burst
    sits on the true arrival. Background noise comes from `model` (default
    10 events/pixel/s). Mirroring a sample left-right keeps its class.
    """
    slant_low, slant_high = slant_range
    contrast_low, contrast_high = contrast_range
    spacing_low, spacing_high = spacing_range
    if not 0 <= slant_low <= slant_high:
        raise ConfigError(f"slant_range must satisfy 0 <= low <= high, got {slant_range}")
    if not 1 <= contrast_low <= contrast_high:
        raise ConfigError(f"contrast_range must satisfy 1 <= low <= high, got {contrast_range}")
    if not 1 <= spacing_low <= spacing_high:
        raise ConfigError(f"spacing_range must satisfy 1 <= low <= high, got {spacing_range}")
    if polarity not in (1, -1):
        raise ConfigError(f"polarity must be 1 or -1, got {polarity}")
    model = model or SensorModel(noise_rate=10.0)
    signal_model = SensorModel(threshold=model.threshold, refractory_us=model.refractory_us)
    children = np.random.SeedSequence(seed).spawn(len(SLANT_CLASS_NAMES) * n_per_class)
    rows = np.arange(geometry.height, dtype=np.float64) / max(geometry.height - 1, 1)

    samples = []
    for class_index, class_name in enumerate(SLANT_CLASS_NAMES):
        for i in range(n_per_class):
            rng = np.random.default_rng(children[class_index * n_per_class + i])
            arrivals = slanted_edge_arrivals(
                geometry,
                sweep_us=float(rng.integers(30_000, 50_001)),
                slant_columns=float(rng.uniform(slant_low, slant_high)),
                top_first=class_index == 0,
                delay_us=int(rng.integers(2_000, 10_001))
            )
            top, bottom = rng.integers(contrast_low, contrast_high + 1, size=2)
            steps = np.rint(top + (bottom - top) * rows).astype(np.int64)
            spacing = int(rng.integers(spacing_low, spacing_high + 1))

            traces = []
            for (row, column), arrival in np.ndenumerate(arrivals):
                k = int(steps[row])
                if int(arrival) + (k - 1) * spacing > window_us:
                    continue
                ramp_start = int(arrival) - spacing
                traces.append(IntensityTrace(
                    x=column, y=row,
                    times_us=[ramp_start, ramp_start + k * spacing],
                    log_values=[0.0, polarity * k * model.threshold]
                ))

            scene = events_from_intensity(traces, signal_model, geometry=geometry, t_start=0, t_end=window_us)
            scene = inject_noise(scene, model, rng=rng)
            samples.append(SceneSample(name=f"{class_name}_{i:04d}", label=class_name, labeled=scene))

    logger.info(f"✅ Generated {len(samples)} slanted-edge scenes ({n_per_class} per class)")
    return samples


def random_workload(
    n_events: int,
    geometry: SensorGeometry = SensorGeometry(304, 240),
    seed: int = 0,
    burst_len: int = 4,
    burst_gap_us: int = 200,
    duration_us: Optional[int] = None
) -> EventStream:
    """
    Bursty random stream for throughput runs.

    Bursts of burst_len same-pixel, same-polarity events spaced burst_gap_us
    apart start at uniform times; the default duration keeps the rate near
    one event per microsecond. Exact duplicates are collapsed, so the result
    can hold slightly fewer than n_events.
    """
    if n_events < 0 or burst_len < 1 or burst_gap_us < 1:
        raise ConfigError("n_events >= 0, burst_len >= 1 and burst_gap_us >= 1 required")
    rng = np.random.default_rng(seed)
    duration_us = duration_us or max(n_events, 1)

    n_bursts = -(-n_events // burst_len)
    starts = rng.integers(0, duration_us, size=n_bursts)
    pixels = rng.integers(0, geometry.n_pixels, size=n_bursts)
    polarity = rng.integers(0, 2, size=n_bursts) * 2 - 1

    offsets = np.arange(burst_len, dtype=np.int64) * burst_gap_us
    t = (starts[:, None] + offsets[None, :]).reshape(-1)[:n_events]
    pixel = np.repeat(pixels, burst_len)[:n_events]
    p = np.repeat(polarity, burst_len)[:n_events]

    stream, duplicates = canonicalize_arrays(
        pixel % geometry.width, pixel // geometry.width, t, p, geometry=geometry
    )
    logger.debug(f"Workload: {len(stream)} events ({duplicates} duplicates collapsed)")
    return stream

# models/analytics.py

"""
Event-reduction statistics and pipeline throughput measurement.
"""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from models.events import EventStream, group_tracks
from models.filters import FilterParams, filter_masks
from models.surfaces import Aggregator, SurfaceVariant, compose_frame
from models.synth import LabeledStream
from utils.errors import ConfigError
from utils.reports import write_json_report

logger = logging.getLogger(__name__)

STAGES = ('group', 'filter', 'surface', 'count')


# ============================================================
# REDUCTION
# ============================================================

@dataclass(frozen=True)
class SampleReduction:
    """Filter survivor counts of one sample (or of a whole population)"""
    name: str
    raw_count: int
    fsae_count: int
    ie_count: int
    tracks: int
    tracks_without_ie: int

    @property
    def reduction_vs_raw(self) -> float:
        return 1.0 - self.ie_count / self.raw_count if self.raw_count else 0.0

    @property
    def reduction_vs_fsae(self) -> float:
        return 1.0 - self.ie_count / self.fsae_count if self.fsae_count else 0.0

    @property
    def fallback_pixel_fraction(self) -> float:
        """Share of (pixel, polarity) tracks that carry events but no inceptive event"""
        return self.tracks_without_ie / self.tracks if self.tracks else 0.0

    def to_dict(self) -> Dict[str, object]:
        data = asdict(self)
        data.update(
            reduction_vs_raw=self.reduction_vs_raw,
            reduction_vs_fsae=self.reduction_vs_fsae,
            fallback_pixel_fraction=self.fallback_pixel_fraction
        )
        return data


@dataclass(frozen=True)
class ReductionReport:
    """Per-sample reductions plus the event-weighted aggregate"""
    params: FilterParams
    per_sample: List[SampleReduction]
    aggregate: SampleReduction
    source: str = 'dataset'

    @property
    def reduction_vs_raw(self) -> float:
        return self.aggregate.reduction_vs_raw

    @property
    def reduction_vs_fsae(self) -> float:
        return self.aggregate.reduction_vs_fsae

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([sample.to_dict() for sample in self.per_sample])

    def to_dict(self, include_samples: bool = True) -> Dict[str, object]:
        data = {
            'source': self.source,
            'tau_minus_us': self.params.tau_minus_us,
            'tau_plus_us': self.params.tau_plus_us,
            'samples': len(self.per_sample),
            'aggregate': self.aggregate.to_dict(),
        }
        if include_samples:
            data['per_sample'] = [sample.to_dict() for sample in self.per_sample]
        return data


def _named_streams(samples) -> List[Tuple[str, EventStream]]:
    named = []
    for index, sample in enumerate(samples):
        if isinstance(sample, EventStream):
            named.append((f"sample_{index:05d}", sample))
        elif isinstance(sample, tuple):
            named.append((str(sample[0]), sample[1]))
        else:
            named.append((getattr(sample, 'name', f"sample_{index:05d}"), sample.stream))
    return named


def _track_counts(tracks, ie: np.ndarray) -> Tuple[int, int]:
    if not len(tracks):
        return 0, 0
    ie_per_track = np.add.reduceat(ie.astype(np.int64), tracks.starts[:-1])
    return len(tracks), int(np.count_nonzero(ie_per_track == 0))


def sample_reduction(name: str, stream: EventStream, params: FilterParams) -> SampleReduction:
    tracks = group_tracks(stream)
    fsae, ie = filter_masks(tracks, params)
    n_tracks, without_ie = _track_counts(tracks, ie)
    return SampleReduction(
        name=name,
        raw_count=len(stream),
        fsae_count=int(np.count_nonzero(fsae)),
        ie_count=int(np.count_nonzero(ie)),
        tracks=n_tracks,
        tracks_without_ie=without_ie
    )


def _aggregate(per_sample: Sequence[SampleReduction]) -> SampleReduction:
    return SampleReduction(
        name='aggregate',
        raw_count=sum(s.raw_count for s in per_sample),
        fsae_count=sum(s.fsae_count for s in per_sample),
        ie_count=sum(s.ie_count for s in per_sample),
        tracks=sum(s.tracks for s in per_sample),
        tracks_without_ie=sum(s.tracks_without_ie for s in per_sample)
    )


def reduction_stats(samples, params: FilterParams = FilterParams(), source: str = 'dataset') -> ReductionReport:
    """
    Exact FSAE / IE survivor counts per sample and over all samples.

    Args:
        samples: EventStreams, DatasetSamples or (name, stream) pairs; at least one
        params: filter thresholds
        source: provenance tag stored in the report ('dataset', 'surrogate', ...)

    Returns:
        ReductionReport whose aggregate is event-weighted (totals, not a mean of ratios)
    """
    named = _named_streams(samples)
    if not named:
        raise ConfigError("reduction_stats needs at least one sample")

    per_sample = [sample_reduction(name, stream, params) for name, stream in named]
    report = ReductionReport(params=params, per_sample=per_sample, aggregate=_aggregate(per_sample), source=source)
    logger.info(
        f"📊 {len(per_sample)} samples, {report.aggregate.raw_count} events: "
        f"reduction vs raw {report.reduction_vs_raw:.3f}, vs FSAE {report.reduction_vs_fsae:.3f} ({params.tag})"
    )
    return report


def tau_sweep(samples, taus: Iterable[int], tau_plus_us: Optional[int] = None) -> pd.DataFrame:
    """
    Aggregate reductions for a range of thresholds.

    tau_minus = tau for every row; tau_plus follows tau unless pinned with tau_plus_us.
    Tracks are grouped once per sample.
    """
    grouped = [group_tracks(stream) for _, stream in _named_streams(samples)]
    raw = sum(tracks.event_count for tracks in grouped)

    rows = []
    for tau in taus:
        params = FilterParams(tau_minus_us=tau, tau_plus_us=tau_plus_us or tau)
        fsae_total = ie_total = 0
        for tracks in grouped:
            fsae, ie = filter_masks(tracks, params)
            fsae_total += int(np.count_nonzero(fsae))
            ie_total += int(np.count_nonzero(ie))
        rows.append({
            'tau_minus_us': params.tau_minus_us,
            'tau_plus_us': params.tau_plus_us,
            'raw_count': raw,
            'fsae_count': fsae_total,
            'ie_count': ie_total,
            'reduction_vs_raw': 1.0 - ie_total / raw if raw else 0.0,
            'reduction_vs_fsae': 1.0 - ie_total / fsae_total if fsae_total else 0.0,
        })
    return pd.DataFrame(rows)


# ============================================================
# GROUND-TRUTH RECOVERY
# ============================================================

@dataclass(frozen=True)
class RecoveryReport:
    true_positives: int
    false_positives: int
    false_negatives: int

    @property
    def precision(self) -> float:
        kept = self.true_positives + self.false_positives
        return self.true_positives / kept if kept else 1.0

    @property
    def recall(self) -> float:
        relevant = self.true_positives + self.false_negatives
        return self.true_positives / relevant if relevant else 1.0

    def to_dict(self) -> Dict[str, object]:
        data = asdict(self)
        data.update(precision=self.precision, recall=self.recall)
        return data


def recovery_stats(labeled: LabeledStream, kept_mask: np.ndarray) -> RecoveryReport:
    """Score a filter's survivors (mask in stream order) against the inceptive labels"""
    kept_mask = np.asarray(kept_mask, dtype=bool)
    if kept_mask.shape != labeled.labels.shape:
        raise ValueError(f"Mask of shape {kept_mask.shape} does not match {len(labeled)} events")
    truth = labeled.inceptive_mask
    return RecoveryReport(
        true_positives=int(np.count_nonzero(kept_mask & truth)),
        false_positives=int(np.count_nonzero(kept_mask & ~truth)),
        false_negatives=int(np.count_nonzero(~kept_mask & truth))
    )


# ============================================================
# THROUGHPUT
# ============================================================

@dataclass
class ThroughputReport:
    events_processed: int
    wall_time_s: float
    repetitions: int
    workers: int
    variant: str
    run_times_s: List[float] = field(default_factory=list)
    stage_seconds: Dict[str, float] = field(default_factory=dict)

    @property
    def events_per_second(self) -> float:
        return self.events_processed / self.wall_time_s if self.wall_time_s > 0 else float('inf')

    @property
    def stage_rates(self) -> Dict[str, float]:
        return {
            stage: (self.events_processed / seconds if seconds > 0 else float('inf'))
            for stage, seconds in self.stage_seconds.items()
        }

    def to_dict(self) -> Dict[str, object]:
        data = asdict(self)
        data.update(events_per_second=self.events_per_second, stage_rates=self.stage_rates)
        return data


def _compose_chunk(job) -> int:
    stream, params, variant, aggregator = job
    return compose_frame(stream, params, variant=variant, aggregator=aggregator).events_used


def _run_once(stream, params, variant, aggregator, workers, chunk_us, stage_times) -> float:
    start = time.perf_counter()
    if workers == 1:
        compose_frame(stream, params, variant=variant, aggregator=aggregator, stage_times=stage_times)
    else:
        jobs = [(piece, params, variant, aggregator) for piece in (stream.split(chunk_us) or [stream])]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            list(pool.map(_compose_chunk, jobs))
    return time.perf_counter() - start


def throughput_bench(
    workload: Union[EventStream, Callable[[], EventStream]],
    params: FilterParams = FilterParams(),
    repetitions: int = 5,
    variant: Union[SurfaceVariant, str] = SurfaceVariant.IETS,
    aggregator: Union[Aggregator, str] = Aggregator.MEAN,
    workers: int = 1,
    chunk_us: int = 100_000,
    warmup: bool = True
) -> ThroughputReport:
    """
    Time the full pipeline (group -> filter -> surface -> compose) on a workload.

    Single-worker runs compose the whole stream as one frame and record the
    per-stage breakdown; multi-worker runs split it into chunk_us windows and
    compose them in a process pool. The reported time is the median over
    repetitions, after one untimed warm-up run.
    """
    if repetitions < 1:
        raise ConfigError(f"repetitions must be >= 1, got {repetitions}")
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    stream = workload() if callable(workload) else workload
    variant = SurfaceVariant.parse(variant)
    aggregator = Aggregator(aggregator)

    logger.info(f"🚀 Benchmarking {len(stream)} events, {repetitions} runs, {workers} worker(s)")
    if warmup:
        _run_once(stream, params, variant, aggregator, workers, chunk_us, None)

    run_times = []
    stage_runs: Dict[str, List[float]] = {stage: [] for stage in STAGES}
    for _ in range(repetitions):
        stage_times: Optional[Dict[str, float]] = {} if workers == 1 else None
        run_times.append(_run_once(stream, params, variant, aggregator, workers, chunk_us, stage_times))
        if stage_times is not None:
            for stage in STAGES:
                stage_runs[stage].append(stage_times.get(stage, 0.0))

    report = ThroughputReport(
        events_processed=len(stream),
        wall_time_s=float(np.median(run_times)),
        repetitions=repetitions,
        workers=workers,
        variant=variant.value,
        run_times_s=run_times,
        stage_seconds={stage: float(np.median(times)) for stage, times in stage_runs.items() if times}
    )
    logger.info(f"📊 {report.events_per_second:,.0f} events/s (median of {repetitions})")
    return report


def write_report(report, path, kind: Optional[str] = None):
    """Write any report object with a to_dict() as schema-tagged JSON"""
    if kind is None:
        kind = {
            ReductionReport: 'reduction',
            ThroughputReport: 'throughput',
            RecoveryReport: 'recovery',
        }.get(type(report), 'report')
    payload = report.to_dict() if hasattr(report, 'to_dict') else dict(report)
    return write_json_report(payload, path, kind)

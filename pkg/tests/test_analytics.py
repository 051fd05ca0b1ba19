
import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import json
from pathlib import Path

import numpy as np
import pytest

from models.analytics import (
    RecoveryReport,
    reduction_stats,
    recovery_stats,
    sample_reduction,
    tau_sweep,
    throughput_bench,
    write_report,
)
from models.events import EventStream, SensorGeometry, canonicalize_arrays
from models.filters import FilterParams
from models.synth import EventLabel, LabeledStream, random_workload
from services.dataset_loader import load_dataset, read_event_file, surrogate_corpus
from utils.errors import ConfigError
from utils.reports import read_json_report

FIXTURES = Path(__file__).parent / 'fixtures'


@pytest.fixture
def three_pixel_stream():
    """5 events: FSAE keeps 4, IE keeps 1 (tau = 12 ms)"""
    stream, _ = canonicalize_arrays(
        [0, 0, 1, 2, 2], [0, 0, 0, 0, 0], [0, 1_000, 5_000, 2_000, 30_000], [1, 1, 1, -1, -1],
        geometry=SensorGeometry(3, 1)
    )
    return stream


def test_sample_reduction(three_pixel_stream):
    """Test exact survivor counts and ratios"""

    reduction = sample_reduction('s', three_pixel_stream, FilterParams())

    assert (reduction.raw_count, reduction.fsae_count, reduction.ie_count) == (5, 4, 1)
    assert reduction.reduction_vs_raw == pytest.approx(0.8)
    assert reduction.reduction_vs_fsae == pytest.approx(0.75)
    assert reduction.tracks == 3
    assert reduction.fallback_pixel_fraction == pytest.approx(2 / 3)


def test_isolated_events_reduce_fully():
    """Test a stream of isolated events loses every event to the IE filter"""

    report = reduction_stats([read_event_file(FIXTURES / 'isolated.csv')])

    assert report.aggregate.raw_count == 4
    assert report.aggregate.ie_count == 0
    assert report.reduction_vs_raw == 1.0
    assert report.reduction_vs_fsae == 1.0


def test_aggregate_is_event_weighted(three_pixel_stream):
    """Test the aggregate sums counts instead of averaging ratios"""

    big, _ = canonicalize_arrays(
        np.zeros(100, dtype=int), np.zeros(100, dtype=int), np.arange(100) * 100_000, np.ones(100, dtype=int),
        geometry=SensorGeometry(1, 1)
    )
    report = reduction_stats([('small', three_pixel_stream), ('big', big)])

    # every event of `big` is 100 ms apart: all pass FSAE, none is inceptive
    assert report.aggregate.raw_count == 105
    assert report.aggregate.fsae_count == 104
    assert report.aggregate.ie_count == 1
    assert report.reduction_vs_raw == pytest.approx(1 - 1 / 105)
    assert [s.name for s in report.per_sample] == ['small', 'big']
    assert len(report.to_frame()) == 2


def test_empty_inputs():
    """Test no samples is an error and empty samples reduce by 0"""

    with pytest.raises(ConfigError):
        reduction_stats([])

    report = reduction_stats([EventStream.empty(SensorGeometry(2, 2))])
    assert report.reduction_vs_raw == 0.0
    assert report.reduction_vs_fsae == 0.0


def test_tau_sweep_fsae_monotone():
    """Test FSAE survivors never grow with the threshold"""

    samples = [random_workload(5_000, geometry=SensorGeometry(32, 32), seed=seed, duration_us=200_000) for seed in range(3)]
    sweep = tau_sweep(samples, [500, 2_000, 8_000, 32_000])

    assert list(sweep['tau_minus_us']) == [500, 2_000, 8_000, 32_000]
    assert list(sweep['fsae_count']) == sorted(sweep['fsae_count'], reverse=True)
    assert (sweep['ie_count'] <= sweep['fsae_count']).all()
    assert (sweep['fsae_count'] <= sweep['raw_count']).all()


def test_recovery_stats():
    """Test precision and recall against inceptive labels"""

    labeled = LabeledStream.from_arrays(
        [0, 0, 0, 1], [0, 0, 0, 0], [0, 10, 20, 5], [1, 1, 1, 1],
        [EventLabel.INCEPTIVE, EventLabel.SCALING, EventLabel.INCEPTIVE, EventLabel.NOISE],
        geometry=SensorGeometry(2, 1)
    )
    # stream order: t=0, 5 (noise), 10, 20
    report = recovery_stats(labeled, [True, True, False, False])

    assert (report.true_positives, report.false_positives, report.false_negatives) == (1, 1, 1)
    assert report.precision == 0.5
    assert report.recall == 0.5
    assert RecoveryReport(0, 0, 0).precision == 1.0

    with pytest.raises(ValueError):
        recovery_stats(labeled, [True])


def test_throughput_bench_single_worker():
    """Test the benchmark report and stage breakdown"""

    report = throughput_bench(lambda: random_workload(20_000, seed=1), repetitions=2)

    assert report.events_processed > 0
    assert report.repetitions == 2
    assert len(report.run_times_s) == 2
    assert report.events_per_second > 0
    assert set(report.stage_seconds) == {'group', 'filter', 'surface', 'count'}
    assert set(report.to_dict()['stage_rates']) == set(report.stage_seconds)


def test_throughput_bench_workers():
    """Test the process-pool path over time chunks"""

    report = throughput_bench(random_workload(20_000, seed=2), repetitions=1, workers=2, chunk_us=5_000, warmup=False)

    assert report.workers == 2
    assert report.stage_seconds == {}

    with pytest.raises(ConfigError):
        throughput_bench(random_workload(10), repetitions=0)


def test_write_report(three_pixel_stream, tmp_path):
    """Test reports are schema-tagged JSON with sorted keys"""

    report = reduction_stats([three_pixel_stream])
    path = write_report(report, tmp_path / 'out' / 'reduction.json')
    document = read_json_report(path)
    text = path.read_text()

    assert document['schema'] == 'iets.reduction/1'
    assert document['aggregate']['ie_count'] == 1
    assert document['tau_minus_us'] == 12_000
    assert list(json.loads(text)) == sorted(document)
    assert text.endswith('\n')


@pytest.mark.slow
def test_throughput_claim():
    """Test the single-worker pipeline exceeds 100k events/s on 1M events"""

    report = throughput_bench(lambda: random_workload(1_000_000, seed=0), repetitions=5)

    assert report.events_processed > 990_000
    assert report.events_per_second >= 100_000


@pytest.mark.slow
def test_reduction_claims():
    """Test >85% reduction vs raw and >70% vs FSAE at tau = 12 ms"""

    root = os.getenv('IETS_DATASET_ROOT')
    if root and Path(root).is_dir():
        samples, source = load_dataset(root, window_us=100_000).samples, 'dataset'
    else:
        samples, source = surrogate_corpus(50, seed=0), 'surrogate'

    report = reduction_stats(samples, FilterParams(12_000, 12_000), source=source)

    assert report.source == source
    assert report.reduction_vs_raw > 0.85
    assert report.reduction_vs_fsae > 0.70


if __name__ == '__main__':
    pytest.main([__file__, '-v'])

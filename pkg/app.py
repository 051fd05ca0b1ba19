# app.py - Command-line front end

"""
Batch pipelines over event recordings.

    python app.py convert   recording.dat recording.csv
    python app.py surface   data/ --out frames/ --variants raw_ts,fsae_ts,iets
    python app.py stats     data/ --report reduction.json
    python app.py bench     --events 1000000 --report throughput.json
    python app.py synth     synthetic/ --corpus 50
    python app.py eval      data/ --report eval.json

Global flags (--log-level, --log-file, --config, --workers) go before the
command. With no inputs, surface / stats / eval fall back to IETS_DATASET_ROOT;
stats and eval then fall back to the synthetic two-class corpus.
"""

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config.config import Config, PipelineConfig, load_pipeline_config
from models.analytics import reduction_stats, tau_sweep, throughput_bench, write_report
from models.classifier import frame_features, run_variant_comparison, save_model, train_linear
from models.events import SensorGeometry
from models.surfaces import Aggregator, SurfaceVariant, compose_frame
from models.synth import MIRRORED_LABELS, SensorModel, moving_edge_scene, random_workload, slanted_edge_scenes, two_class_scenes
from services.csv_events import write_csv_events, write_label_csv
from services.dataset_loader import (
    DatasetSample,
    list_event_files,
    read_event_file,
    slant_corpus,
    surrogate_corpus,
    synthetic_corpus,
    write_event_file,
)
from services.frame_export import frame_filename, write_frame
from utils.errors import ConfigError, IetsError
from utils.logger import get_colored_logger, setup_logger
from utils.reports import dumps_report, write_json_report

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURES = 1
EXIT_USAGE = 2

MANIFEST_NAME = 'frames_manifest.csv'
MANIFEST_COLUMNS = ['sample', 'label', 'variant', 'file', 'events_raw', 'events_used', 'fallback_pixels']
COMPARISON_VARIANTS = ('raw_ts', 'fsae_ts', 'iets')
SYNTHETIC_TASKS = ('slant', 'direction')
SAMPLE_ERRORS = (IetsError, OSError, UnicodeDecodeError)

Job = Tuple[Path, Optional[str], PipelineConfig]


# ============================================================
# HELPERS
# ============================================================

def _dataset_root() -> str:
    # read per call, not at import
    return os.getenv('IETS_DATASET_ROOT', Config.DATASET_ROOT)


def _collect_inputs(inputs: Sequence[str], fmt: str) -> List[Tuple[Path, Optional[str]]]:
    """Expand directories to their sorted event files; plain paths are kept as given"""
    pairs = []
    for entry in inputs:
        path = Path(entry)
        if path.is_dir():
            pairs.extend(list_event_files(path, fmt))
        else:
            pairs.append((path, None))
    return pairs


def _jobs(pipeline: PipelineConfig) -> List[Job]:
    inputs = pipeline.inputs or ((_dataset_root(),) if _dataset_root() else ())
    return [(path, label, pipeline) for path, label in _collect_inputs(inputs, pipeline.input_format)]


def _map_samples(func: Callable[[Job], Any], jobs: Sequence[Job], workers: int) -> List[Any]:
    """Results come back in job order whatever the worker count"""
    if workers <= 1 or len(jobs) <= 1:
        return [func(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(func, jobs))


def _report_failures(failures: Sequence[Tuple[str, str]], total: int) -> int:
    if not failures:
        return EXIT_OK
    logger.error(f"❌ {len(failures)} of {total} samples failed:")
    for path, reason in failures:
        logger.error(f"   {path}: {reason}")
    return EXIT_FAILURES


def _emit(payload: Dict[str, Any], kind: str, path: Optional[str]):
    if path:
        write_json_report(payload, path, kind)
    else:
        sys.stdout.write(dumps_report(payload, kind))


def _load_sample(job: Job) -> Tuple[Optional[DatasetSample], Optional[str]]:
    path, label, pipeline = job
    try:
        stream = read_event_file(path, fmt=pipeline.input_format, window_us=pipeline.window_us)
    except SAMPLE_ERRORS as e:
        return None, str(e)
    return DatasetSample(stream=stream, label=label, source_path=str(path)), None


def _load_samples(pipeline: PipelineConfig) -> Tuple[List[DatasetSample], List[Tuple[str, str]], int]:
    jobs = _jobs(pipeline)
    samples, failures = [], []
    for (path, _, _), (sample, error) in zip(jobs, _map_samples(_load_sample, jobs, pipeline.workers)):
        if error is None:
            samples.append(sample)
        else:
            failures.append((str(path), error))
    return samples, failures, len(jobs)


def _int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(',') if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from e


# ============================================================
# COMMANDS
# ============================================================

def cmd_convert(args, pipeline: PipelineConfig) -> int:
    source = args.from_format or pipeline.input_format
    try:
        stream = read_event_file(args.input, fmt=source)
        target = write_event_file(stream, args.output, fmt=args.to_format)
    except SAMPLE_ERRORS as e:
        logger.error(f"❌ Could not convert {args.input}: {e}")
        return EXIT_FAILURES
    logger.info(f"✅ Converted {len(stream)} events: {args.input} -> {target}")
    return EXIT_OK


def _surface_sample(job: Job) -> Tuple[List[Dict[str, Any]], Optional[str]]:
    path, label, pipeline = job
    output_dir = Path(pipeline.output_dir)
    sample_dir = output_dir / label if label else output_dir
    params = pipeline.filter_params
    rows = []
    try:
        stream = read_event_file(path, fmt=pipeline.input_format, window_us=pipeline.window_us)
        for variant in pipeline.surface_variants:
            frame = compose_frame(stream, params, variant=variant, aggregator=Aggregator(pipeline.aggregator))
            name = frame_filename(path.stem, variant, params, pipeline.output_format)
            target = write_frame(frame, sample_dir / name, pipeline.output_format)
            rows.append({
                'sample': path.stem,
                'label': label or '',
                'variant': variant.value,
                'file': target.relative_to(output_dir).as_posix(),
                'events_raw': len(stream),
                'events_used': frame.events_used,
                'fallback_pixels': frame.fallback_pixels,
            })
    except SAMPLE_ERRORS as e:
        return [], str(e)
    return rows, None


def cmd_surface(args, pipeline: PipelineConfig) -> int:
    jobs = _jobs(pipeline)
    if not jobs:
        raise ConfigError("No input samples: pass paths or set IETS_DATASET_ROOT")

    logger.info(f"🚀 Composing {len(jobs)} samples x {len(pipeline.variants)} variant(s) into {pipeline.output_dir}")
    rows, failures = [], []
    for (path, _, _), (sample_rows, error) in zip(jobs, _map_samples(_surface_sample, jobs, pipeline.workers)):
        if error is None:
            rows.extend(sample_rows)
        else:
            failures.append((str(path), error))

    manifest_path = Path(pipeline.output_dir) / MANIFEST_NAME
    try:
        manifest_path.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(rows, columns=MANIFEST_COLUMNS).to_csv(manifest_path, index=False, lineterminator='\n')
    except OSError as e:
        logger.error(f"❌ Could not write {manifest_path}: {e}")
        return EXIT_FAILURES

    logger.info(f"✅ Wrote {len(rows)} frames, manifest at {manifest_path}")
    return _report_failures(failures, len(jobs))


def cmd_stats(args, pipeline: PipelineConfig) -> int:
    failures, total = [], 0
    if args.surrogate is None and (pipeline.inputs or _dataset_root()):
        samples, failures, total = _load_samples(pipeline)
        source = 'dataset'
        if not total:
            where = ', '.join(pipeline.inputs) if pipeline.inputs else _dataset_root()
            logger.error(f"❌ No event files under {where}")
            return EXIT_FAILURES
        if not samples:
            return _report_failures(failures, total)
    else:
        per_class = args.surrogate or 50
        logger.warning(f"⚠️ No dataset given; using the synthetic surrogate corpus ({per_class} per class)")
        samples = surrogate_corpus(per_class, seed=pipeline.seed)
        source = 'surrogate'

    report = reduction_stats(samples, pipeline.filter_params, source=source)
    payload = report.to_dict(include_samples=not args.summary_only)
    if args.tau_sweep:
        payload['tau_sweep'] = tau_sweep(samples, args.tau_sweep).to_dict('records')
    _emit(payload, 'reduction', args.report)

    if args.per_sample_csv:
        try:
            Path(args.per_sample_csv).parent.mkdir(parents=True, exist_ok=True)
            report.to_frame().to_csv(args.per_sample_csv, index=False, lineterminator='\n')
        except OSError as e:
            logger.error(f"❌ Could not write {args.per_sample_csv}: {e}")
            return EXIT_FAILURES
    return _report_failures(failures, total)


def cmd_bench(args, pipeline: PipelineConfig) -> int:
    variant = SurfaceVariant.parse(args.variant or pipeline.variants[0])
    report = throughput_bench(
        lambda: random_workload(args.events, seed=pipeline.seed),
        pipeline.filter_params,
        repetitions=args.repetitions,
        variant=variant,
        aggregator=pipeline.aggregator,
        workers=pipeline.workers,
        chunk_us=args.chunk_us,
    )
    if args.report:
        write_report(report, args.report)
    else:
        sys.stdout.write(dumps_report(report.to_dict(), 'throughput'))
    return EXIT_OK


def _write_labeled(labeled, directory: Path, name: str) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / f"{name}.csv").write_text(write_csv_events(labeled.stream), encoding='utf-8')
    (directory / f"{name}.labels.csv").write_text(write_label_csv(labeled), encoding='utf-8')
    return directory / f"{name}.csv"


def cmd_synth(args, pipeline: PipelineConfig) -> int:
    geometry = SensorGeometry(args.width, args.height)
    out_dir = Path(args.out_dir)
    try:
        if args.corpus:
            noise_rate = 5.0 if args.noise_rate is None else args.noise_rate
            model = SensorModel(args.threshold, args.refractory_us, noise_rate, pipeline.seed)
            make_scenes = slanted_edge_scenes if args.task == 'slant' else two_class_scenes
            scenes = make_scenes(args.corpus, geometry=geometry, model=model, seed=pipeline.seed)
            for scene in scenes:
                _write_labeled(scene.labeled, out_dir / scene.label, scene.name)
            logger.info(f"✅ Wrote {len(scenes)} labeled scenes under {out_dir}")
        else:
            noise_rate = 0.0 if args.noise_rate is None else args.noise_rate
            model = SensorModel(args.threshold, args.refractory_us, noise_rate, pipeline.seed)
            labeled, _ = moving_edge_scene(
                geometry,
                velocity=args.velocity,
                contrast_steps=args.contrast,
                model=model,
                direction=args.direction,
                polarity=args.polarity,
                delay_us=args.delay_us,
                t_end=args.t_end,
            )
            target = _write_labeled(labeled, out_dir, args.name)
            logger.info(f"✅ Wrote {len(labeled)} events ({labeled.label_counts()}) to {target}")
    except OSError as e:
        logger.error(f"❌ Could not write under {out_dir}: {e}")
        return EXIT_FAILURES
    return EXIT_OK


def cmd_eval(args, pipeline: PipelineConfig) -> int:
    failures, total = [], 0
    if args.synthetic is None and (pipeline.inputs or _dataset_root()):
        samples, failures, total = _load_samples(pipeline)
        source = 'dataset'
    else:
        make_corpus = slant_corpus if args.task == 'slant' else synthetic_corpus
        samples = make_corpus(args.synthetic or 40, seed=pipeline.seed)
        source = 'synthetic'

    variants = pipeline.variants if args.variants else COMPARISON_VARIANTS
    params = pipeline.filter_params
    per_run, summary = run_variant_comparison(
        samples,
        variants=variants,
        seeds=args.seeds,
        grid=pipeline.grid,
        params=params,
        test_fraction=args.test_fraction,
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        l2=args.l2,
        flip_augment=args.flip,
        flip_labels=MIRRORED_LABELS,
    )
    payload = {
        'source': source,
        'task': args.task if source == 'synthetic' else None,
        'samples': len(samples),
        'grid': pipeline.grid,
        'tau_minus_us': params.tau_minus_us,
        'tau_plus_us': params.tau_plus_us,
        'flip_augment': args.flip,
        'summary': summary.to_dict('records'),
        'runs': per_run.to_dict('records'),
    }
    _emit(payload, 'eval', args.report)

    if args.save_model:
        X = frame_features(samples, variants[0], params, pipeline.grid)
        labels = np.asarray([str(sample.label) for sample in samples], dtype=object)
        model = train_linear(X, labels, epochs=args.epochs, learning_rate=args.learning_rate, seed=pipeline.seed, l2=args.l2)
        save_model(model, args.save_model)
    return _report_failures(failures, total)


# ============================================================
# ARGUMENTS
# ============================================================

def _pipeline_flags(with_inputs: bool = True) -> argparse.ArgumentParser:
    flags = argparse.ArgumentParser(add_help=False)
    group = flags.add_argument_group('pipeline')
    if with_inputs:
        group.add_argument('inputs', nargs='*', help='event files or dataset directories (<root>/<label>/<files>)')
    group.add_argument('--input-format', choices=('auto', 'dat', 'aedat2', 'csv'), help='input format (default: by extension)')
    group.add_argument('--tau-us', type=int, help='set both thresholds (us)')
    group.add_argument('--tau-minus-us', type=int, help='prior-gap threshold (us, default 12000)')
    group.add_argument('--tau-plus-us', type=int, help='successor-gap threshold (us, default 12000)')
    group.add_argument('--aggregator', choices=[a.value for a in Aggregator])
    group.add_argument('--variants', help='comma-separated surface variants: raw_ts, fsae_ts, iets, iets_nofb')
    group.add_argument('--format', dest='output_format', choices=('png8', 'raw_f32'))
    group.add_argument('--out', dest='output_dir', help='output directory')
    group.add_argument('--seed', type=int)
    group.add_argument('--window-us', type=int, help='cut each sample to one aligned window of this length')
    group.add_argument('--grid', type=int, help='classifier feature grid')
    return flags


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='iets', description='Inceptive event time-surfaces for event cameras')
    parser.add_argument('--log-level', help='DEBUG, INFO, WARNING or ERROR (default: LOG_LEVEL or INFO)')
    parser.add_argument('--log-file', help='also write logs to this file')
    parser.add_argument('--config', help='TOML file with pipeline settings; flags override it')
    parser.add_argument('--workers', type=int, help='parallel sample workers')

    commands = parser.add_subparsers(dest='command', required=True)
    pipeline = _pipeline_flags()
    workload = _pipeline_flags(with_inputs=False)

    convert = commands.add_parser('convert', help='convert between DAT, AEDAT 2.0 and CSV')
    convert.add_argument('input')
    convert.add_argument('output')
    convert.add_argument('--from', dest='from_format', choices=('auto', 'dat', 'aedat2', 'csv'))
    convert.add_argument('--to', dest='to_format', choices=('auto', 'dat', 'aedat2', 'csv'), default='auto')
    convert.set_defaults(handler=cmd_convert)

    surface = commands.add_parser('surface', parents=[pipeline], help='write one frame per sample and variant')
    surface.set_defaults(handler=cmd_surface)

    stats = commands.add_parser('stats', parents=[pipeline], help='FSAE / IE event reduction report')
    stats.add_argument('--report', help='JSON report path (default: stdout)')
    stats.add_argument('--per-sample-csv', help='per-sample reduction table')
    stats.add_argument('--surrogate', type=int, metavar='N', help='use N synthetic samples per class')
    stats.add_argument('--tau-sweep', type=_int_list, metavar='T1,T2,...', help='add a threshold sweep')
    stats.add_argument('--summary-only', action='store_true', help='leave per-sample rows out of the report')
    stats.set_defaults(handler=cmd_stats)

    bench = commands.add_parser('bench', parents=[workload], help='pipeline throughput on a synthetic workload')
    bench.add_argument('--events', type=int, default=1_000_000)
    bench.add_argument('--repetitions', type=int, default=5)
    bench.add_argument('--chunk-us', type=int, default=100_000, help='window per task with --workers > 1')
    bench.add_argument('--variant', choices=[v.value for v in SurfaceVariant])
    bench.add_argument('--report', help='JSON report path (default: stdout)')
    bench.set_defaults(handler=cmd_bench)

    synth = commands.add_parser('synth', help='write a labeled synthetic scene or two-class corpus')
    synth.add_argument('out_dir')
    synth.add_argument('--name', default='scene')
    synth.add_argument('--corpus', type=int, metavar='N', help='N scenes per class under <out_dir>/<label>/')
    synth.add_argument('--task', choices=SYNTHETIC_TASKS, default='direction', help='corpus task')
    synth.add_argument('--width', type=int, default=32)
    synth.add_argument('--height', type=int, default=32)
    synth.add_argument('--velocity', type=float, default=500.0, help='edge speed (px/s)')
    synth.add_argument('--contrast', type=int, default=3, help='thresholds crossed per pixel')
    synth.add_argument('--direction', type=int, choices=(1, -1), default=1)
    synth.add_argument('--polarity', type=int, choices=(1, -1), default=1)
    synth.add_argument('--delay-us', type=int, default=0)
    synth.add_argument('--t-end', type=int, default=100_000)
    synth.add_argument('--threshold', type=float, default=0.2)
    synth.add_argument('--refractory-us', type=int, default=0)
    synth.add_argument('--noise-rate', type=float, help='noise events per pixel per second')
    synth.add_argument('--seed', type=int)
    synth.set_defaults(handler=cmd_synth)

    evaluate = commands.add_parser('eval', parents=[pipeline], help='linear-classifier comparison of surface variants')
    evaluate.add_argument('--synthetic', type=int, metavar='N', help='use N synthetic samples per class')
    evaluate.add_argument('--task', choices=SYNTHETIC_TASKS, default='slant', help='synthetic task')
    evaluate.add_argument('--seeds', type=_int_list, default=[0, 1, 2, 3, 4])
    evaluate.add_argument('--epochs', type=int, default=200)
    evaluate.add_argument('--learning-rate', type=float, default=1.0)
    evaluate.add_argument('--l2', type=float, default=1e-3)
    evaluate.add_argument('--test-fraction', type=float, default=0.5)
    evaluate.add_argument('--flip', action='store_true', help='add mirrored training frames (direction labels are swapped)')
    evaluate.add_argument('--report', help='JSON report path (default: stdout)')
    evaluate.add_argument('--save-model', help='train on all samples with the first variant and save')
    evaluate.set_defaults(handler=cmd_eval)

    return parser


def _pipeline_config(args) -> PipelineConfig:
    tau = getattr(args, 'tau_us', None)
    overrides = {
        'inputs': getattr(args, 'inputs', None) or None,
        'input_format': getattr(args, 'input_format', None),
        'tau_minus_us': getattr(args, 'tau_minus_us', None) or tau,
        'tau_plus_us': getattr(args, 'tau_plus_us', None) or tau,
        'aggregator': getattr(args, 'aggregator', None),
        'variants': getattr(args, 'variants', None),
        'output_format': getattr(args, 'output_format', None),
        'output_dir': getattr(args, 'output_dir', None),
        'seed': getattr(args, 'seed', None),
        'workers': args.workers,
        'window_us': getattr(args, 'window_us', None),
        'grid': getattr(args, 'grid', None),
    }
    return load_pipeline_config(args.config, overrides)


def _configure_logging(args):
    level = args.log_level or Config.LOG_LEVEL
    log_file = args.log_file or Config.LOG_FILE
    if sys.stderr.isatty() and not log_file:
        get_colored_logger('', level)
    else:
        setup_logger('', level, log_file)


# ============================================================
# MAIN
# ============================================================

def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        _configure_logging(args)
    except (ValueError, OSError) as e:
        parser.error(str(e))

    try:
        pipeline = _pipeline_config(args)
        logger.debug(f"🚀 {args.command}: {pipeline}")
        return args.handler(args, pipeline)
    except ConfigError as e:
        logger.error(f"❌ {e}")
        return EXIT_USAGE
    except IetsError as e:
        logger.error(f"❌ {e}")
        return EXIT_FAILURES


if __name__ == '__main__':
    sys.exit(main())

# services/dataset_loader.py

import logging
import mmap
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from models.events import EventStream
from models.synth import SceneSample, SensorModel, slanted_edge_scenes, two_class_scenes
from services.aedat2 import read_aedat2, write_aedat2
from services.csv_events import read_csv_events, write_csv_events
from services.prophesee_dat import read_prophesee_dat, write_prophesee_dat
from utils.errors import ConfigError, IetsError

logger = logging.getLogger(__name__)

# N-CARS samples are 100 ms clips
SAMPLE_WINDOW_US = 100_000

EXTENSIONS: Dict[str, str] = {
    '.dat': 'dat',
    '.aedat': 'aedat2',
    '.csv': 'csv',
}
FORMATS = ('dat', 'aedat2', 'csv')
LABEL_SIDECAR_SUFFIX = '.labels.csv'


@dataclass(frozen=True, eq=False)
class DatasetSample:
    """One labeled clip and where it came from"""
    stream: EventStream
    label: Optional[str]
    source_path: str

    @property
    def duration_us(self) -> int:
        return self.stream.duration_us

    @property
    def name(self) -> str:
        path = Path(self.source_path)
        return path.stem if path.suffix else path.name


@dataclass
class LoadedDataset:
    samples: List[DatasetSample] = field(default_factory=list)
    skipped: List[Tuple[str, str]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    @property
    def labels(self) -> List[str]:
        return sorted({sample.label for sample in self.samples if sample.label is not None})


# ============================================================
# SINGLE FILES
# ============================================================

def detect_format(path: Union[str, Path]) -> str:
    """Map a file extension to a codec name"""
    suffix = Path(path).suffix.lower()
    if suffix not in EXTENSIONS:
        raise ConfigError(f"Cannot infer event format from extension {suffix!r} of {path}")
    return EXTENSIONS[suffix]


def _resolve_format(path: Union[str, Path], fmt: str) -> str:
    if fmt == 'auto':
        return detect_format(path)
    if fmt not in FORMATS:
        raise ConfigError(f"Unknown event format {fmt!r}; expected one of {FORMATS} or 'auto'")
    return fmt


def aligned_window(stream: EventStream, window_us: int) -> EventStream:
    """Re-window a clip to [k*w, (k+1)*w] around its first event; events past the end are dropped"""
    if window_us <= 0:
        raise ConfigError(f"window_us must be > 0, got {window_us}")
    first = int(stream.t[0]) if len(stream) else stream.t_start
    t_start = (first // window_us) * window_us
    windowed = stream.window(t_start, t_start + window_us)
    dropped = len(stream) - len(windowed)
    if dropped:
        logger.warning(f"⚠️ Dropped {dropped} events beyond the {window_us} us window")
    return windowed


def _map_file(path: Path) -> Union[mmap.mmap, bytes]:
    """Read-only map of a binary file; the decoders copy what they keep, so the map closes once dropped"""
    with path.open('rb') as handle:
        if os.fstat(handle.fileno()).st_size == 0:
            return b''
        return mmap.mmap(handle.fileno(), 0, access=mmap.ACCESS_READ)


def read_event_file(path: Union[str, Path], fmt: str = 'auto', window_us: Optional[int] = None) -> EventStream:
    """
    Read one event file into a canonical stream.

    Args:
        path: .dat, .aedat or .csv file
        fmt: 'auto' (by extension), 'dat', 'aedat2' or 'csv'
        window_us: optional fixed window length (e.g. 100000 for N-CARS clips)
    """
    path = Path(path)
    fmt = _resolve_format(path, fmt)

    if fmt == 'dat':
        stream = read_prophesee_dat(_map_file(path), source=str(path))
    elif fmt == 'aedat2':
        stream = read_aedat2(_map_file(path), source=str(path))
    else:
        stream = read_csv_events(path.read_bytes())

    if window_us is not None:
        stream = aligned_window(stream, window_us)
    return stream


def encode_events(stream: EventStream, fmt: str) -> bytes:
    if fmt == 'dat':
        return write_prophesee_dat(stream)
    if fmt == 'aedat2':
        return write_aedat2(stream)
    if fmt == 'csv':
        return write_csv_events(stream).encode('utf-8')
    raise ConfigError(f"Unknown event format {fmt!r}")


def write_event_file(stream: EventStream, path: Union[str, Path], fmt: str = 'auto') -> Path:
    """Write a stream in the format named by fmt (or by the extension)"""
    path = Path(path)
    payload = encode_events(stream, _resolve_format(path, fmt))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(payload)
    logger.debug(f"Wrote {len(stream)} events to {path}")
    return path


# ============================================================
# DATASETS
# ============================================================

def _is_event_file(path: Path, fmt: str) -> bool:
    if not path.is_file() or path.name.endswith(LABEL_SIDECAR_SUFFIX):
        return False
    suffix = path.suffix.lower()
    if fmt == 'auto':
        return suffix in EXTENSIONS
    return EXTENSIONS.get(suffix) == fmt


def list_event_files(root: Union[str, Path], fmt: str = 'auto') -> List[Tuple[Path, Optional[str]]]:
    """Sorted (path, label) pairs under root; the label is the first directory below root"""
    root = Path(root)
    pairs = []
    for path in sorted(path for path in root.rglob('*') if _is_event_file(path, fmt)):
        relative = path.relative_to(root)
        pairs.append((path, relative.parts[0] if len(relative.parts) > 1 else None))
    return pairs


def load_dataset(
    root: Union[str, Path],
    fmt: str = 'auto',
    window_us: Optional[int] = None
) -> LoadedDataset:
    """
    Load `<root>/<label>/<sample files>` in sorted-path order.

    Files directly under root get no label. Unreadable files are skipped with a
    warning and listed in LoadedDataset.skipped.
    """
    root = Path(root)
    if not root.is_dir():
        raise ConfigError(f"Dataset root is not a directory: {root}")
    if fmt != 'auto' and fmt not in FORMATS:
        raise ConfigError(f"Unknown event format {fmt!r}; expected one of {FORMATS} or 'auto'")

    dataset = LoadedDataset()
    paths = list_event_files(root, fmt)
    logger.info(f"🚀 Loading {len(paths)} event files from {root}")

    for path, label in paths:
        try:
            stream = read_event_file(path, fmt=fmt, window_us=window_us)
        except (IetsError, OSError, UnicodeDecodeError) as e:
            logger.warning(f"⚠️ Skipping {path}: {e}")
            dataset.skipped.append((str(path), str(e)))
            continue
        dataset.samples.append(DatasetSample(stream=stream, label=label, source_path=str(path)))

    if dataset.skipped:
        logger.warning(f"⚠️ Skipped {len(dataset.skipped)} of {len(paths)} files under {root}")
    logger.info(f"✅ Loaded {len(dataset.samples)} samples, labels: {dataset.labels}")
    return dataset


def slice_recording(stream: EventStream, window_us: int = SAMPLE_WINDOW_US) -> List[EventStream]:
    """
    Cut a long recording into consecutive windows of window_us; empty windows are dropped.

    Slice k holds the events with k*w <= t < (k+1)*w and carries the window [k*w, (k+1)*w].
    """
    if window_us <= 0:
        raise ConfigError(f"window_us must be > 0, got {window_us}")
    slices = stream.split(window_us)
    logger.debug(f"Sliced {len(stream)} events into {len(slices)} windows of {window_us} us")
    return slices


def synthetic_corpus(
    n_per_class: int,
    seed: int = 0,
    model: Optional[SensorModel] = None,
    **scene_options
) -> List[DatasetSample]:
    """Two-class synthetic scenes wrapped as dataset samples (source_path 'synthetic://<label>/<name>')"""
    scenes: List[SceneSample] = two_class_scenes(n_per_class, model=model, seed=seed, **scene_options)
    return [
        DatasetSample(stream=scene.labeled.stream, label=scene.label, source_path=f"synthetic://{scene.label}/{scene.name}")
        for scene in scenes
    ]


def slant_corpus(
    n_per_class: int,
    seed: int = 0,
    model: Optional[SensorModel] = None,
    **scene_options
) -> List[DatasetSample]:
    """Slanted-edge scenes (top_first / bottom_first) wrapped as dataset samples"""
    scenes: List[SceneSample] = slanted_edge_scenes(n_per_class, model=model, seed=seed, **scene_options)
    return [
        DatasetSample(stream=scene.labeled.stream, label=scene.label, source_path=f"synthetic://{scene.label}/{scene.name}")
        for scene in scenes
    ]


# Narrow high-contrast edges over 10 Hz background noise
SURROGATE_SCENE = {'contrast_range': (6, 10), 'edge_rows': 6}
SURROGATE_NOISE_RATE = 10.0


def surrogate_corpus(n_per_class: int = 50, seed: int = 0) -> List[DatasetSample]:
    """Stand-in corpus for reduction statistics when no recorded dataset is available"""
    return synthetic_corpus(
        n_per_class, seed=seed, model=SensorModel(noise_rate=SURROGATE_NOISE_RATE), **SURROGATE_SCENE
    )

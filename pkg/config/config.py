# config.py - Centralized Configuration

import os
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

from dotenv import load_dotenv

from models.filters import DEFAULT_TAU_US, FilterParams
from models.surfaces import Aggregator, SurfaceVariant
from services.frame_export import FrameFormat
from utils.errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

load_dotenv()


class Config:
    """Environment configuration"""

    # Base directory
    BASE_DIR = Path(__file__).resolve().parent.parent

    # Data locations
    DATASET_ROOT = os.getenv('IETS_DATASET_ROOT', '')
    OUTPUT_DIR = os.getenv('IETS_OUTPUT_DIR', str(BASE_DIR / 'output'))
    PIPELINE_DEFAULTS = BASE_DIR / 'config' / 'pipeline.toml'

    # Logging
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
    LOG_FILE = os.getenv('LOG_FILE') or None

    # Processing
    WORKERS = int(os.getenv('IETS_WORKERS', 1))


class DevelopmentConfig(Config):
    """Development configuration"""
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'DEBUG')


class ProductionConfig(Config):
    """Production configuration"""
    WORKERS = int(os.getenv('IETS_WORKERS', os.cpu_count() or 1))


class TestingConfig(Config):
    """Testing configuration"""
    LOG_LEVEL = 'WARNING'
    WORKERS = 1


# Config dictionary
config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': Config
}


def get_config(env='default'):
    """Get configuration based on environment"""
    return config.get(env, Config)


# ============================================================
# PIPELINE CONFIGURATION
# ============================================================

INPUT_FORMATS = ('auto', 'dat', 'aedat2', 'csv')


@dataclass(frozen=True)
class PipelineConfig:
    """Validated parameters of one batch run (flags > config file > defaults)"""
    inputs: Tuple[str, ...] = ()
    input_format: str = 'auto'
    tau_minus_us: int = DEFAULT_TAU_US
    tau_plus_us: int = DEFAULT_TAU_US
    aggregator: str = Aggregator.MEAN.value
    variants: Tuple[str, ...] = (SurfaceVariant.IETS.value,)
    output_format: str = FrameFormat.PNG8.value
    output_dir: str = field(default_factory=lambda: Config.OUTPUT_DIR)
    seed: int = 0
    workers: int = field(default_factory=lambda: Config.WORKERS)
    window_us: Optional[int] = None
    grid: int = 32

    @property
    def filter_params(self) -> FilterParams:
        return FilterParams(tau_minus_us=self.tau_minus_us, tau_plus_us=self.tau_plus_us)

    @property
    def surface_variants(self) -> Tuple[SurfaceVariant, ...]:
        return tuple(SurfaceVariant.parse(variant) for variant in self.variants)

    def validate(self) -> 'PipelineConfig':
        """Raise ConfigError on the first invalid field; returns self for chaining"""
        if self.input_format not in INPUT_FORMATS:
            raise ConfigError(f"input_format must be one of {INPUT_FORMATS}, got {self.input_format!r}")
        try:
            self.filter_params
            Aggregator(self.aggregator)
            FrameFormat(self.output_format)
            self.surface_variants
        except ValueError as e:
            raise ConfigError(str(e)) from e
        if not self.variants:
            raise ConfigError("At least one surface variant is required")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.grid < 1:
            raise ConfigError(f"grid must be >= 1, got {self.grid}")
        if self.window_us is not None and self.window_us <= 0:
            raise ConfigError(f"window_us must be > 0, got {self.window_us}")
        if not self.output_dir:
            raise ConfigError("output_dir must not be empty")
        return self


def _coerce(name: str, value: Any) -> Any:
    if name in ('inputs', 'variants'):
        if isinstance(value, str):
            value = [part.strip() for part in value.split(',') if part.strip()]
        return tuple(str(item) for item in value)
    if name in ('tau_minus_us', 'tau_plus_us', 'seed', 'workers', 'grid', 'window_us'):
        if value is None:
            return None
        if isinstance(value, bool) or int(value) != value:
            raise ConfigError(f"{name} must be an integer, got {value!r}")
        return int(value)
    return str(value)


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """Flat TOML table (a [pipeline] section is accepted too)"""
    path = Path(path)
    try:
        with open(path, 'rb') as f:
            document = tomllib.load(f)
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e.strerror or e}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"Invalid TOML in {path}: {e}") from e
    return dict(document.get('pipeline', document))


def load_pipeline_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    defaults_path: Optional[Union[str, Path]] = Config.PIPELINE_DEFAULTS
) -> PipelineConfig:
    """
    Merge defaults <- pipeline.toml <- config file <- overrides and validate.

    Override values of None are ignored so unset CLI flags do not clobber the file.
    """
    known = {f.name for f in fields(PipelineConfig)}
    merged: Dict[str, Any] = {}

    layers = []
    if defaults_path and Path(defaults_path).is_file():
        layers.append(('defaults', read_config_file(defaults_path)))
    if path:
        layers.append((str(path), read_config_file(path)))
    if overrides:
        layers.append(('flags', {key: value for key, value in overrides.items() if value is not None}))

    for source, layer in layers:
        unknown = sorted(set(layer) - known)
        if unknown:
            raise ConfigError(f"Unknown pipeline setting(s) {unknown} in {source}")
        merged.update(layer)

    try:
        values = {name: _coerce(name, value) for name, value in merged.items()}
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid pipeline setting: {e}") from e
    return replace(PipelineConfig(), **values).validate()

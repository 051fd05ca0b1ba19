
import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from dataclasses import FrozenInstanceError

import pytest

from config.config import (
    Config,
    DevelopmentConfig,
    PipelineConfig,
    ProductionConfig,
    TestingConfig,
    get_config,
    load_pipeline_config,
    read_config_file,
)
from models.filters import FilterParams
from models.surfaces import SurfaceVariant
from utils.errors import ConfigError


@pytest.fixture
def config_file(tmp_path):
    """Pipeline settings in a [pipeline] section"""
    path = tmp_path / 'run.toml'
    path.write_text(
        '[pipeline]\n'
        'tau_minus_us = 5000\n'
        'variants = ["raw_ts", "iets"]\n'
        'output_format = "raw_f32"\n'
        'grid = 16\n'
    )
    return path


def test_get_config():
    """Test environment names map to config classes"""

    assert get_config('development') is DevelopmentConfig
    assert get_config('production') is ProductionConfig
    assert get_config('testing') is TestingConfig
    assert get_config('unknown') is Config
    assert TestingConfig.WORKERS == 1


def test_defaults(tmp_path):
    """Test built-in defaults without any file"""

    pipeline = load_pipeline_config(defaults_path=None, overrides={'output_dir': str(tmp_path)})

    assert pipeline.filter_params == FilterParams(12_000, 12_000)
    assert pipeline.surface_variants == (SurfaceVariant.IETS,)
    assert pipeline.output_format == 'png8'
    assert pipeline.window_us is None


def test_read_config_file(config_file, tmp_path):
    """Test sectioned and flat TOML tables"""

    assert read_config_file(config_file)['grid'] == 16

    flat = tmp_path / 'flat.toml'
    flat.write_text('seed = 4\n')
    assert read_config_file(flat) == {'seed': 4}


def test_merge_order(config_file):
    """Test flags override the file and None flags are ignored"""

    pipeline = load_pipeline_config(config_file, {'tau_minus_us': 7_000, 'grid': None, 'variants': 'fsae,iets_nofb'})

    assert pipeline.tau_minus_us == 7_000
    assert pipeline.tau_plus_us == 12_000
    assert pipeline.grid == 16
    assert pipeline.output_format == 'raw_f32'
    assert pipeline.variants == ('fsae', 'iets_nofb')
    assert pipeline.surface_variants == (SurfaceVariant.FSAE_TS, SurfaceVariant.IETS_NOFB)


def test_file_overrides_defaults(config_file):
    """Test the config file wins over pipeline.toml"""

    pipeline = load_pipeline_config(config_file)

    assert pipeline.tau_minus_us == 5_000
    assert pipeline.variants == ('raw_ts', 'iets')


def test_unknown_setting(tmp_path):
    """Test unknown keys name their source"""

    path = tmp_path / 'bad.toml'
    path.write_text('tau = 3\n')

    with pytest.raises(ConfigError) as exc_info:
        load_pipeline_config(path)

    assert 'tau' in str(exc_info.value)
    with pytest.raises(ConfigError):
        load_pipeline_config(overrides={'colour': 'red'})


@pytest.mark.parametrize('overrides', [
    {'tau_minus_us': 0},
    {'tau_plus_us': -1},
    {'tau_minus_us': 1.5},
    {'tau_minus_us': True},
    {'aggregator': 'mode'},
    {'variants': 'iets,fancy'},
    {'variants': ''},
    {'output_format': 'jpeg'},
    {'input_format': 'hdf5'},
    {'workers': 0},
    {'grid': 0},
    {'window_us': 0},
    {'output_dir': ''},
])
def test_invalid_values(overrides):
    """Test every invalid setting is a ConfigError"""

    with pytest.raises(ConfigError):
        load_pipeline_config(overrides=overrides)


def test_toml_errors(tmp_path):
    """Test unreadable and malformed files"""

    with pytest.raises(ConfigError):
        read_config_file(tmp_path / 'missing.toml')

    broken = tmp_path / 'broken.toml'
    broken.write_text('tau_minus_us = \n')
    with pytest.raises(ConfigError):
        read_config_file(broken)


def test_pipeline_config_is_frozen():
    """Test validated configs cannot change"""

    pipeline = PipelineConfig()

    with pytest.raises(FrozenInstanceError):
        pipeline.seed = 3


if __name__ == '__main__':
    pytest.main([__file__, '-v'])

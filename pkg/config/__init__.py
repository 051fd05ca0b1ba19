from .config import Config, PipelineConfig, get_config, load_pipeline_config

__all__ = ['Config', 'PipelineConfig', 'get_config', 'load_pipeline_config']

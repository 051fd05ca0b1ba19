from .dataset_loader import DatasetSample, load_dataset, read_event_file, write_event_file
from .frame_export import FrameFormat, export_frame, write_frame

__all__ = ['DatasetSample', 'load_dataset', 'read_event_file', 'write_event_file', 'FrameFormat', 'export_frame', 'write_frame']

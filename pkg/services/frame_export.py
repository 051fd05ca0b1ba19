# services/frame_export.py

import io
import logging
import struct
from enum import Enum
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from PIL import Image

from models.events import SensorGeometry
from models.filters import FilterParams
from models.surfaces import IetsFrame, SurfaceVariant
from utils.errors import ExportError, FormatError

logger = logging.getLogger(__name__)

RAW_F32_MAGIC = b'IETSF32\x00'
RAW_F32_HEADER = struct.Struct('<8sIII')  # magic, width, height, channels


class FrameFormat(str, Enum):
    PNG8 = 'png8'
    RAW_F32 = 'raw_f32'

    @property
    def extension(self) -> str:
        return '.png' if self is FrameFormat.PNG8 else '.f32'


def quantize_8bit(values: np.ndarray) -> np.ndarray:
    """Map [0, 1] to 0..255 with round-half-up (0.5 -> 128)"""
    clipped = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return np.floor(clipped * 255.0 + 0.5).astype(np.uint8)


def export_frame(frame: IetsFrame, fmt: Union[FrameFormat, str] = FrameFormat.PNG8) -> bytes:
    """
    Encode a frame.

    png8: RGB PNG, R = positive channel, G = negative channel, B = count.
    raw_f32: header (magic, width, height, 3) then 3*H*W little-endian float32,
    channel-planar, row-major.
    """
    fmt = FrameFormat(fmt)
    channels = frame.to_array()

    if fmt is FrameFormat.PNG8:
        rgb = np.ascontiguousarray(np.moveaxis(quantize_8bit(channels), 0, -1))
        buffer = io.BytesIO()
        Image.fromarray(rgb).save(buffer, format='PNG')
        return buffer.getvalue()

    geometry = frame.geometry
    header = RAW_F32_HEADER.pack(RAW_F32_MAGIC, geometry.width, geometry.height, channels.shape[0])
    return header + channels.astype('<f4').tobytes(order='C')


def read_raw_f32(data: bytes) -> Tuple[SensorGeometry, np.ndarray]:
    """Decode a raw_f32 container into (geometry, float32 array of shape (3, H, W))"""
    if len(data) < RAW_F32_HEADER.size:
        raise FormatError("raw_f32 container shorter than its header", offset=len(data))
    magic, width, height, channels = RAW_F32_HEADER.unpack_from(data, 0)
    if magic != RAW_F32_MAGIC:
        raise FormatError("Not a raw_f32 container (bad magic)", offset=0)
    expected = RAW_F32_HEADER.size + 4 * channels * width * height
    if len(data) != expected:
        raise FormatError(f"raw_f32 payload size {len(data)} does not match header ({expected})", offset=len(data))
    values = np.frombuffer(data, dtype='<f4', offset=RAW_F32_HEADER.size)
    return SensorGeometry(width, height), values.reshape(channels, height, width).astype(np.float32)


def read_png8(data: bytes) -> np.ndarray:
    """Decode an exported PNG back to a (3, H, W) uint8 array"""
    with Image.open(io.BytesIO(data)) as image:
        rgb = np.asarray(image.convert('RGB'))
    return np.moveaxis(rgb, -1, 0).copy()


def frame_filename(
    sample_name: str,
    variant: Union[SurfaceVariant, str],
    params: FilterParams,
    fmt: Union[FrameFormat, str]
) -> str:
    """<sample>__<variant>[_<taus>].<ext>; raw_ts does not depend on the thresholds"""
    variant = SurfaceVariant.parse(variant)
    fmt = FrameFormat(fmt)
    tag = variant.value if variant is SurfaceVariant.RAW_TS else f"{variant.value}_{params.tag}"
    return f"{sample_name}__{tag}{fmt.extension}"


def write_frame(frame: IetsFrame, path: Union[str, Path], fmt: Union[FrameFormat, str] = FrameFormat.PNG8) -> Path:
    """Encode and write a frame; I/O failures come back as ExportError naming the path"""
    path = Path(path)
    payload = export_frame(frame, fmt)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(payload)
    except OSError as e:
        raise ExportError(f"Could not write frame ({e.strerror or e})", path=str(path)) from e
    logger.debug(f"Wrote {path} ({len(payload)} bytes)")
    return path

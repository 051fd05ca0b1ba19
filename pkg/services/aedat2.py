# services/aedat2.py

"""
AEDAT 2.0 codec for DAVIS240-class sensors.

Layout (see docs/FORMATS.md):
- ASCII header lines starting with '#', including the version line
  '#!AER-DAT2.0'; '# End Of ASCII Header' closes the header when present
- 8-byte big-endian records: uint32 address, uint32 timestamp (us)
- DVS address: y = bits 22-30, x = bits 12-21, polarity = bit 11 (1 -> +1);
  bit 31 flags APS/IMU records and bit 10 external-trigger records, both skipped
"""

import logging
from typing import List, Tuple

import numpy as np

from models.events import EventStream, SensorGeometry, canonicalize_arrays
from services.decode_report import DecodeReport
from utils.errors import FormatError, GeometryError

logger = logging.getLogger(__name__)

DAVIS240 = SensorGeometry(width=240, height=180)
RECORD_SIZE = 8
VERSION_PREFIX = '#!AER-DAT'
SUPPORTED_VERSION = '2.0'
END_OF_HEADER = '# end of ascii header'

NON_DVS_FLAG = 0x80000000
TRIGGER_FLAG = 0x400
Y_SHIFT, Y_MASK = 22, 0x1FF
X_SHIFT, X_MASK = 12, 0x3FF
POLARITY_SHIFT = 11

HEADER_LINES = (
    '#!AER-DAT2.0',
    '# This is a raw AE data file - do not edit',
    '# Data format is int32 address, int32 timestamp (8 bytes total), repeated for each event',
    '# Timestamps tick is 1 us',
    '# End Of ASCII Header',
)


def _split_header(data) -> Tuple[List[str], int]:
    lines = []
    pos = 0
    size = len(data)
    while pos < size and data[pos:pos + 1] == b'#':
        end = bytes(data[pos:min(size, pos + 4096)]).find(b'\n')
        if end < 0:
            raise FormatError("Unterminated '#' header line", offset=pos)
        line = bytes(data[pos:pos + end]).decode('ascii', errors='replace').rstrip('\r')
        lines.append(line)
        pos += end + 1
        if line.strip().lower() == END_OF_HEADER:
            break
    return lines, pos


def _check_version(lines: List[str]):
    versions = [line.strip() for line in lines if line.startswith(VERSION_PREFIX)]
    if not versions:
        raise FormatError(f"Missing '{VERSION_PREFIX}' version header", offset=0)
    version = versions[0][len(VERSION_PREFIX):]
    if version != SUPPORTED_VERSION:
        raise FormatError(f"Unsupported AEDAT version {version} (only {SUPPORTED_VERSION})", offset=0)


def decode_aedat2(data) -> Tuple[EventStream, DecodeReport]:
    """Decode an AEDAT 2.0 buffer; geometry is always 240x180"""
    lines, pos = _split_header(data)
    _check_version(lines)

    remaining = len(data) - pos
    if remaining % RECORD_SIZE:
        raise FormatError(
            f"Truncated AEDAT record ({remaining % RECORD_SIZE} trailing bytes)",
            offset=pos + (remaining // RECORD_SIZE) * RECORD_SIZE
        )
    n_records = remaining // RECORD_SIZE
    if n_records:
        words = np.frombuffer(data, dtype='>u4', count=2 * n_records, offset=pos).reshape(n_records, 2)
    else:
        words = np.zeros((0, 2), dtype='>u4')
    address = words[:, 0].astype(np.int64)
    t = words[:, 1].astype(np.int64)
    del words

    dvs = (address & (NON_DVS_FLAG | TRIGGER_FLAG)) == 0
    skipped = int(n_records - np.count_nonzero(dvs))
    address, t = address[dvs], t[dvs]

    y = (address >> Y_SHIFT) & Y_MASK
    x = (address >> X_SHIFT) & X_MASK
    p = ((address >> POLARITY_SHIFT) & 1) * 2 - 1

    out_of_order = int(np.count_nonzero(t[1:] < t[:-1])) if len(t) > 1 else 0
    stream, duplicates = canonicalize_arrays(x, y, t, p, geometry=DAVIS240)

    report = DecodeReport(
        source_format='aedat2',
        records=n_records,
        events=len(stream),
        out_of_order=out_of_order,
        skipped_records=skipped,
        duplicates_removed=duplicates
    )
    return stream, report


def read_aedat2(data, source: str = '') -> EventStream:
    """Decode an AEDAT 2.0 buffer and log skipped / reordered records"""
    stream, report = decode_aedat2(data)
    report.log(source)
    return stream


def write_aedat2(stream: EventStream) -> bytes:
    """Encode a stream as AEDAT 2.0 DVS records"""
    geometry = stream.geometry
    if geometry.width > DAVIS240.width or geometry.height > DAVIS240.height:
        raise GeometryError(f"AEDAT 2.0 DVS records address a {DAVIS240} sensor; {geometry} does not fit")
    if len(stream) and int(stream.t[-1]) > np.iinfo(np.uint32).max:
        raise FormatError(f"Timestamp {int(stream.t[-1])} does not fit the 32-bit AEDAT field")

    header = ''.join(f"{line}\r\n" for line in HEADER_LINES).encode('ascii')
    records = np.empty((len(stream), 2), dtype='>u4')
    records[:, 0] = (
        (stream.y.astype(np.uint32) << Y_SHIFT)
        | (stream.x.astype(np.uint32) << X_SHIFT)
        | ((stream.p > 0).astype(np.uint32) << POLARITY_SHIFT)
    )
    records[:, 1] = stream.t
    return header + records.tobytes()

# services/prophesee_dat.py

"""
Prophesee DAT (CD events) codec.

Layout (see docs/FORMATS.md):
- zero or more ASCII header lines starting with '%' (a '% end' line closes the header)
- optional 2-byte tag after the header: event type (0x0C = CD, 0x00 = TD) and event size (8)
- 8-byte little-endian records: uint32 timestamp (us), uint32 word with
  x in bits 0-13, y in bits 14-27, polarity in bits 28-31 (0 -> -1, 1 -> +1)
"""

import logging
import re
from typing import Dict, List, Tuple

import numpy as np

from models.events import EventStream, SensorGeometry, canonicalize_arrays
from services.decode_report import DecodeReport
from utils.errors import FormatError, GeometryError

logger = logging.getLogger(__name__)

RECORD_SIZE = 8
TD_EVENT_TYPE = 0x00
CD_EVENT_TYPE = 0x0C
TAGGED_EVENT_TYPES = (TD_EVENT_TYPE, CD_EVENT_TYPE)
COORD_MASK = 0x3FFF
Y_SHIFT = 14
POLARITY_SHIFT = 28
MAX_COORD = COORD_MASK

_HEADER_FIELD = re.compile(r'^%\s*(\w+)\s*[:=]?\s*(.*?)\s*$')


def _split_header(data) -> Tuple[List[str], int]:
    """Header lines and the offset of the first payload byte"""
    lines = []
    pos = 0
    size = len(data)
    while pos < size and data[pos:pos + 1] == b'%':
        end = bytes(data[pos:min(size, pos + 4096)]).find(b'\n')
        if end < 0:
            raise FormatError("Unterminated '%' header line", offset=pos)
        line = bytes(data[pos:pos + end]).decode('ascii', errors='replace').rstrip('\r')
        lines.append(line)
        pos += end + 1
        if line.strip().lower() == '% end':
            break
    return lines, pos


def _header_fields(lines: List[str]) -> Dict[str, str]:
    fields = {}
    for line in lines:
        match = _HEADER_FIELD.match(line)
        if match:
            fields[match.group(1).lower()] = match.group(2)
    return fields


def _header_geometry(fields: Dict[str, str]):
    try:
        if 'width' in fields and 'height' in fields:
            return SensorGeometry(int(fields['width']), int(fields['height']))
        if 'geometry' in fields:
            width, height = fields['geometry'].lower().split('x')
            return SensorGeometry(int(width), int(height))
    except ValueError as e:
        raise FormatError(f"Unreadable geometry in DAT header: {e}", offset=0) from e
    return None


def _has_type_tag(data, lines: List[str], pos: int, remaining: int) -> bool:
    """The 2-byte tag only follows a header and must name a known type of 8-byte events"""
    return (
        bool(lines)
        and remaining % RECORD_SIZE == 2
        and data[pos + 1] == RECORD_SIZE
        and data[pos] in TAGGED_EVENT_TYPES
    )


def decode_prophesee_dat(data) -> Tuple[EventStream, DecodeReport]:
    """
    Decode a DAT buffer (bytes, memoryview or mmap).

    Geometry comes from the header when it has Width/Height, otherwise it is
    inferred as max coordinate + 1.
    """
    lines, pos = _split_header(data)
    fields = _header_fields(lines)

    remaining = len(data) - pos
    if _has_type_tag(data, lines, pos, remaining):
        if data[pos] != CD_EVENT_TYPE:
            logger.debug(f"DAT event type tag {data[pos]:#04x} (expected {CD_EVENT_TYPE:#04x})")
        pos += 2
        remaining -= 2
    if remaining % RECORD_SIZE != 0:
        raise FormatError(
            f"Truncated DAT record ({remaining % RECORD_SIZE} trailing bytes)",
            offset=pos + (remaining // RECORD_SIZE) * RECORD_SIZE
        )

    n_records = remaining // RECORD_SIZE
    if n_records:
        words = np.frombuffer(data, dtype='<u4', count=2 * n_records, offset=pos).reshape(n_records, 2)
    else:
        words = np.zeros((0, 2), dtype='<u4')
    t = words[:, 0].astype(np.int64)
    word = words[:, 1]
    x = (word & COORD_MASK).astype(np.int64)
    y = ((word >> Y_SHIFT) & COORD_MASK).astype(np.int64)
    nibble = (word >> POLARITY_SHIFT).astype(np.int64)
    del words, word

    bad = np.flatnonzero(nibble > 1)
    if len(bad):
        index = int(bad[0])
        raise FormatError(
            f"Polarity nibble {int(nibble[index])} in DAT record {index}",
            offset=pos + index * RECORD_SIZE
        )
    nibble *= 2
    nibble -= 1
    p = nibble

    geometry = _header_geometry(fields) or SensorGeometry.infer(x, y)
    out_of_order = int(np.count_nonzero(t[1:] < t[:-1])) if n_records > 1 else 0
    stream, duplicates = canonicalize_arrays(x, y, t, p, geometry=geometry)

    report = DecodeReport(
        source_format='dat',
        records=n_records,
        events=len(stream),
        out_of_order=out_of_order,
        duplicates_removed=duplicates
    )
    return stream, report


def read_prophesee_dat(data, source: str = '') -> EventStream:
    """Decode a DAT buffer and log anything unusual"""
    stream, report = decode_prophesee_dat(data)
    report.log(source)
    return stream


def write_prophesee_dat(stream: EventStream) -> bytes:
    """Encode a stream as DAT with a normalized header and the CD type tag"""
    geometry = stream.geometry
    if geometry.width - 1 > MAX_COORD or geometry.height - 1 > MAX_COORD:
        raise GeometryError(f"DAT coordinates are 14-bit; {geometry} does not fit")
    if len(stream) and int(stream.t[-1]) > np.iinfo(np.uint32).max:
        raise FormatError(f"Timestamp {int(stream.t[-1])} does not fit the 32-bit DAT field")

    header = (
        "% Data file containing CD events.\n"
        "% Version 2\n"
        f"% Width {geometry.width}\n"
        f"% Height {geometry.height}\n"
        "% end\n"
    ).encode('ascii')
    tag = bytes([CD_EVENT_TYPE, RECORD_SIZE])

    records = np.empty((len(stream), 2), dtype='<u4')
    records[:, 0] = stream.t
    records[:, 1] = (
        stream.x.astype(np.uint32)
        | (stream.y.astype(np.uint32) << Y_SHIFT)
        | ((stream.p > 0).astype(np.uint32) << POLARITY_SHIFT)
    )
    return header + tag + records.tobytes()

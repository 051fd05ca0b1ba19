# services/csv_events.py

"""
Portable text event format.

    # comment lines start with '#'
    W,H[,t_start,t_end]
    t,x,y,p
    ...

The label sidecar uses the same header and `t,x,y,p,label` rows where label is
one of inceptive / scaling / noise.
"""

import io
import logging
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from models.events import EventStream, SensorGeometry, canonicalize_arrays
from models.synth import EventLabel, LabeledStream
from utils.errors import FormatError, GeometryError

logger = logging.getLogger(__name__)

EVENT_COLUMNS = ['t', 'x', 'y', 'p']
LABEL_COLUMNS = EVENT_COLUMNS + ['label']


def _split_header(text: str) -> Tuple[Tuple[int, ...], str, int]:
    """Parse the header line; returns (fields, body text, line number of the header)"""
    pos = 0
    line_no = 0
    while pos < len(text):
        end = text.find('\n', pos)
        if end < 0:
            end = len(text)
        line_no += 1
        line = text[pos:end].strip()
        pos = end + 1
        if not line or line.startswith('#'):
            continue
        try:
            fields = tuple(int(value) for value in line.split(','))
        except ValueError:
            raise FormatError(f"Header must be 'width,height[,t_start,t_end]', got {line!r}", line=line_no)
        if len(fields) not in (2, 4):
            raise FormatError(f"Header must have 2 or 4 fields, got {len(fields)}", line=line_no)
        return fields, text[pos:], line_no
    raise FormatError("Missing 'width,height' header line", line=line_no or 1)


def _geometry(fields: Tuple[int, ...], line_no: int) -> SensorGeometry:
    try:
        return SensorGeometry(fields[0], fields[1])
    except GeometryError as e:
        raise FormatError(f"Invalid header geometry: {e}", line=line_no) from e


def _scan_rows(body: str, first_line: int, n_fields: int) -> List[List[int]]:
    """Line-by-line parse; slow, but names the first bad line"""
    rows = []
    for offset, raw in enumerate(body.split('\n')):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        line_no = first_line + offset
        parts = [part.strip() for part in line.split(',')]
        if len(parts) != n_fields:
            raise FormatError(f"Expected {n_fields} fields, got {len(parts)}: {line!r}", line=line_no)
        try:
            values = [int(part) for part in parts[:4]]
        except ValueError:
            raise FormatError(f"Non-integer field in {line!r}", line=line_no)
        if values[3] not in (-1, 1):
            raise FormatError(f"Polarity must be -1 or 1, got {values[3]}", line=line_no)
        if values[0] < 0:
            raise FormatError(f"Negative timestamp {values[0]}", line=line_no)
        rows.append(values + parts[4:])
    return rows


def _fast_table(body: str, columns: List[str]) -> Optional[pd.DataFrame]:
    """pandas parse; None when anything looks off so the line scan can name the culprit"""
    try:
        frame = pd.read_csv(
            io.StringIO(body),
            header=None,
            comment='#',
            skipinitialspace=True,
            skip_blank_lines=True
        )
    except pd.errors.EmptyDataError:
        return pd.DataFrame({
            name: pd.Series(dtype='object' if name == 'label' else 'int64') for name in columns
        })
    except (ValueError, pd.errors.ParserError) as e:
        logger.debug(f"CSV fast path rejected input ({e}), rescanning line by line")
        return None

    if frame.shape[1] != len(columns):
        return None
    frame.columns = columns
    for name in EVENT_COLUMNS:
        if not pd.api.types.is_integer_dtype(frame[name]):
            return None
    if not (frame['p'].isin((-1, 1)).all() and (frame['t'] >= 0).all()):
        return None
    if 'label' in columns and frame['label'].isna().any():
        return None
    return frame.astype({name: 'int64' for name in EVENT_COLUMNS})


def _read_table(body: str, first_line: int, columns: List[str]) -> pd.DataFrame:
    frame = _fast_table(body, columns)
    if frame is not None:
        return frame
    rows = _scan_rows(body, first_line, len(columns))
    table = pd.DataFrame(rows, columns=columns)
    if 'label' in columns:
        table['label'] = table['label'].astype(str)
    return table.astype({name: 'int64' for name in EVENT_COLUMNS})


def _parse(text: str, columns: List[str]) -> Tuple[pd.DataFrame, SensorGeometry, Optional[int], Optional[int]]:
    if isinstance(text, (bytes, bytearray, memoryview)):
        text = bytes(text).decode('utf-8')
    fields, body, header_line = _split_header(text)
    geometry = _geometry(fields, header_line)
    t_start, t_end = (fields[2], fields[3]) if len(fields) == 4 else (None, None)
    table = _read_table(body, header_line + 1, columns)
    return table, geometry, t_start, t_end


def read_csv_events(text) -> EventStream:
    """
    Parse `t,x,y,p` text into a canonical stream.

    Raises:
        FormatError: malformed header or row (names the 1-based line number)
        GeometryError: event outside the header geometry
    """
    table, geometry, t_start, t_end = _parse(text, EVENT_COLUMNS)
    stream, duplicates = canonicalize_arrays(
        table['x'].to_numpy(), table['y'].to_numpy(), table['t'].to_numpy(), table['p'].to_numpy(),
        geometry=geometry, t_start=t_start, t_end=t_end
    )
    if duplicates:
        logger.warning(f"⚠️ Collapsed {duplicates} duplicate CSV events")
    return stream


def _header(stream: EventStream) -> str:
    geometry = stream.geometry
    return f"{geometry.width},{geometry.height},{stream.t_start},{stream.t_end}\n"


def _rows(stream: EventStream, labels: Optional[List[str]] = None) -> str:
    table = pd.DataFrame({
        't': stream.t.astype(np.int64),
        'x': stream.x.astype(np.int64),
        'y': stream.y.astype(np.int64),
        'p': stream.p.astype(np.int64),
    })
    if labels is not None:
        table['label'] = labels
    return table.to_csv(header=False, index=False, lineterminator='\n')


def write_csv_events(stream: EventStream) -> str:
    """Serialize a stream; the 4-field header keeps the time window so round trips are lossless"""
    return "# t,x,y,p\n" + _header(stream) + _rows(stream)


def read_label_csv(text) -> LabeledStream:
    """Parse a `t,x,y,p,label` sidecar into a LabeledStream in canonical order"""
    table, geometry, t_start, t_end = _parse(text, LABEL_COLUMNS)
    names = {label.name.lower(): int(label) for label in EventLabel}
    label_text = table['label'].astype(str).str.strip().str.lower()
    unknown = sorted(set(label_text) - set(names))
    if unknown:
        raise FormatError(f"Unknown event label(s) {unknown}; expected one of {sorted(names)}")
    labels = label_text.map(names).to_numpy(dtype=np.int8)

    return LabeledStream.from_arrays(
        table['x'].to_numpy(), table['y'].to_numpy(), table['t'].to_numpy(), table['p'].to_numpy(),
        labels, geometry=geometry, t_start=t_start, t_end=t_end
    )


def write_label_csv(labeled: LabeledStream) -> str:
    """Serialize a LabeledStream with label names"""
    label_names = [EventLabel(int(value)).name.lower() for value in labeled.labels]
    return "# t,x,y,p,label\n" + _header(labeled.stream) + _rows(labeled.stream, label_names)

"""
Readers and writers of the pipeline's file formats.
"""
from __future__ import division, print_function

import csv
import io
import json
import logging
import os
from collections import OrderedDict

import numpy as np
from astropy.table import Table

from .detect import EventObservation, RowProfile
from .exceptions import CsvFormatError, DomainError, ParseError, ValidationError
from .ingest import write_timestamp_csv
from .syncsolve import SyncSolution

__all__ = ['EVENTS_HEADER', 'PROFILE_HEADER', 'format_number',
           'write_events', 'read_events', 'write_row_profiles',
           'read_row_profiles', 'read_raw_frames', 'write_json', 'read_json',
           'write_solution', 'read_solution', 'write_table',
           'write_timestamps', 'read_table', 'open_text']

logger = logging.getLogger(__name__)

EVENTS_HEADER = ['camera', 'frame', 'row', 'magnitude', 'polarity']
PROFILE_HEADER = ['frame', 'row', 'median_intensity']


def format_number(value):
    """Shortest exact text of a number; integral rows stay integers."""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def open_text(fn_or_stream, mode='r'):
    """Open a file name, or pass an open text stream through."""
    if hasattr(fn_or_stream, 'read' if mode == 'r' else 'write'):
        return _Passthrough(fn_or_stream)
    return io.open(fn_or_stream, mode, newline='')


class _Passthrough(object):

    def __init__(self, stream):
        self.stream = stream

    def __enter__(self):
        return self.stream

    def __exit__(self, *exc):
        return False


def write_events(fn, events):
    """
    Write events as `camera,frame,row,magnitude,polarity` records.

    Parameters
    ----------
    fn : str or text stream
    events : iterable of EventObservation
    """
    with open_text(fn, 'w') as f:
        print(','.join(EVENTS_HEADER), file=f)
        for e in events:
            print(','.join([e.camera_id, str(int(e.frame)), format_number(e.row),
                            format_number(e.magnitude), e.polarity]), file=f)


def _number(text, line, what, integer=False):
    try:
        value = float(text)
    except ValueError:
        raise CsvFormatError('bad {} {!r}'.format(what, text), line)
    if integer:
        if value != int(value):
            raise CsvFormatError('{} must be an integer, got {!r}'.format(what, text), line)
        return int(value)
    return int(value) if value == int(value) and '.' not in text else value


def read_events(fn):
    """
    Read an events CSV.

    Returns
    -------
    events : OrderedDict
        List of EventObservation by camera id, in file order.
    """
    events = OrderedDict()
    with open_text(fn, 'r') as f:
        for line, rec in enumerate(csv.reader(f), 1):
            if not rec or rec[0].startswith('#'):
                continue
            if line == 1 and rec == EVENTS_HEADER:
                continue
            if len(rec) != 5:
                raise CsvFormatError('expected 5 fields, got {}'.format(len(rec)), line)
            cam = rec[0]
            try:
                e = EventObservation(cam, _number(rec[1], line, 'frame', True),
                                     _number(rec[2], line, 'row'),
                                     _number(rec[3], line, 'magnitude'), rec[4])
            except DomainError as exc:
                raise CsvFormatError(str(exc), line)
            events.setdefault(cam, []).append(e)
    return events


def write_row_profiles(fn, profiles):
    """Write RowProfiles as `frame,row,median_intensity` records."""
    lines = [','.join(PROFILE_HEADER)]
    for p in profiles:
        for r, v in enumerate(np.asarray(p.values)):
            lines.append('{},{},{}'.format(p.frame, r, format_number(v)))
    with open_text(fn, 'w') as f:
        f.write('\n'.join(lines) + '\n')


def read_row_profiles(fn, rows_active=None):
    """
    Read a profile CSV.

    Parameters
    ----------
    fn : str or text stream
    rows_active : int, optional
        Expected profile length.

    Returns
    -------
    profiles : list of RowProfile
        Sorted by frame.
    """
    with open_text(fn, 'r') as f:
        text = f.read()
    try:
        data = np.loadtxt(io.StringIO(text), delimiter=',', comments='#',
                          skiprows=1 if text.startswith('frame') else 0, ndmin=2)
    except ValueError as exc:
        raise CsvFormatError('malformed profile record ({})'.format(exc))
    if data.size == 0:
        return []
    if data.shape[1] != 3:
        raise CsvFormatError('expected 3 fields per profile record')
    profiles = []
    frames = data[:, 0].astype(np.int64)
    order = np.lexsort((data[:, 1], frames))
    data, frames = data[order], frames[order]
    for f in np.unique(frames):
        block = data[frames == f]
        rows = block[:, 1].astype(np.int64)
        if not np.array_equal(rows, np.arange(len(rows))):
            raise ValidationError('frame {}: rows are not 0..{}'.format(f, len(rows) - 1))
        if rows_active is not None and len(rows) != rows_active:
            raise ValidationError('frame {}: {} rows, expected {}'.format(
                f, len(rows), rows_active))
        profiles.append(RowProfile(int(f), block[:, 2]))
    return profiles


def read_raw_frames(fn, height, width):
    """
    Memory-map a stream of H x W 8-bit grayscale frames.

    Returns
    -------
    frames : ndarray
        Shape (n_frames, height, width), read-only.
    """
    if height < 1 or width < 1:
        raise DomainError('frame dimensions must be positive')
    size = os.path.getsize(fn)
    frame_bytes = height * width
    if size % frame_bytes:
        raise ParseError('{}: {} bytes is not a whole number of {}x{} frames'.format(
            fn, size, height, width))
    if size == 0:
        return np.zeros((0, height, width), dtype=np.uint8)
    return np.memmap(fn, dtype=np.uint8, mode='r',
                     shape=(size // frame_bytes, height, width))


def write_json(fn, payload):
    """Deterministic JSON: sorted keys, two-space indent."""
    with open_text(fn, 'w') as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write('\n')


def read_json(fn):
    with open_text(fn, 'r') as f:
        try:
            return json.load(f)
        except ValueError as exc:
            raise ParseError('invalid JSON: {}'.format(exc))


def write_solution(fn, solution):
    write_json(fn, solution.to_dict())


def read_solution(fn):
    return SyncSolution.from_dict(read_json(fn))


def write_table(fn, table):
    """Write an astropy Table as CSV."""
    table.write(fn, format='ascii.csv', overwrite=True)


def write_timestamps(fn, track):
    with open_text(fn, 'w') as f:
        write_timestamp_csv(track, f)


def read_table(fn):
    return Table.read(fn, format='ascii.csv')

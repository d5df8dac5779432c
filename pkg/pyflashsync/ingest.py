"""
Frame timestamp extraction from MP4 (ISO-BMFF) metadata, RTP header
records and CSV sidecar files, plus dropped-frame gap analysis.
"""
from __future__ import division, print_function

import csv
import io
import logging
import math
import struct
from collections import namedtuple

import numpy as np

from .exceptions import (CsvFormatError, DomainError, Mp4ParseError,
                         RtpParseError, ValidationError)
from .timebase import ticks_to_ms

__all__ = ['TimestampTrack', 'FrameGap', 'FrameGapReport', 'RtpHeaderRecord',
           'parse_mp4_timestamps', 'parse_rtp_timestamps', 'read_rtp_records',
           'load_timestamp_csv', 'write_timestamp_csv',
           'detect_dropped_frames', 'load_timestamp_track',
           'RTP_TIMESCALE', 'CSV_TIMESCALE', 'MP4_MAX_SAMPLES']

logger = logging.getLogger(__name__)

RTP_TIMESCALE = 90000
RTP_TIMESTAMP_MODULUS = 2**32
CSV_TIMESCALE = 1000
# upper bound on stts samples when no stsz box gives the count (~31 days at 25 fps)
MP4_MAX_SAMPLES = 2**26


class TimestampTrack(object):
    """
    Frame acquisition timestamps of one camera stream.

    Parameters
    ----------
    camera_id : str
        Camera identifier.
    timescale : int
        Time units per second of `timestamps`.
    timestamps : array-like
        Strictly increasing frame timestamps in timescale units.
    nominal_frame_duration : float, optional
        Declared frame duration in ms. If None, it is inferred from the
        median timestamp delta when asked for.
    """

    def __init__(self, camera_id, timescale, timestamps,
                 nominal_frame_duration=None):
        if int(timescale) != timescale or timescale < 1:
            raise ValidationError('timescale must be a positive integer, '
                                  'got {!r}'.format(timescale))
        timestamps = np.array(timestamps)
        if timestamps.dtype.kind not in 'iuf':
            timestamps = timestamps.astype(np.float64)
        if timestamps.ndim != 1:
            raise ValidationError('timestamps must be one dimensional')
        bad = np.nonzero(np.diff(timestamps) <= 0)[0]
        if len(bad):
            raise ValidationError(
                'camera {}: timestamps not strictly increasing at frame {}'.format(
                    camera_id, bad[0] + 1))
        if nominal_frame_duration is not None and not nominal_frame_duration > 0:
            raise ValidationError('nominal_frame_duration must be positive')
        timestamps.setflags(write=False)
        self._camera_id = camera_id
        self._timescale = int(timescale)
        self._timestamps = timestamps
        self._nominal = nominal_frame_duration

    camera_id = property(lambda self: self._camera_id)
    timescale = property(lambda self: self._timescale)
    timestamps = property(lambda self: self._timestamps)

    def __len__(self):
        return len(self._timestamps)

    def __repr__(self):
        return 'TimestampTrack(camera_id={!r}, timescale={}, frames={})'.format(
            self._camera_id, self._timescale, len(self))

    def to_ms(self):
        """Timestamps in milliseconds."""
        return ticks_to_ms(self._timestamps, self._timescale)

    def frame_durations(self):
        return np.diff(self.to_ms())

    @property
    def nominal_frame_duration(self):
        if self._nominal is not None:
            return self._nominal
        return self.infer_frame_duration()

    def infer_frame_duration(self):
        """Median frame delta in ms, None for tracks shorter than two frames."""
        if len(self) < 2:
            return None
        return float(np.median(self.frame_durations()))

    @property
    def duration_ms(self):
        if len(self) == 0:
            return 0.0
        ms = self.to_ms()
        return float(ms[-1] - ms[0])

    def renamed(self, camera_id):
        return TimestampTrack(camera_id, self._timescale, self._timestamps,
                              self._nominal)


FrameGap = namedtuple('FrameGap', ['frame', 'missing', 'duration_ms'])


class FrameGapReport(object):
    """
    Gaps found in a timestamp track.

    Each FrameGap gives the stream index of the frame before the gap,
    the number of frames missing and the gap duration in ms.
    """

    def __init__(self, gaps=()):
        self.gaps = list(gaps)
        for gap in self.gaps:
            assert gap.missing >= 1

    def __len__(self):
        return len(self.gaps)

    def __iter__(self):
        return iter(self.gaps)

    @property
    def total_missing(self):
        return sum(g.missing for g in self.gaps)

    def missing_indices(self):
        """
        Indices of the missing frames on the nominal frame grid,
        assuming stream frame 0 sits at nominal index 0.
        """
        missing, shift = [], 0
        for gap in self.gaps:
            start = gap.frame + shift + 1
            missing.extend(range(start, start + gap.missing))
            shift += gap.missing
        return missing


RtpHeaderRecord = namedtuple('RtpHeaderRecord',
                             ['sequence_number', 'timestamp', 'marker'])


############################################################################
# MP4
############################################################################

_BOX_HEADER = struct.Struct('>I4s')
_U32 = struct.Struct('>I')
_U64 = struct.Struct('>Q')


def _read_bytes(byte_stream):
    if isinstance(byte_stream, (bytes, bytearray, memoryview)):
        return bytes(byte_stream)
    return byte_stream.read()


def _iter_boxes(data, start, end, path):
    """
    Yield (type, box start, payload start, box end) for the boxes
    laid out between start and end.
    """
    offset = start
    while offset < end:
        if end - offset < 8:
            raise Mp4ParseError('truncated box header', path, offset)
        size, btype = _BOX_HEADER.unpack_from(data, offset)
        btype = btype.decode('latin-1')
        box_path = path + '/' + btype if path else btype
        header = 8
        if size == 1:
            if end - offset < 16:
                raise Mp4ParseError('truncated 64-bit box size', box_path, offset)
            size, = _U64.unpack_from(data, offset + 8)
            header = 16
        elif size == 0:
            size = end - offset
        if size < header:
            raise Mp4ParseError('box size {} smaller than its header'.format(size),
                                box_path, offset)
        if offset + size > end:
            raise Mp4ParseError('truncated box: declares {} bytes, {} available'.format(
                size, end - offset), box_path, offset)
        logger.debug('box %s at %d, %d bytes', box_path, offset, size)
        yield btype, offset, offset + header, offset + size
        offset += size


def _find_box(data, start, end, path, btype):
    for name, box_start, payload, box_end in _iter_boxes(data, start, end, path):
        if name == btype:
            return box_start, payload, box_end
    return None


def _require_box(data, start, end, path, btype):
    found = _find_box(data, start, end, path, btype)
    if found is None:
        raise Mp4ParseError('missing {} box'.format(btype),
                            path + '/' + btype if path else btype, start)
    return found


def _need(data, offset, nbytes, end, path):
    if offset + nbytes > end:
        raise Mp4ParseError('truncated box payload', path, offset)


def _parse_hdlr(data, payload, end, path):
    # version/flags, pre_defined, handler_type
    _need(data, payload, 12, end, path)
    return data[payload + 8:payload + 12].decode('latin-1')


def _parse_mdhd(data, payload, end, path):
    _need(data, payload, 4, end, path)
    version = data[payload]
    if version == 0:
        _need(data, payload, 20, end, path)
        timescale, = _U32.unpack_from(data, payload + 12)
    elif version == 1:
        _need(data, payload, 32, end, path)
        timescale, = _U32.unpack_from(data, payload + 20)
    else:
        raise Mp4ParseError('unsupported mdhd version {}'.format(version),
                            path, payload)
    if timescale == 0:
        raise Mp4ParseError('zero timescale', path, payload)
    return timescale


def _parse_stts(data, payload, end, path):
    _need(data, payload, 8, end, path)
    entry_count, = _U32.unpack_from(data, payload + 4)
    _need(data, payload + 8, 8 * entry_count, end, path)
    entries = np.frombuffer(data, dtype='>u4', count=2 * entry_count,
                            offset=payload + 8).reshape(-1, 2)
    return entries[:, 0].astype(np.int64), entries[:, 1].astype(np.int64)


def _parse_trak(data, payload, end, path):
    mdia_start, mdia_payload, mdia_end = _require_box(data, payload, end, path, 'mdia')
    mdia_path = path + '/mdia'
    info = dict(handler=None, mdhd=None, stbl=None)
    for name, box_start, box_payload, box_end in _iter_boxes(
            data, mdia_payload, mdia_end, mdia_path):
        if name == 'hdlr':
            info['handler'] = _parse_hdlr(data, box_payload, box_end,
                                          mdia_path + '/hdlr')
        elif name == 'mdhd':
            info['mdhd'] = (box_payload, box_end)
        elif name == 'minf':
            stbl = _find_box(data, box_payload, box_end, mdia_path + '/minf', 'stbl')
            if stbl is not None:
                info['stbl'] = stbl
    info['mdia'] = mdia_start
    return info


def _parse_stsz_count(data, stbl, path):
    found = _find_box(data, stbl[1], stbl[2], path, 'stsz')
    if found is None:
        return None
    _, payload, end = found
    # version/flags, sample_size, sample_count
    _need(data, payload, 12, end, path + '/stsz')
    count, = _U32.unpack_from(data, payload + 8)
    return count


def _track_timing(data, info):
    """Timescale and stts runs of a parsed trak, with the run total checked."""
    if info['mdhd'] is None:
        raise Mp4ParseError('missing mdhd box', 'moov/trak/mdia/mdhd', info['mdia'])
    timescale = _parse_mdhd(data, info['mdhd'][0], info['mdhd'][1],
                            'moov/trak/mdia/mdhd')
    if info['stbl'] is None:
        raise Mp4ParseError('missing stbl box', 'moov/trak/mdia/minf/stbl',
                            info['mdia'])
    stbl_path = 'moov/trak/mdia/minf/stbl'
    _, stts_payload, stts_end = _require_box(
        data, info['stbl'][1], info['stbl'][2], stbl_path, 'stts')
    counts, deltas = _parse_stts(data, stts_payload, stts_end, stbl_path + '/stts')

    n_samples = int(counts.sum())
    stsz_count = _parse_stsz_count(data, info['stbl'], stbl_path)
    limit = MP4_MAX_SAMPLES if stsz_count is None else stsz_count
    if n_samples > limit:
        raise Mp4ParseError('stts describes {} samples, at most {} expected'.format(
            n_samples, limit), stbl_path + '/stts', stts_payload)
    return timescale, counts, deltas


def parse_mp4_timestamps(byte_stream, camera_id='', track_index=None):
    """
    Frame timestamps of a video track from MP4 Duration / Time Scale
    metadata (mdhd timescale and stts sample deltas).

    Parameters
    ----------
    byte_stream : bytes or binary file object
        Complete ISO-BMFF file.
    camera_id : str, optional
        Identifier stored on the returned track.
    track_index : int, optional
        Index of the trak box (in file order) to use. If None, the first
        track with a 'vide' handler that parses is used; other tracks
        may be malformed.

    Returns
    -------
    track : TimestampTrack
        Cumulative sample start times in mdhd timescale units, starting at 0.

    Notes
    -----
    Edit lists and composition offsets are ignored; for camera streams
    capture order equals decode order. The stts sample total may not
    exceed the stsz sample count, or MP4_MAX_SAMPLES without stsz.
    """
    data = _read_bytes(byte_stream)
    moov = _require_box(data, 0, len(data), '', 'moov')

    traks = [(box_payload, box_end) for name, _, box_payload, box_end in
             _iter_boxes(data, moov[1], moov[2], 'moov') if name == 'trak']
    if not traks:
        raise Mp4ParseError('missing trak box', 'moov/trak', moov[0])

    if track_index is not None:
        if not 0 <= track_index < len(traks):
            raise Mp4ParseError('track index {} out of range ({} tracks)'.format(
                track_index, len(traks)), 'moov/trak', moov[0])
        info = _parse_trak(data, traks[track_index][0], traks[track_index][1],
                           'moov/trak')
        timescale, counts, deltas = _track_timing(data, info)
    else:
        timing, video_errors, other_errors = None, [], []
        for k, (payload, end) in enumerate(traks):
            try:
                info = _parse_trak(data, payload, end, 'moov/trak')
            except Mp4ParseError as exc:
                logger.debug('skipping trak %d: %s', k, exc)
                other_errors.append(exc)
                continue
            if info['handler'] != 'vide':
                continue
            try:
                timing = _track_timing(data, info)
                break
            except Mp4ParseError as exc:
                logger.warning('skipping video trak %d: %s', k, exc)
                video_errors.append(exc)
        if timing is None:
            errors = video_errors or other_errors
            if errors:
                raise errors[0]
            raise Mp4ParseError('no video track', 'moov/trak', moov[0])
        timescale, counts, deltas = timing

    sample_deltas = np.repeat(deltas, counts)
    timestamps = np.zeros(len(sample_deltas), dtype=np.int64)
    if len(sample_deltas) > 1:
        timestamps[1:] = np.cumsum(sample_deltas[:-1])

    nominal = None
    if len(sample_deltas):
        nominal = float(np.median(sample_deltas)) * 1000.0 / timescale
    logger.info('camera %s: %d frames from mp4, timescale %d',
                camera_id, len(timestamps), timescale)
    return TimestampTrack(camera_id, timescale, timestamps, nominal)


############################################################################
# RTP
############################################################################

def _record_timestamp(record):
    if hasattr(record, 'timestamp'):
        return int(record.timestamp)
    if isinstance(record, (tuple, list)):
        return int(record[1])
    return int(record)


def parse_rtp_timestamps(header_records, camera_id=''):
    """
    Frame timestamps from RTP headers in capture order.

    Packets of one video frame share a timestamp, so a new frame starts
    whenever the timestamp changes. The 32-bit timestamps are unwrapped
    onto a monotonic 64-bit axis.

    Parameters
    ----------
    header_records : iterable
        RtpHeaderRecord, (sequence_number, timestamp, marker) tuples or
        bare timestamps.
    camera_id : str, optional

    Returns
    -------
    track : TimestampTrack
        One timestamp per frame at the 90 kHz video clock.
    """
    frames = []
    prev_raw = None
    unwrapped = 0
    for index, record in enumerate(header_records):
        raw = _record_timestamp(record)
        if not 0 <= raw < RTP_TIMESTAMP_MODULUS:
            raise RtpParseError('timestamp {} is not a 32-bit value'.format(raw),
                                index)
        if prev_raw is None:
            unwrapped = raw
            frames.append(unwrapped)
        else:
            delta = (raw - prev_raw) % RTP_TIMESTAMP_MODULUS
            if delta == 0:
                continue
            if delta >= RTP_TIMESTAMP_MODULUS // 2:
                raise RtpParseError(
                    'timestamp {} goes backwards after {}'.format(raw, prev_raw),
                    index)
            unwrapped += delta
            frames.append(unwrapped)
        prev_raw = raw
    logger.info('camera %s: %d frames from rtp records', camera_id, len(frames))
    return TimestampTrack(camera_id, RTP_TIMESCALE,
                          np.array(frames, dtype=np.int64))


def _text_rows(text_stream):
    """Yield (line number, fields) skipping blank and comment lines."""
    if isinstance(text_stream, str):
        text_stream = io.StringIO(text_stream)
    for lineno, row in enumerate(csv.reader(text_stream), start=1):
        if not row or not ''.join(row).strip():
            continue
        if row[0].lstrip().startswith('#'):
            continue
        yield lineno, [field.strip() for field in row]


def read_rtp_records(text_stream):
    """
    Read an RTP header record CSV: sequence_number,timestamp_ticks,marker_bit.
    """
    records = []
    for lineno, row in _text_rows(text_stream):
        if not records and row[0] == 'sequence_number':
            continue
        if len(row) != 3:
            raise CsvFormatError('expected 3 fields, got {}'.format(len(row)), lineno)
        try:
            records.append(RtpHeaderRecord(int(row[0]), int(row[1]),
                                           bool(int(row[2]))))
        except ValueError:
            raise CsvFormatError('malformed record {!r}'.format(','.join(row)),
                                 lineno)
    return records


############################################################################
# CSV
############################################################################

def load_timestamp_csv(text_stream, camera_id=''):
    """
    Read a `frame,timestamp_ms` CSV.

    Parameters
    ----------
    text_stream : file object or str
        Open text file or the CSV content itself. The header line is
        optional; lines starting with '#' are comments.
    camera_id : str, optional

    Returns
    -------
    track : TimestampTrack
        Timestamps in ms (timescale 1000).
    """
    frames, stamps = [], []
    for lineno, row in _text_rows(text_stream):
        if not frames and row[0] == 'frame':
            continue
        if len(row) != 2:
            raise CsvFormatError('expected 2 fields, got {}'.format(len(row)), lineno)
        try:
            frame, stamp = int(row[0]), float(row[1])
        except ValueError:
            raise CsvFormatError('malformed record {!r}'.format(','.join(row)),
                                 lineno)
        if not math.isfinite(stamp):
            raise CsvFormatError('non-finite timestamp', lineno)
        if frames and frame <= frames[-1]:
            raise ValidationError('line {}: frame index {} not increasing'.format(
                lineno, frame))
        if stamps and stamp <= stamps[-1]:
            raise ValidationError('line {}: timestamp {} not increasing'.format(
                lineno, stamp))
        frames.append(frame)
        stamps.append(stamp)
    return TimestampTrack(camera_id, CSV_TIMESCALE,
                          np.array(stamps, dtype=np.float64))


def write_timestamp_csv(track, text_stream):
    """Write a track as `frame,timestamp_ms` records."""
    print('frame,timestamp_ms', file=text_stream)
    for i, ms in enumerate(track.to_ms()):
        print('{},{!r}'.format(i, float(ms)), file=text_stream)


def load_timestamp_track(fmt, path, camera_id='', track_index=None):
    """
    Load a timestamp track from a file.

    Parameters
    ----------
    fmt : str
        'mp4', 'rtp' or 'csv'.
    path : str
        File name.
    camera_id : str, optional
    track_index : int, optional
        MP4 trak index, see parse_mp4_timestamps.
    """
    if fmt == 'mp4':
        with open(path, 'rb') as f:
            return parse_mp4_timestamps(f, camera_id, track_index)
    elif fmt == 'rtp':
        with open(path, 'r') as f:
            return parse_rtp_timestamps(read_rtp_records(f), camera_id)
    elif fmt == 'csv':
        with open(path, 'r') as f:
            return load_timestamp_csv(f, camera_id)
    raise DomainError('unknown timestamp format {!r}'.format(fmt))


############################################################################
# Gap analysis
############################################################################

def detect_dropped_frames(track, nominal_fps, slack=0.25):
    """
    Find dropped frames as oversized timestamp deltas.

    Parameters
    ----------
    track : TimestampTrack
    nominal_fps : float
        Nominal frame rate.
    slack : float, optional
        A delta is a gap when it exceeds (1 + slack) nominal durations.

    Returns
    -------
    report : FrameGapReport
        Missing count per gap is round(delta / nominal) - 1, at least 1.
    """
    if not nominal_fps > 0:
        raise DomainError('nominal_fps must be positive, got {!r}'.format(nominal_fps))
    if not 0 <= slack < 0.5:
        raise DomainError('slack must be in [0, 0.5), got {!r}'.format(slack))
    nominal = 1000.0 / nominal_fps
    deltas = track.frame_durations()
    gaps = []
    for i in np.nonzero(deltas > (1 + slack) * nominal)[0]:
        delta = float(deltas[i])
        # round half up
        missing = max(1, int(math.floor(delta / nominal + 0.5)) - 1)
        gaps.append(FrameGap(int(i), missing, delta))
    if gaps:
        logger.info('camera %s: %d gaps, %d frames missing', track.camera_id,
                    len(gaps), sum(g.missing for g in gaps))
    return FrameGapReport(gaps)

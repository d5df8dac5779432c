"""
Detection of synchronization events: abrupt lighting changes (e.g.
photographic flashes) captured by a rolling shutter sensor.

For every frame the median intensity of each row is computed, profiles
of consecutive frames are subtracted, and frames whose maximum difference
exceeds a threshold carry an event. The event row is the leading edge of
the difference profile.
"""
from __future__ import division, print_function

import logging
from collections import namedtuple
from multiprocessing.pool import ThreadPool

import numpy as np
from scipy.stats import median_abs_deviation

from .exceptions import DomainError

__all__ = ['LEADING', 'TRAILING', 'RowProfile', 'DiffProfile',
           'EventObservation', 'median_row_profile', 'compute_row_profiles',
           'diff_profiles', 'difference_profiles', 'locate_edge',
           'locate_trailing_edge', 'auto_threshold', 'detect_events',
           'reject_boundary_events', 'detect_camera_events']

logger = logging.getLogger(__name__)

LEADING = 'leading'
TRAILING = 'trailing'


class RowProfile(namedtuple('RowProfile', ['frame', 'values'])):
    """Median intensity of every active row of one frame."""
    __slots__ = ()


class DiffProfile(namedtuple('DiffProfile', ['frame', 'values'])):
    """Signed row profile difference m_f - m_{f-1}."""
    __slots__ = ()


class EventObservation(namedtuple('EventObservation',
                                  ['camera_id', 'frame', 'row', 'magnitude',
                                   'polarity'])):
    """
    A lighting transition edge localized to (frame, row) in one camera.

    Parameters
    ----------
    camera_id : str
    frame : int
        Stream frame index.
    row : int or float
        Edge row, 0 <= row < rows_active. Detected events carry integer
        rows; simulated ground truth may carry exact fractional rows.
    magnitude : float
        Peak absolute difference intensity, > 0.
    polarity : str
        LEADING or TRAILING. Only leading edges are matched.
    """
    __slots__ = ()

    def __new__(cls, camera_id, frame, row, magnitude, polarity=LEADING):
        if polarity not in (LEADING, TRAILING):
            raise DomainError('unknown polarity {!r}'.format(polarity))
        if not magnitude > 0:
            raise DomainError('event magnitude must be positive')
        if row < 0 or frame < 0:
            raise DomainError('negative frame or row')
        return super(EventObservation, cls).__new__(
            cls, camera_id, frame, row, magnitude, polarity)


def median_row_profile(frame_pixels, frame=0):
    """
    Median intensity of each row of a grayscale frame.

    Parameters
    ----------
    frame_pixels : 2D array-like
        H x W grayscale frame.
    frame : int, optional
        Frame index stored on the profile.

    Returns
    -------
    profile : RowProfile
        For even W the lower median (order statistic (W-1)//2) is used,
        so 8-bit input gives integer medians.
    """
    pixels = np.asarray(frame_pixels)
    if pixels.ndim != 2 or pixels.size == 0:
        raise DomainError('expected a non-empty H x W matrix, got shape {}'.format(
            pixels.shape))
    k = (pixels.shape[1] - 1) // 2
    values = np.partition(pixels, k, axis=1)[:, k]
    return RowProfile(frame, values)


def compute_row_profiles(frames, workers=1, first_frame=0):
    """
    Row profiles of a frame sequence.

    Parameters
    ----------
    frames : sequence of 2D arrays or 3D array
        Frames in stream order.
    workers : int, optional
        Number of threads; frames are independent.
    first_frame : int, optional
        Stream index of frames[0].

    Returns
    -------
    profiles : list of RowProfile
        In frame order.
    """
    jobs = [(first_frame + i, f) for i, f in enumerate(frames)]

    def _one(job):
        return median_row_profile(job[1], job[0])

    if workers > 1:
        with ThreadPool(workers) as pool:
            profiles = pool.map(_one, jobs)
    else:
        profiles = [_one(job) for job in jobs]
    return sorted(profiles, key=lambda p: p.frame)


def _signed(values):
    values = np.asarray(values)
    return values.astype(np.int64 if values.dtype.kind in 'iub' else np.float64)


def diff_profiles(current, previous):
    """
    Elementwise signed difference current - previous.

    Parameters
    ----------
    current, previous : RowProfile

    Returns
    -------
    diff : DiffProfile
        Carries the frame index of `current`.
    """
    cur, prev = _signed(current.values), _signed(previous.values)
    if cur.shape != prev.shape:
        raise DomainError('profile lengths differ: {} vs {}'.format(
            len(cur), len(prev)))
    return DiffProfile(current.frame, cur - prev)


def difference_profiles(profiles):
    """
    DiffProfiles for every pair of consecutive frames present in
    `profiles`. Frames missing from a sparse profile set are skipped.
    """
    ordered = sorted(profiles, key=lambda p: p.frame)
    return [diff_profiles(cur, prev) for prev, cur in zip(ordered[:-1], ordered[1:])
            if cur.frame == prev.frame + 1]


def locate_edge(diff):
    """
    Leading edge row: the first row reaching half of the profile maximum.

    Parameters
    ----------
    diff : DiffProfile

    Returns
    -------
    row : int
    """
    values = np.asarray(diff.values)
    peak = values.max() if values.size else 0
    if not peak > 0:
        raise DomainError('frame {}: no positive difference to locate'.format(
            diff.frame))
    return int(np.argmax(values >= 0.5 * peak))


def locate_trailing_edge(diff):
    """First row reaching half of the most negative difference."""
    values = np.asarray(diff.values)
    return locate_edge(DiffProfile(diff.frame, -values))


def auto_threshold(diffs, k=8.0, floor=1.0):
    """
    Robust threshold on the sequence of per-frame maxima:
    median + k * MAD, never below `floor`.
    """
    maxima = np.array([np.max(d.values) for d in diffs], dtype=np.float64)
    if maxima.size == 0:
        return floor
    threshold = np.median(maxima) + k * median_abs_deviation(maxima)
    return max(float(threshold), floor)


def detect_events(diffs, threshold=40.0, camera_id='', include_trailing=False,
                  auto_k=8.0):
    """
    Threshold per-frame difference maxima and localize the edges.

    Parameters
    ----------
    diffs : sequence of DiffProfile
    threshold : float or 'auto', optional
        Absolute intensity threshold; 'auto' uses auto_threshold.
    camera_id : str, optional
    include_trailing : bool, optional
        If True, also emit TRAILING events for negative peaks below
        -threshold (diagnostic only).
    auto_k : float, optional
        MAD multiplier of the automatic threshold.

    Returns
    -------
    events : list of EventObservation
        At most one leading event per frame.
    """
    if threshold == 'auto':
        threshold = auto_threshold(diffs, auto_k)
        logger.info('camera %s: automatic threshold %.2f', camera_id, threshold)
    if not threshold > 0:
        raise DomainError('threshold must be positive, got {!r}'.format(threshold))

    events = []
    for diff in diffs:
        values = np.asarray(diff.values)
        if values.size == 0:
            continue
        peak = values.max()
        if peak > threshold:
            row = locate_edge(diff)
            logger.debug('camera %s: event frame %d row %d peak %.1f',
                         camera_id, diff.frame, row, peak)
            events.append(EventObservation(camera_id, int(diff.frame), row,
                                           float(peak), LEADING))
        trough = -values.min()
        if include_trailing and trough > threshold:
            events.append(EventObservation(camera_id, int(diff.frame),
                                           locate_trailing_edge(diff),
                                           float(trough), TRAILING))
    return events


def reject_boundary_events(events, geometry, margin=0.02):
    """
    Drop events whose edge row lies within `margin` of the first or last
    active row. Such flashes span two frames.

    Parameters
    ----------
    events : sequence of EventObservation
    geometry : SensorGeometry
    margin : float, optional
        Fraction of rows_active; the margin in rows is its floor. Kept
        rows satisfy margin < row < rows_active - margin, and never touch
        the first or last active row.

    Returns
    -------
    kept : list of EventObservation
    """
    margin_rows = int(margin * geometry.rows_active)
    upper = geometry.rows_active - max(margin_rows, 1)
    kept = [e for e in events if margin_rows < e.row < upper]
    if len(kept) < len(events):
        logger.info('rejected %d boundary events (margin %d rows)',
                    len(events) - len(kept), margin_rows)
    return kept


def detect_camera_events(profiles, geometry, camera_id='', threshold=40.0,
                         margin=0.02, include_trailing=False, auto_k=8.0):
    """
    Row profiles of one camera to boundary-filtered events.

    Returns
    -------
    events : list of EventObservation
    diffs : list of DiffProfile
    """
    diffs = difference_profiles(profiles)
    for diff in diffs:
        if len(diff.values) != geometry.rows_active:
            raise DomainError('camera {}: profile has {} rows, geometry {}'.format(
                camera_id, len(diff.values), geometry.rows_active))
    events = detect_events(diffs, threshold, camera_id, include_trailing, auto_k)
    events = reject_boundary_events(events, geometry, margin)
    logger.info('camera %s: %d events in %d frame differences',
                camera_id, len(events), len(diffs))
    return events, diffs

"""
Rolling-shutter time model and the affine camera-to-reference mapping.

All times are double precision milliseconds. A row r of frame f in a
camera with R0 hidden rows before the active area, Rh active rows and
R1 hidden rows after it starts its exposure at

    t(f, r) = t_f + (R0 + r) / (R0 + Rh + R1) * T_frame

and the synchronization transformation to the reference camera is

    s(f, r) = alpha * t_f + beta + r * T_row.

The transformation has no R0 term: the constant R0 * T_row of either
camera ends up inside beta when it is fitted.
"""
from __future__ import division, print_function

import logging
from collections import namedtuple

import numpy as np

from .exceptions import DomainError

__all__ = ['SensorGeometry', 'TemporalPosition', 'SyncParams',
           'sub_frame_time', 'row_period', 'apply_sync', 'camera_time',
           'ticks_to_ms', 'ms_to_ticks', 'drift_lines_per_second',
           'check_drift', 'PLAUSIBLE_DRIFT']

logger = logging.getLogger(__name__)

PLAUSIBLE_DRIFT = 1e-3


class SensorGeometry(namedtuple('SensorGeometry',
                                ['rows_before', 'rows_active', 'rows_after'])):
    """
    Row layout of an image sensor.

    Parameters
    ----------
    rows_before : int
        Hidden rows read out before the active area (R0).
    rows_active : int
        Image height (Rh).
    rows_after : int
        Hidden rows read out after the active area (R1).

    Notes
    -----
    When the hidden row counts are unknown use R0 = R1 = 0 and let the
    solver estimate the effective row period.
    """
    __slots__ = ()

    def __new__(cls, rows_before=0, rows_active=1, rows_after=0):
        for name, val, lo in [('rows_before', rows_before, 0),
                              ('rows_active', rows_active, 1),
                              ('rows_after', rows_after, 0)]:
            if int(val) != val or val < lo:
                raise DomainError(
                    '{} must be an integer >= {}, got {!r}'.format(name, lo, val))
        return super(SensorGeometry, cls).__new__(
            cls, int(rows_before), int(rows_active), int(rows_after))

    @classmethod
    def active_only(cls, rows_active):
        return cls(0, rows_active, 0)

    def total_rows(self):
        return self.rows_before + self.rows_active + self.rows_after

    def check_row(self, row):
        row = np.asarray(row)
        if np.any(row < 0) or np.any(row >= self.rows_active):
            raise DomainError('row {} outside active range [0, {})'.format(
                row.tolist(), self.rows_active))


class TemporalPosition(namedtuple('TemporalPosition', ['frame', 'row'])):
    """A (frame, row) pair inside one camera stream."""
    __slots__ = ()

    def __new__(cls, frame, row, geometry=None):
        if frame < 0:
            raise DomainError('frame index must be nonnegative, got {}'.format(frame))
        if row < 0:
            raise DomainError('row index must be nonnegative, got {}'.format(row))
        if geometry is not None:
            geometry.check_row(row)
        return super(TemporalPosition, cls).__new__(cls, frame, row)


class SyncParams(namedtuple('SyncParams', ['alpha', 'beta', 't_row'])):
    """
    Parameters of the camera-to-reference transformation.

    Parameters
    ----------
    alpha : float
        Clock drift factor (dimensionless, close to 1).
    beta : float
        Temporal shift in ms.
    t_row : float
        Row period in ms, expressed in reference time.
    """
    __slots__ = ()

    def __new__(cls, alpha=1.0, beta=0.0, t_row=1.0):
        if not alpha > 0:
            raise DomainError('alpha must be positive, got {!r}'.format(alpha))
        if not t_row > 0:
            raise DomainError('t_row must be positive, got {!r}'.format(t_row))
        return super(SyncParams, cls).__new__(
            cls, float(alpha), float(beta), float(t_row))

    @classmethod
    def identity(cls, t_row=1.0):
        return cls(1.0, 0.0, t_row)


def row_period(geometry, frame_duration):
    """
    Time between exposure starts of consecutive rows.

    Parameters
    ----------
    geometry : SensorGeometry
    frame_duration : float
        Nominal frame duration in ms.

    Returns
    -------
    t_row : float
        Row period in ms.
    """
    if not frame_duration > 0:
        raise DomainError('frame_duration must be positive, got {!r}'.format(
            frame_duration))
    return frame_duration / geometry.total_rows()


def sub_frame_time(frame_timestamp, row, geometry, frame_duration):
    """
    Camera-local exposure start of a row.

    Parameters
    ----------
    frame_timestamp : float or ndarray
        Frame timestamp t_f in ms.
    row : int or ndarray
        Active row index, 0 <= row < geometry.rows_active.
    geometry : SensorGeometry
    frame_duration : float
        Nominal frame duration in ms.

    Returns
    -------
    t : float or ndarray
        t_f + (R0 + row) * T_row, inside [t_f, t_f + frame_duration).
    """
    geometry.check_row(row)
    t_row = row_period(geometry, frame_duration)
    return frame_timestamp + geometry.rows_before * t_row + row * t_row


def apply_sync(params, frame_timestamp, row):
    """
    Map a camera (frame timestamp, row) to reference time.

    Parameters
    ----------
    params : SyncParams
    frame_timestamp : float or ndarray
        Frame timestamp in camera time, ms.
    row : float or ndarray
        Row index, nonnegative.

    Returns
    -------
    t_ref : float or ndarray
        alpha * t_f + beta + row * t_row
    """
    if np.any(np.asarray(row) < 0):
        raise DomainError('row must be nonnegative')
    return params.alpha * frame_timestamp + params.beta + row * params.t_row


def camera_time(params, reference_time):
    """Inverse of the clock part of apply_sync: (T - beta) / alpha."""
    return (reference_time - params.beta) / params.alpha


def ticks_to_ms(ticks, timescale):
    """
    Convert container ticks to milliseconds.

    Parameters
    ----------
    ticks : int, float or ndarray
    timescale : int
        Ticks per second.
    """
    if timescale < 1:
        raise DomainError('timescale must be >= 1, got {}'.format(timescale))
    ticks = np.asarray(ticks, dtype=np.float64)
    if timescale == 1000:
        return ticks.copy()
    return ticks * 1000.0 / timescale


def ms_to_ticks(ms, timescale):
    """Milliseconds to integer ticks, rounded to the nearest tick."""
    if timescale < 1:
        raise DomainError('timescale must be >= 1, got {}'.format(timescale))
    return np.rint(np.asarray(ms, dtype=np.float64) * timescale / 1000.0).astype(np.int64)


def drift_lines_per_second(alpha, t_row):
    """
    Rows per second that have to be corrected to keep two clocks aligned.
    Derived from the fitted alpha and T_row, not fitted itself.
    """
    return (1.0 - alpha) / t_row * 1e3


def check_drift(alpha, camera_id=''):
    plausible = abs(alpha - 1.0) < PLAUSIBLE_DRIFT
    if not plausible:
        logger.warning('camera %s: implausible clock drift alpha=%.9f',
                       camera_id, alpha)
    return plausible

"""
Event matching across cameras and least-squares estimation of the
synchronization transformations.

For every matched event pair the synchronized camera time must equal
the reference time:

    alpha^c t^c + beta^c + r^c T_row^c = t^ref + r^ref T_row^ref

Stacking these equations for one or many cameras gives a linear system
in the drifts, shifts and row periods, solved with a pivoted QR
decomposition.
"""
from __future__ import division, print_function

import logging
from collections import OrderedDict, namedtuple

import numpy as np
import scipy.linalg as spla
from astropy.table import Table

from .detect import LEADING
from .exceptions import (AmbiguityError, DomainError, MatchingError,
                         NonPhysicalSolutionError, SingularityError,
                         ValidationError)
from .timebase import SyncParams, apply_sync, check_drift, drift_lines_per_second

__all__ = ['ROW_PERIODS_KNOWN', 'ROW_PERIODS_FREE', 'TimedEvent',
           'MatchedPair', 'MatchedEventSet', 'SyncSolution', 'LinearSystem',
           'attach_timestamps', 'count_offset_inliers',
           'estimate_coarse_offset', 'match_events', 'design_system',
           'solve_pairwise', 'solve_joint', 'residual_report',
           'REPORT_COLUMNS']

logger = logging.getLogger(__name__)

ROW_PERIODS_KNOWN = 'row_periods_known'
ROW_PERIODS_FREE = 'row_periods_free'

# relative to the largest diagonal entry of R
RANK_TOLERANCE = 1e-10

REPORT_COLUMNS = ['camera', 'frame_c', 'row_c', 't_c_ms', 'frame_ref',
                  'row_ref', 't_ref_ms', 'residual_ms']


class TimedEvent(namedtuple('TimedEvent', ['frame', 'row', 'frame_time', 'time'])):
    """
    Event with its frame timestamp and an approximate absolute time
    (frame_time + row * approximate row period), both in camera ms.
    """
    __slots__ = ()


MatchedPair = namedtuple('MatchedPair', ['frame_c', 'row_c', 't_c',
                                         'frame_ref', 'row_ref', 't_ref'])


def attach_timestamps(events, track, t_row=0.0):
    """
    Look up frame timestamps of leading-edge events.

    Parameters
    ----------
    events : sequence of EventObservation
    track : TimestampTrack
        Timestamps of the camera the events were detected in.
    t_row : float, optional
        Approximate row period in ms used for the `time` field.

    Returns
    -------
    timed : list of TimedEvent
    """
    ms = track.to_ms()
    timed = []
    for e in events:
        if e.polarity != LEADING:
            continue
        if not 0 <= e.frame < len(ms):
            raise DomainError('camera {}: event frame {} outside track of {} frames'.format(
                track.camera_id, e.frame, len(ms)))
        t_f = float(ms[e.frame])
        timed.append(TimedEvent(e.frame, e.row, t_f, t_f + e.row * t_row))
    return timed


def _as_times(events):
    return np.array([getattr(e, 'time', e) for e in events], dtype=np.float64)


def _inlier_counts(times_c, times_ref, offsets, tolerance):
    close = np.abs(times_c[None, :, None] + offsets[:, None, None]
                   - times_ref[None, None, :]) <= tolerance
    return np.minimum(close.any(axis=2).sum(axis=1), close.any(axis=1).sum(axis=1))


def count_offset_inliers(times_c, times_ref, offset, tolerance):
    """
    Number of events agreeing within `tolerance` after shifting camera
    times by `offset`, counted one-to-one on the smaller side.
    """
    return int(_inlier_counts(_as_times(times_c), _as_times(times_ref),
                              np.array([offset], dtype=np.float64), tolerance)[0])


def estimate_coarse_offset(events_c, events_ref, nominal_frame_duration,
                           chunk=256):
    """
    Whole-frame alignment of two event sequences by shift voting.

    Every pairwise difference t_ref - t_c is a candidate shift; the one
    with most events agreeing within half a frame wins, ties going to the
    smallest absolute shift.

    Parameters
    ----------
    events_c, events_ref : sequence of TimedEvent or float
        Event times in ms of the camera and of the reference.
    nominal_frame_duration : float
        In ms.

    Returns
    -------
    offset : float
        Shift such that t_c + offset ~ t_ref.
    """
    times_c, times_ref = _as_times(events_c), _as_times(events_ref)
    if len(times_c) == 0 or len(times_ref) == 0:
        raise DomainError('coarse offset needs events in both cameras')
    if not nominal_frame_duration > 0:
        raise DomainError('nominal_frame_duration must be positive')
    tolerance = 0.5 * nominal_frame_duration

    candidates = np.unique((times_ref[None, :] - times_c[:, None]).ravel())
    counts = np.concatenate([
        _inlier_counts(times_c, times_ref, candidates[i:i + chunk], tolerance)
        for i in range(0, len(candidates), chunk)])
    best = np.lexsort((np.abs(candidates), -counts))[0]
    if counts[best] < 2:
        raise AmbiguityError(
            'no shift aligns at least two events (best {}); '
            'give a manual offset instead'.format(counts[best]))
    logger.info('coarse offset %.3f ms with %d of %d/%d events agreeing',
                candidates[best], counts[best], len(times_c), len(times_ref))
    return float(candidates[best])


class MatchedEventSet(object):
    """
    Corresponding events of a camera and the reference camera.

    Parameters
    ----------
    camera_id, reference_id : str
    pairs : sequence of MatchedPair or 6-tuples
        (frame_c, row_c, t_c, frame_ref, row_ref, t_ref), t_* being
        frame timestamps in ms.
    unmatched_camera, unmatched_reference : sequence, optional
        Events left over by the matching.
    """

    def __init__(self, camera_id, reference_id, pairs, unmatched_camera=(),
                 unmatched_reference=()):
        self.camera_id = camera_id
        self.reference_id = reference_id
        self.pairs = [MatchedPair(*p) for p in pairs]
        self.unmatched_camera = list(unmatched_camera)
        self.unmatched_reference = list(unmatched_reference)
        for side in [('frame_c', 'row_c'), ('frame_ref', 'row_ref')]:
            keys = [(getattr(p, side[0]), getattr(p, side[1])) for p in self.pairs]
            if len(set(keys)) != len(keys):
                raise ValidationError('camera {}: an event appears in two pairs'.format(
                    camera_id))

    def __len__(self):
        return len(self.pairs)

    def __repr__(self):
        return 'MatchedEventSet({!r} -> {!r}, {} pairs)'.format(
            self.camera_id, self.reference_id, len(self))

    def column(self, name):
        return np.array([getattr(p, name) for p in self.pairs], dtype=np.float64)

    def swapped(self):
        """Same correspondences with camera and reference roles exchanged."""
        return MatchedEventSet(
            self.reference_id, self.camera_id,
            [(p.frame_ref, p.row_ref, p.t_ref, p.frame_c, p.row_c, p.t_c)
             for p in self.pairs],
            self.unmatched_reference, self.unmatched_camera)


def match_events(events_c, events_ref, coarse_offset, tolerance, camera_id='',
                 reference_id='', nominal_frame_duration=None):
    """
    Greedy nearest-neighbour matching of coarse-aligned events.

    Parameters
    ----------
    events_c, events_ref : sequence of TimedEvent
    coarse_offset : float
        Shift in ms added to camera times.
    tolerance : float
        Largest accepted |t_c + offset - t_ref| in ms.
    camera_id, reference_id : str, optional
    nominal_frame_duration : float, optional
        If given, tolerance may not exceed half of it.

    Returns
    -------
    matched : MatchedEventSet
    """
    if nominal_frame_duration is not None and tolerance > 0.5 * nominal_frame_duration:
        raise DomainError('tolerance {} ms exceeds half a frame ({} ms)'.format(
            tolerance, 0.5 * nominal_frame_duration))
    times_c, times_ref = _as_times(events_c), _as_times(events_ref)
    pairs = []
    used_c, used_ref = set(), set()
    if len(times_c) and len(times_ref):
        dist = np.abs(times_c[:, None] + coarse_offset - times_ref[None, :])
        ii, jj = np.nonzero(dist <= tolerance)
        for k in np.lexsort((jj, ii, dist[ii, jj])):
            i, j = ii[k], jj[k]
            if i in used_c or j in used_ref:
                continue
            used_c.add(i)
            used_ref.add(j)
            pairs.append((i, j))
    if not pairs:
        raise MatchingError(
            'camera {}: no events matched the reference within {} ms; '
            'review the detection threshold or the coarse offset'.format(
                camera_id, tolerance))

    pairs.sort(key=lambda ij: times_ref[ij[1]])
    matched = MatchedEventSet(
        camera_id, reference_id,
        [(events_c[i].frame, events_c[i].row, events_c[i].frame_time,
          events_ref[j].frame, events_ref[j].row, events_ref[j].frame_time)
         for i, j in pairs],
        [e for i, e in enumerate(events_c) if i not in used_c],
        [e for j, e in enumerate(events_ref) if j not in used_ref])
    logger.info('camera %s: %d pairs, %d/%d events unmatched', camera_id,
                len(matched), len(matched.unmatched_camera),
                len(matched.unmatched_reference))
    return matched


class LinearSystem(object):
    """
    Centered least-squares system for a group of matched event sets.

    Unknowns per camera are the drift excess alpha - 1, the centered
    shift and (unless known) the row period; the reference row period
    is shared. Camera timestamps are centered on their mid-range and
    reference timestamps on theirs, which leaves the solution unchanged
    but keeps the columns well scaled.
    """

    def __init__(self, matrix, rhs, unknowns, centers, ref_center, blocks,
                 reference_id, row_periods):
        self.matrix = matrix
        self.rhs = rhs
        self.unknowns = unknowns
        self.centers = centers
        self.ref_center = ref_center
        self.blocks = blocks
        self.reference_id = reference_id
        self.row_periods = row_periods

    @property
    def names(self):
        labels = {'drift': 'alpha', 'shift': 'beta', 't_row': 't_row'}
        return ['{}[{}]'.format(labels[kind], cam) for kind, cam in self.unknowns]

    def index(self, kind, camera_id):
        return self.unknowns.index((kind, camera_id))


def _mid_range(values):
    return 0.5 * (values.min() + values.max()) if len(values) else 0.0


def design_system(matched_sets, row_periods=None):
    """
    Assemble the stacked equations of several matched event sets.

    Parameters
    ----------
    matched_sets : sequence of MatchedEventSet
        All sharing one reference camera, one set per camera.
    row_periods : dict, optional
        Known row periods in ms by camera id (the reference included).
        Cameras not listed get their row period estimated.

    Returns
    -------
    system : LinearSystem
    """
    matched_sets = list(matched_sets)
    if not matched_sets:
        raise DomainError('no matched event sets to solve')
    row_periods = dict(row_periods or {})
    reference_id = matched_sets[0].reference_id
    camera_ids = [m.camera_id for m in matched_sets]
    if any(m.reference_id != reference_id for m in matched_sets):
        raise DomainError('matched sets refer to different reference cameras: {}'.format(
            sorted(set(m.reference_id for m in matched_sets))))
    if len(set(camera_ids)) != len(camera_ids):
        raise DomainError('camera appears in more than one matched set')
    if reference_id in camera_ids:
        raise DomainError('reference camera {} matched against itself'.format(
            reference_id))

    unknowns = []
    for cam in camera_ids:
        unknowns += [('drift', cam), ('shift', cam)]
        if cam not in row_periods:
            unknowns.append(('t_row', cam))
    if reference_id not in row_periods:
        unknowns.append(('t_row', reference_id))

    ref_center = _mid_range(np.concatenate([m.column('t_ref') for m in matched_sets]))
    n_eq = sum(len(m) for m in matched_sets)
    matrix = np.zeros((n_eq, len(unknowns)))
    rhs = np.zeros(n_eq)
    centers, blocks = OrderedDict(), OrderedDict()
    start = 0
    for m in matched_sets:
        cam = m.camera_id
        rows = slice(start, start + len(m))
        blocks[cam] = rows
        start += len(m)
        t_c, t_ref = m.column('t_c'), m.column('t_ref')
        r_c, r_ref = m.column('row_c'), m.column('row_ref')
        centers[cam] = _mid_range(t_c)
        tc = t_c - centers[cam]
        b = (t_ref - ref_center) - tc
        matrix[rows, unknowns.index(('drift', cam))] = tc
        matrix[rows, unknowns.index(('shift', cam))] = 1.0
        if cam in row_periods:
            b = b - r_c * row_periods[cam]
        else:
            matrix[rows, unknowns.index(('t_row', cam))] = r_c
        if reference_id in row_periods:
            b = b + r_ref * row_periods[reference_id]
        else:
            matrix[rows, unknowns.index(('t_row', reference_id))] = -r_ref
        rhs[rows] = b
    return LinearSystem(matrix, rhs, unknowns, centers, ref_center, blocks,
                        reference_id, row_periods)


def _least_squares(system):
    """Column-equilibrated, pivoted QR solve with a rank check."""
    matrix, rhs = system.matrix, system.rhs
    n_eq, n_unk = matrix.shape
    if n_eq < n_unk:
        raise SingularityError(
            'under-determined system: {} equations for {} unknowns'.format(
                n_eq, n_unk), system.names)
    scale = np.linalg.norm(matrix, axis=0)
    zero = scale == 0
    if zero.any():
        raise SingularityError('degenerate event configuration, e.g. all events '
                               'in one frame', [n for n, z in zip(system.names, zero) if z])
    q, r, piv = spla.qr(matrix / scale, mode='economic', pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > RANK_TOLERANCE * diag[0]))
    if rank < n_unk:
        raise SingularityError('rank-deficient system ({} of {})'.format(rank, n_unk),
                               [system.names[k] for k in piv[rank:]])
    z = spla.solve_triangular(r, q.T.dot(rhs))
    x = np.empty(n_unk)
    x[piv] = z
    return x / scale


class SyncSolution(object):
    """
    Synchronization transformations of all cameras to a reference camera.

    Parameters
    ----------
    reference_id : str
    t_row_ref : float
        Reference row period in ms.
    params : dict
        SyncParams by camera id.
    residuals : dict, optional
        Signed per-event residuals in ms by camera id.
    pair_t_row_ref : dict, optional
        Reference row period fitted by each camera's own pair, by camera
        id. Set by pairwise solves; `t_row_ref` is then their mean.
    """

    def __init__(self, reference_id, t_row_ref, params, residuals=None,
                 pair_t_row_ref=None):
        self.reference_id = reference_id
        self.t_row_ref = float(t_row_ref)
        self.params = OrderedDict(params)
        self.residuals = OrderedDict(
            (cam, np.asarray(res, dtype=np.float64))
            for cam, res in (residuals or {}).items())
        self.pair_t_row_ref = OrderedDict(
            (cam, float(t)) for cam, t in (pair_t_row_ref or {}).items())

    @property
    def camera_ids(self):
        return list(self.params.keys())

    @property
    def all_residuals(self):
        if not self.residuals:
            return np.zeros(0)
        return np.concatenate(list(self.residuals.values()))

    @property
    def std_error(self):
        res = self.all_residuals
        return float(np.std(res)) if len(res) else 0.0

    def camera_std(self):
        return OrderedDict((cam, float(np.std(res)) if len(res) else 0.0)
                           for cam, res in self.residuals.items())

    def drift_lines_per_second(self, camera_id):
        p = self.params[camera_id]
        return drift_lines_per_second(p.alpha, p.t_row)

    def reference_row_period(self, pair=None):
        """Reference row period, as fitted with camera `pair` if given."""
        if pair is None:
            return self.t_row_ref
        return self.pair_t_row_ref.get(pair, self.t_row_ref)

    def apply(self, camera_id, frame_timestamp, row, pair=None):
        """
        Reference time of a (frame timestamp, row) of any camera; the
        reference camera itself maps through its row period, the one
        fitted together with camera `pair` when given.
        """
        if camera_id == self.reference_id:
            if np.any(np.asarray(row) < 0):
                raise DomainError('row must be nonnegative')
            if pair is not None and pair not in self.params:
                raise DomainError('unknown camera {!r}'.format(pair))
            return frame_timestamp + row * self.reference_row_period(pair)
        if camera_id not in self.params:
            raise DomainError('unknown camera {!r}'.format(camera_id))
        return apply_sync(self.params[camera_id], frame_timestamp, row)

    def to_dict(self):
        stds = self.camera_std()
        cameras = OrderedDict()
        for cam, p in self.params.items():
            cameras[cam] = OrderedDict([
                ('alpha', p.alpha), ('beta_ms', p.beta), ('t_row_ms', p.t_row),
                ('drift_lines_per_s', self.drift_lines_per_second(cam)),
                ('std_error_ms', stds.get(cam, 0.0)),
                ('residuals_ms', self.residuals.get(cam, np.zeros(0)).tolist())])
            if cam in self.pair_t_row_ref:
                cameras[cam]['t_row_ref_ms'] = self.pair_t_row_ref[cam]
        return OrderedDict([
            ('reference', OrderedDict([('camera_id', self.reference_id),
                                       ('t_row_ms', self.t_row_ref)])),
            ('cameras', cameras),
            ('residuals_ms', self.all_residuals.tolist()),
            ('std_error_ms', self.std_error)])

    @classmethod
    def from_dict(cls, d):
        try:
            params = OrderedDict(
                (cam, SyncParams(c['alpha'], c['beta_ms'], c['t_row_ms']))
                for cam, c in d['cameras'].items())
            residuals = OrderedDict(
                (cam, c.get('residuals_ms', [])) for cam, c in d['cameras'].items())
            pair_t_row_ref = OrderedDict(
                (cam, c['t_row_ref_ms']) for cam, c in d['cameras'].items()
                if 't_row_ref_ms' in c)
            return cls(d['reference']['camera_id'], d['reference']['t_row_ms'],
                       params, residuals, pair_t_row_ref)
        except (KeyError, TypeError) as exc:
            raise ValidationError('malformed solution: missing {}'.format(exc))


def _solve_blocks(matched_sets, row_periods):
    system = design_system(matched_sets, row_periods)
    x = _least_squares(system)
    ref = system.reference_id

    def t_row_of(cam):
        if cam in system.row_periods:
            return system.row_periods[cam]
        return x[system.index('t_row', cam)]

    t_row_ref = t_row_of(ref)
    if not t_row_ref > 0:
        raise NonPhysicalSolutionError(
            'reference row period estimated as {:.6g} ms'.format(t_row_ref))
    params = OrderedDict()
    for cam, center in system.centers.items():
        alpha = 1.0 + x[system.index('drift', cam)]
        beta = x[system.index('shift', cam)] - alpha * center + system.ref_center
        t_row = t_row_of(cam)
        if not t_row > 0:
            raise NonPhysicalSolutionError(
                'camera {}: row period estimated as {:.6g} ms'.format(cam, t_row))
        check_drift(alpha, cam)
        params[cam] = SyncParams(alpha, beta, t_row)

    solution = SyncSolution(ref, t_row_ref, params)
    for m in matched_sets:
        solution.residuals[m.camera_id] = _pair_residuals(solution, m)
    logger.info('solved %d cameras on %d equations, std error %.4f ms',
                len(params), system.matrix.shape[0], solution.std_error)
    return solution


def _pair_residuals(solution, matched):
    return (solution.apply(matched.camera_id, matched.column('t_c'),
                           matched.column('row_c'))
            - solution.apply(solution.reference_id, matched.column('t_ref'),
                             matched.column('row_ref'), pair=matched.camera_id))


def solve_pairwise(matched, mode=ROW_PERIODS_FREE, t_row=None, t_row_ref=None):
    """
    Least-squares transformation of one camera to the reference.

    Parameters
    ----------
    matched : MatchedEventSet
    mode : str, optional
        ROW_PERIODS_FREE estimates both row periods (4 unknowns);
        ROW_PERIODS_KNOWN takes them from `t_row` and `t_row_ref`
        (2 unknowns).
    t_row, t_row_ref : float, optional
        Known row periods in ms of the camera and of the reference.

    Returns
    -------
    solution : SyncSolution
    """
    if mode == ROW_PERIODS_KNOWN:
        if t_row is None or t_row_ref is None:
            raise DomainError('row_periods_known mode needs t_row and t_row_ref')
        row_periods = {matched.camera_id: t_row, matched.reference_id: t_row_ref}
    elif mode == ROW_PERIODS_FREE:
        row_periods = {}
    else:
        raise DomainError('unknown solve mode {!r}'.format(mode))
    return _solve_blocks([matched], row_periods)


def solve_joint(all_matched, row_periods=None):
    """
    One least-squares system for all cameras with a shared reference row
    period.

    Parameters
    ----------
    all_matched : sequence of MatchedEventSet
        One set per non-reference camera, all against the same reference.
    row_periods : dict, optional
        Known row periods by camera id; the others are estimated.

    Returns
    -------
    solution : SyncSolution
        With per-camera residuals.
    """
    return _solve_blocks(list(all_matched), row_periods)


def residual_report(solution, matched_sets):
    """
    Per-event residual table and per-camera standard deviations.

    Parameters
    ----------
    solution : SyncSolution
    matched_sets : sequence of MatchedEventSet

    Returns
    -------
    table : astropy.table.Table
        Columns REPORT_COLUMNS, residual = s^c(f, r) - t^ref(f_ref, r_ref).
    stds : OrderedDict
        Residual standard deviation in ms by camera id.
    """
    rows, stds = [], OrderedDict()
    for m in matched_sets:
        res = _pair_residuals(solution, m) if len(m) else np.zeros(0)
        stds[m.camera_id] = float(np.std(res)) if len(res) else 0.0
        for p, r in zip(m.pairs, res):
            rows.append((m.camera_id, p.frame_c, p.row_c, p.t_c, p.frame_ref,
                         p.row_ref, p.t_ref, r))
    if rows:
        table = Table(rows=rows, names=REPORT_COLUMNS)
    else:
        table = Table(names=REPORT_COLUMNS,
                      dtype=['U32', 'i8', 'f8', 'f8', 'i8', 'f8', 'f8', 'f8'])
    return table, stds

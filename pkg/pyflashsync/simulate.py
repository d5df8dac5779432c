"""
Synthetic multi-camera rolling-shutter captures with ground truth.

World time is the reference camera clock. A camera with drift alpha and
shift beta sees world time T at local time t = (T - beta) / alpha; its
frames start every 1000/fps local ms and row r of a frame starts at
t_f + (R0 + r) * T_frame / R.
"""
from __future__ import division, print_function

import logging
from collections import OrderedDict, namedtuple

import numpy as np

from .detect import LEADING, DiffProfile, EventObservation, RowProfile
from .exceptions import DomainError
from .ingest import RTP_TIMESCALE, TimestampTrack
from .syncsolve import MatchedEventSet, TimedEvent
from .timebase import SensorGeometry, SyncParams, ms_to_ticks, row_period

__all__ = ['SimulatedCameraSpec', 'FlashSchedule', 'GroundTruth',
           'SimulatedEvent', 'SimulatedCapture', 'simulate_capture',
           'synth_flash_profile', 'render_row_profiles',
           'random_flash_schedule', 'matched_ground_truth',
           'default_scenario']

logger = logging.getLogger(__name__)


class SimulatedCameraSpec(namedtuple('SimulatedCameraSpec',
                                     ['camera_id', 'fps', 'geometry',
                                      'true_alpha', 'true_beta',
                                      'drop_probability', 'row_noise_sigma',
                                      'profile_noise_sigma', 'exposure',
                                      'flash_visibility', 'start_time'])):
    """
    Parameters of one simulated camera.

    Parameters
    ----------
    camera_id : str
    fps : float
        Nominal frame rate of the local clock.
    geometry : SensorGeometry
    true_alpha, true_beta : float
        Clock drift and shift (ms) mapping local time to world time.
    drop_probability : float, optional
        Probability a frame is dropped, in [0, 1). Frame 0 is always kept.
    row_noise_sigma : float, optional
        Gaussian noise in rows added to event rows.
    profile_noise_sigma : float, optional
        Gaussian noise added to rendered row profiles.
    exposure : float, optional
        Row exposure time in ms.
    flash_visibility : float, optional
        Probability that the camera sees a given flash.
    start_time : float, optional
        Local time of the first frame; defaults to the local time of
        world time 0.
    """
    __slots__ = ()

    def __new__(cls, camera_id, fps, geometry, true_alpha=1.0, true_beta=0.0,
                drop_probability=0.0, row_noise_sigma=0.0,
                profile_noise_sigma=0.0, exposure=0.0, flash_visibility=1.0,
                start_time=None):
        if not fps > 0:
            raise DomainError('fps must be positive, got {!r}'.format(fps))
        if not 0 <= drop_probability < 1:
            raise DomainError('drop_probability must be in [0, 1)')
        if not 0 <= flash_visibility <= 1:
            raise DomainError('flash_visibility must be in [0, 1]')
        if not true_alpha > 0:
            raise DomainError('true_alpha must be positive')
        if row_noise_sigma < 0 or profile_noise_sigma < 0 or exposure < 0:
            raise DomainError('noise levels and exposure must be nonnegative')
        if isinstance(geometry, dict):
            geometry = SensorGeometry(**geometry)
        elif not isinstance(geometry, SensorGeometry):
            geometry = SensorGeometry(*geometry)
        return super(SimulatedCameraSpec, cls).__new__(
            cls, camera_id, float(fps), geometry, float(true_alpha),
            float(true_beta), float(drop_probability), float(row_noise_sigma),
            float(profile_noise_sigma), float(exposure),
            float(flash_visibility), start_time)

    @property
    def frame_duration(self):
        return 1000.0 / self.fps

    @property
    def local_row_period(self):
        return row_period(self.geometry, self.frame_duration)

    def is_reference(self):
        return self.true_alpha == 1.0 and self.true_beta == 0.0


class FlashSchedule(object):
    """
    Flash times in world time and the flash light curve.

    Parameters
    ----------
    times : array-like
        Flash times in ms.
    duration : float, optional
        Flash duration in ms; light is cut off after it.
    amplitude : float or array-like, optional
        Peak intensity, scalar or one per flash.
    decay_constant : float, optional
        Exponential decay constant in ms.
    """

    def __init__(self, times, duration=2.0, amplitude=120.0, decay_constant=0.3):
        self.times = np.sort(np.asarray(times, dtype=np.float64))
        if not duration > 0 or not decay_constant > 0:
            raise DomainError('flash duration and decay constant must be positive')
        amplitude = np.asarray(amplitude, dtype=np.float64)
        if np.any(amplitude <= 0):
            raise DomainError('flash amplitude must be positive')
        if amplitude.ndim and len(amplitude) != len(self.times):
            raise DomainError('need one amplitude per flash')
        self.duration = float(duration)
        self.amplitude = amplitude
        self.decay_constant = float(decay_constant)

    def __len__(self):
        return len(self.times)

    @property
    def amplitudes(self):
        return np.broadcast_to(self.amplitude, self.times.shape).astype(np.float64)

    def validate_for(self, specs):
        for spec in specs:
            if not self.duration < spec.frame_duration:
                raise DomainError(
                    'flash duration {} ms not shorter than the frame of camera {} '
                    '({} ms)'.format(self.duration, spec.camera_id, spec.frame_duration))


class GroundTruth(namedtuple('GroundTruth', ['camera_id', 'alpha', 'beta',
                                             't_row', 'geometry'])):
    """
    True clock parameters of a simulated camera; `t_row` is the local
    row period.
    """
    __slots__ = ()

    def solver_params(self, reference):
        """
        The parameters the solver estimates against `reference`: hidden
        row offsets of both cameras end up in beta and the row period is
        expressed in reference time.
        """
        return SyncParams(
            self.alpha,
            self.beta + self.alpha * self.geometry.rows_before * self.t_row
            - reference.geometry.rows_before * reference.t_row,
            self.alpha * self.t_row)

    def to_dict(self):
        return OrderedDict([('alpha', self.alpha), ('beta_ms', self.beta),
                            ('t_row_ms', self.t_row),
                            ('geometry', list(self.geometry))])


SimulatedEvent = namedtuple('SimulatedEvent', ['flash_index', 'frame', 'row',
                                               'row_exact', 'world_time',
                                               'boundary'])


class SimulatedCapture(object):
    """
    One camera of a simulation: timestamp track, flash records and the
    ground truth.
    """

    def __init__(self, spec, track, records, truth, dropped, magnitudes):
        self.spec = spec
        self.track = track
        self.records = list(records)
        self.truth = truth
        self.dropped = np.asarray(dropped, dtype=np.int64)
        self._magnitudes = magnitudes

    @property
    def camera_id(self):
        return self.spec.camera_id

    def _observations(self, boundary):
        return [EventObservation(self.camera_id, rec.frame, rec.row,
                                 float(self._magnitudes[rec.flash_index]), LEADING)
                for rec in self.records if rec.boundary == boundary]

    @property
    def events(self):
        """Ground-truth events that do not cross a frame boundary."""
        return self._observations(False)

    @property
    def boundary_events(self):
        return self._observations(True)

    def timed_events(self, include_boundary=False):
        ms = self.track.to_ms()
        t_row = self.spec.local_row_period
        return OrderedDict(
            (rec.flash_index, TimedEvent(rec.frame, rec.row, float(ms[rec.frame]),
                                         float(ms[rec.frame]) + rec.row * t_row))
            for rec in self.records if include_boundary or not rec.boundary)


def _capture_one(spec, schedule, total_duration, rng, quantize):
    frame_duration = spec.frame_duration
    start = spec.start_time
    if start is None:
        start = -spec.true_beta / spec.true_alpha
    n_frames = int(np.ceil(total_duration / spec.true_alpha / frame_duration)) + 1
    ticks = ms_to_ticks(start + np.arange(n_frames) * frame_duration, RTP_TIMESCALE)
    keep = rng.random(n_frames) >= spec.drop_probability
    keep[0] = True
    track = TimestampTrack(spec.camera_id, RTP_TIMESCALE, ticks[keep],
                           nominal_frame_duration=frame_duration)
    frame_ms = track.to_ms()
    truth = GroundTruth(spec.camera_id, spec.true_alpha, spec.true_beta,
                        spec.local_row_period, spec.geometry)

    visible = rng.random(len(schedule)) < spec.flash_visibility
    noise = rng.normal(0.0, spec.row_noise_sigma, len(schedule)) \
        if spec.row_noise_sigma > 0 else np.zeros(len(schedule))
    last_row = spec.geometry.rows_active - 1

    records = []
    for k, world in enumerate(schedule.times):
        if not visible[k]:
            continue
        local = (world - spec.true_beta) / spec.true_alpha
        idx = int(np.searchsorted(frame_ms, local, side='right')) - 1
        if idx < 0 or local >= frame_ms[idx] + frame_duration:
            logger.warning('camera %s: flash %d at %.3f ms outside the capture '
                           'or in a dropped frame, skipped', spec.camera_id, k, world)
            continue
        row_exact = (local - frame_ms[idx]) / truth.t_row - spec.geometry.rows_before
        row = float(np.rint(row_exact)) if quantize else float(row_exact)
        boundary = not 0 < row < last_row
        observed = row + noise[k]
        if quantize:
            observed = float(np.rint(observed))
        observed = float(np.clip(observed, 0, last_row))
        records.append(SimulatedEvent(k, idx, observed, float(row_exact),
                                      float(world), boundary))
    n_boundary = sum(r.boundary for r in records)
    logger.info('camera %s: %d frames (%d dropped), %d flashes captured, '
                '%d crossing a frame boundary', spec.camera_id, len(track),
                n_frames - len(track), len(records), n_boundary)
    return SimulatedCapture(spec, track, records, truth,
                            np.nonzero(~keep)[0], schedule.amplitudes)


def simulate_capture(specs, schedule, total_duration, seed=None, quantize=False):
    """
    Simulate the capture of a flash schedule by several cameras.

    Parameters
    ----------
    specs : sequence of SimulatedCameraSpec
        At least one with alpha = 1, beta = 0.
    schedule : FlashSchedule
    total_duration : float
        Capture duration in world ms, starting at world time 0.
    seed : int, optional
        Seed of the numpy Generator.
    quantize : bool, optional
        Round event rows to integers, as a detector would report them.
        Exact fractional rows are kept otherwise.

    Returns
    -------
    captures : OrderedDict
        SimulatedCapture by camera id.
    """
    specs = list(specs)
    if not any(s.is_reference() for s in specs):
        raise DomainError('no camera with alpha=1, beta=0 to act as reference')
    ids = [s.camera_id for s in specs]
    if len(set(ids)) != len(ids):
        raise DomainError('camera ids must be unique')
    if not total_duration > 0:
        raise DomainError('total_duration must be positive')
    schedule.validate_for(specs)
    rng = np.random.default_rng(seed)
    return OrderedDict((s.camera_id, _capture_one(s, schedule, total_duration,
                                                  rng, quantize))
                       for s in specs)


def _flash_response(t0, row_starts, exposure, amplitude, decay_constant,
                    flash_duration=None):
    """
    Light integrated by each row, normalized so a row catching the whole
    flash start sees `amplitude`. Row exposure windows are centered on
    the row start times.
    """
    end = np.inf if flash_duration is None else t0 + flash_duration
    if exposure == 0:
        lit = (row_starts >= t0) & (row_starts < end)
        return np.where(lit, amplitude * np.exp(-(row_starts - t0) / decay_constant), 0.0)
    lo = np.maximum(row_starts - 0.5 * exposure, t0)
    hi = np.minimum(row_starts + 0.5 * exposure, end)
    lit = hi > lo
    lo, hi = np.where(lit, lo, t0), np.where(lit, hi, t0)
    captured = np.exp(-(lo - t0) / decay_constant) * -np.expm1(-(hi - lo) / decay_constant)
    window = exposure if flash_duration is None else min(exposure, flash_duration)
    return np.where(lit, amplitude * captured / -np.expm1(-window / decay_constant), 0.0)


def synth_flash_profile(flash_time_in_frame, exposure, geometry, frame_duration,
                        amplitude, decay_constant, flash_duration=None, frame=0):
    """
    Difference profile of a frame in which a flash starts.

    Parameters
    ----------
    flash_time_in_frame : float
        Flash start in ms after the frame timestamp.
    exposure : float
        Row exposure in ms; 0 gives an ideal step.
    geometry : SensorGeometry
    frame_duration : float
        In ms.
    amplitude : float
        Peak difference intensity.
    decay_constant : float
        In ms.
    flash_duration : float, optional
        Light is cut off after it.
    frame : int, optional

    Returns
    -------
    diff : DiffProfile
        Linear onset ramp over rows whose exposure partially overlaps the
        flash start, exponential tail after it.
    """
    if not 0 <= flash_time_in_frame < frame_duration:
        raise DomainError('flash time {} outside frame [0, {})'.format(
            flash_time_in_frame, frame_duration))
    t_row = row_period(geometry, frame_duration)
    starts = (geometry.rows_before + np.arange(geometry.rows_active)) * t_row
    return DiffProfile(frame, _flash_response(flash_time_in_frame, starts, exposure,
                                              amplitude, decay_constant,
                                              flash_duration))


def render_row_profiles(capture, schedule, window=2, seed=None, background=None):
    """
    Row profiles of the frames around every captured flash.

    Parameters
    ----------
    capture : SimulatedCapture
    schedule : FlashSchedule
    window : int, optional
        Frames rendered before and after each flash frame.
    seed : int, optional
    background : ndarray, optional
        Static per-row scene intensity; a vertical gradient by default.

    Returns
    -------
    profiles : list of RowProfile
        Sparse, sorted by frame.
    """
    spec = capture.spec
    rows = spec.geometry.rows_active
    rng = np.random.default_rng(seed)
    if background is None:
        background = np.linspace(20.0, 60.0, rows)
    frame_ms = capture.track.to_ms()
    t_row = spec.local_row_period
    starts = (spec.geometry.rows_before + np.arange(rows)) * t_row
    amplitudes = schedule.amplitudes

    frames = set()
    for rec in capture.records:
        frames.update(range(max(0, rec.frame - window),
                            min(len(frame_ms), rec.frame + window + 1)))
    local = [((rec.world_time - spec.true_beta) / spec.true_alpha, amplitudes[rec.flash_index])
             for rec in capture.records]

    profiles = []
    for f in sorted(frames):
        values = np.array(background, dtype=np.float64)
        for t_flash, amp in local:
            t0 = t_flash - frame_ms[f]
            if -spec.frame_duration - spec.exposure < t0 < spec.frame_duration:
                values += _flash_response(t0, starts, spec.exposure, amp,
                                          schedule.decay_constant, schedule.duration)
        if spec.profile_noise_sigma > 0:
            values += rng.normal(0.0, spec.profile_noise_sigma, rows)
        profiles.append(RowProfile(f, values))
    return profiles


def random_flash_schedule(n_flashes, total_duration, seed=None, min_separation=1000.0,
                          margin=1000.0, max_tries=1000, **flash_kws):
    """
    Uniformly random flash times at least `min_separation` ms apart and
    `margin` ms away from the capture ends.
    """
    if n_flashes and (n_flashes - 1) * min_separation > total_duration - 2 * margin:
        raise DomainError('{} flashes do not fit {} ms with {} ms separation'.format(
            n_flashes, total_duration, min_separation))
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        times = np.sort(rng.uniform(margin, total_duration - margin, n_flashes))
        if n_flashes < 2 or np.diff(times).min() >= min_separation:
            return FlashSchedule(times, **flash_kws)
    raise DomainError('could not place {} flashes in {} tries'.format(
        n_flashes, max_tries))


def matched_ground_truth(captures, reference_id, include_boundary=False):
    """
    MatchedEventSets of every camera against the reference, paired by
    flash index.

    Returns
    -------
    matched : list of MatchedEventSet
    """
    if reference_id not in captures:
        raise DomainError('unknown reference camera {!r}'.format(reference_id))
    ref = captures[reference_id].timed_events(include_boundary)
    matched = []
    for cam, capture in captures.items():
        if cam == reference_id:
            continue
        events = capture.timed_events(include_boundary)
        common = [k for k in events if k in ref]
        matched.append(MatchedEventSet(
            cam, reference_id,
            [(events[k].frame, events[k].row, events[k].frame_time,
              ref[k].frame, ref[k].row, ref[k].frame_time) for k in common],
            [e for k, e in events.items() if k not in ref],
            [e for k, e in ref.items() if k not in events]))
    return matched


def default_scenario(fps=25.0, **overrides):
    """
    Four cameras with drifts, shifts and geometries of the magnitude met
    with consumer and industrial cameras recording one scene.

    Keyword arguments override fields of every camera spec.
    """
    cameras = [
        ('cam1', (20, 2160, 420), 1.0, 0.0),
        ('cam2', (20, 2160, 420), 1 + 8.39e-6, 6066.7),
        ('cam3', (20, 720, 260), 1 - 3.12e-6, -37500.2),
        ('cam4', (20, 2160, 420), 1 - 8.35e-6, -23858.7),
    ]
    return [SimulatedCameraSpec(**dict(dict(camera_id=cam, fps=fps,
                                            geometry=SensorGeometry(*geom),
                                            true_alpha=alpha, true_beta=beta),
                                       **overrides))
            for cam, geom, alpha, beta in cameras]

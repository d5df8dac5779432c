from __future__ import division, print_function

import logging
import os
from collections import OrderedDict
from multiprocessing.pool import ThreadPool

import numpy as np

from .configs import solve_config
from .core import (read_raw_frames, read_row_profiles, write_events,
                   write_solution, write_table, write_timestamps)
from .detect import compute_row_profiles, detect_camera_events
from .exceptions import ConfigError, DomainError, MatchingError
from .ingest import detect_dropped_frames, load_timestamp_track
from .syncsolve import (ROW_PERIODS_FREE, ROW_PERIODS_KNOWN, SyncSolution,
                        attach_timestamps, estimate_coarse_offset,
                        match_events, residual_report, solve_joint,
                        solve_pairwise)
from .timebase import SensorGeometry, row_period

__all__ = ['FlashSynchronizer']

logger = logging.getLogger(__name__)


class FlashSynchronizer(object):
    """
    Runs the synchronization pipeline on the cameras of a project.

    Parameters
    ----------
    config : ProjectConfig
    save_files : bool, optional
        If True, `run` writes timestamps, events, the solution and the
        matched-events table to the output directory.
    """

    def __init__(self, config, save_files=True):
        self.config = config
        self.save_files = save_files
        self.tracks = OrderedDict()
        self.gaps = OrderedDict()
        self.profiles = OrderedDict()
        self.diffs = OrderedDict()
        self.events = OrderedDict()
        self.geometries = OrderedDict()
        self.offsets = OrderedDict()
        self.matched = OrderedDict()
        self.solution = None
        self.report = None
        self.stds = None

    @property
    def reference(self):
        return self.config.reference

    def _map(self, func, items):
        items = list(items)
        if self.config.workers > 1 and len(items) > 1:
            with ThreadPool(min(self.config.workers, len(items))) as pool:
                return pool.map(func, items)
        return [func(i) for i in items]

    def extract_timestamps(self):
        """Load every camera's timestamp track and look for dropped frames."""
        def _one(cam):
            ts = cam.timestamps
            track = load_timestamp_track(ts['format'], ts['path'], cam.camera_id,
                                         ts.get('track_index'))
            gaps = detect_dropped_frames(track, cam.fps, self.config.matching['gap_slack'])
            return track, gaps

        for cam, (track, gaps) in zip(self.config.cameras,
                                      self._map(_one, self.config.cameras)):
            self.tracks[cam.camera_id] = track
            self.gaps[cam.camera_id] = gaps
            logger.info('camera %s: %d frames, %d dropped', cam.camera_id,
                        len(track), gaps.total_missing)
        return self.tracks

    def load_profiles(self, camera):
        if camera.profiles is not None:
            rows = camera.geometry.rows_active if camera.geometry else None
            return read_row_profiles(camera.profiles, rows)
        if camera.frames is not None:
            f = camera.frames
            frames = read_raw_frames(f['path'], f['height'], f['width'])
            return compute_row_profiles(frames, self.config.workers)
        raise ConfigError('camera {}: neither profiles nor frames given'.format(
            camera.camera_id))

    def _geometry(self, camera, profiles=None):
        if camera.geometry is not None:
            return camera.geometry
        if profiles:
            return SensorGeometry.active_only(len(profiles[0].values))
        return None

    def detect_events(self, threshold=None):
        """
        Detect flash events of every camera.

        Parameters
        ----------
        threshold : float or 'auto', optional
            Overrides the configured detection threshold.
        """
        opts = self.config.detection
        threshold = opts['threshold'] if threshold is None else threshold

        def _one(cam):
            profiles = self.load_profiles(cam)
            geometry = self._geometry(cam, profiles)
            if geometry is None:
                return profiles, [], [], None
            events, diffs = detect_camera_events(
                profiles, geometry, cam.camera_id, threshold, opts['margin'],
                opts['include_trailing'], opts['auto_k'])
            return profiles, events, diffs, geometry

        for cam, res in zip(self.config.cameras, self._map(_one, self.config.cameras)):
            cid = cam.camera_id
            self.profiles[cid], self.events[cid], self.diffs[cid], geometry = res
            if geometry is not None:
                self.geometries[cid] = geometry
        return self.events

    def set_events(self, events):
        """Use previously detected events (by camera id) instead of detecting."""
        missing = [c for c in self.config.camera_ids if c not in events]
        if missing:
            logger.warning('no events for cameras %s', ', '.join(missing))
        for cam in self.config.cameras:
            self.events[cam.camera_id] = list(events.get(cam.camera_id, []))
            if cam.geometry is not None:
                self.geometries[cam.camera_id] = cam.geometry

    def _frame_duration(self, camera_id):
        track = self.tracks.get(camera_id)
        if track is not None and track.infer_frame_duration() is not None:
            return track.nominal_frame_duration
        return 1000.0 / self.config.camera(camera_id).fps

    def approx_row_period(self, camera_id):
        cam = self.config.camera(camera_id)
        if cam.row_period_ms is not None:
            return cam.row_period_ms
        geometry = self.geometries.get(camera_id)
        if geometry is None:
            return 0.0
        return row_period(geometry, 1000.0 / cam.fps)

    def timed_events(self, camera_id):
        return attach_timestamps(self.events[camera_id], self.tracks[camera_id],
                                 self.approx_row_period(camera_id))

    def match_events(self, tolerance_ms=None, manual_offsets={}):
        """
        Coarse-align and match every camera's events against the reference.

        Parameters
        ----------
        tolerance_ms : float, optional
            Matching tolerance; half the shorter frame duration by default.
        manual_offsets : dict, optional
            Offsets in ms by camera id that replace the automatic coarse
            alignment.
        """
        if tolerance_ms is None:
            tolerance_ms = self.config.matching['tolerance_ms']
        ref = self.reference
        ref_events = self.timed_events(ref)
        others = [c for c in self.config.camera_ids if c != ref]

        def _one(cid):
            cam = self.config.camera(cid)
            events = self.timed_events(cid)
            if not events or not ref_events:
                raise MatchingError(
                    'camera {} ({} events) vs reference {} ({} events): nothing to '
                    'match; review the detection threshold'.format(
                        cid, len(events), ref, len(ref_events)))
            frame = max(self._frame_duration(cid), self._frame_duration(ref))
            if cid in manual_offsets:
                offset = manual_offsets[cid]
            elif cam.manual_offset_ms is not None:
                offset = cam.manual_offset_ms
            else:
                offset = estimate_coarse_offset(events, ref_events, frame)
            tol = tolerance_ms
            half = 0.5 * min(self._frame_duration(cid), self._frame_duration(ref))
            if tol is None:
                tol = half
            matched = match_events(events, ref_events, offset, tol, cid, ref, 2 * half)
            return offset, matched

        for cid, (offset, matched) in zip(others, self._map(_one, others)):
            self.offsets[cid] = offset
            self.matched[cid] = matched
            if matched.unmatched_camera or matched.unmatched_reference:
                logger.warning('camera %s: %d events without a partner, reference '
                               '%d', cid, len(matched.unmatched_camera),
                               len(matched.unmatched_reference))
        return self.matched

    def known_row_periods(self):
        return dict((c.camera_id, c.row_period_ms) for c in self.config.cameras
                    if c.row_period_ms is not None)

    def solve(self, mode=None):
        """
        Estimate the synchronization transformations.

        Parameters
        ----------
        mode : str, optional
            'joint' (one system, shared reference row period) or
            'pairwise' (one system per camera).
        """
        mode = solve_config({'mode': mode} if mode else self.config.solve)['mode']
        if not self.matched:
            raise MatchingError('nothing matched; run match_events first')
        row_periods = self.known_row_periods()
        if mode == 'joint':
            self.solution = solve_joint(list(self.matched.values()), row_periods)
        else:
            self.solution = self._solve_pairwise(row_periods)
        self.report, self.stds = residual_report(self.solution, self.matched.values())
        return self.solution

    def _solve_pairwise(self, row_periods):
        params, residuals, t_rows = OrderedDict(), OrderedDict(), OrderedDict()
        ref = self.reference
        for cid, matched in self.matched.items():
            if cid in row_periods and ref in row_periods:
                sol = solve_pairwise(matched, ROW_PERIODS_KNOWN, row_periods[cid],
                                     row_periods[ref])
            else:
                sol = solve_pairwise(matched, ROW_PERIODS_FREE)
            params[cid] = sol.params[cid]
            residuals[cid] = sol.residuals[cid]
            t_rows[cid] = sol.t_row_ref
        values = list(t_rows.values())
        if np.ptp(values) > 0:
            logger.info('pairwise reference row periods range %.6g-%.6g ms',
                        min(values), max(values))
        return SyncSolution(ref, float(np.mean(values)), params, residuals, t_rows)

    def print_results(self):
        sol = self.solution
        if sol is None:
            raise DomainError('no solution yet')
        print('\nReference  {}'.format(sol.reference_id))
        print('---------------------')
        print('t_row      {:.6f} ms'.format(sol.t_row_ref))
        stds = sol.camera_std()
        for cid, p in sol.params.items():
            print('\nCamera     {}'.format(cid))
            print('---------------------')
            print('1-alpha    {:.3e}'.format(1.0 - p.alpha))
            print('beta       {:.4f} ms'.format(p.beta))
            print('t_row      {:.6f} ms'.format(p.t_row))
            if cid in sol.pair_t_row_ref:
                print('t_row ref  {:.6f} ms'.format(sol.pair_t_row_ref[cid]))
            print('drift      {:.3f} lines/s'.format(sol.drift_lines_per_second(cid)))
            print('pairs      {}'.format(len(self.matched.get(cid, []))))
            print('std        {:.4f} ms'.format(stds.get(cid, 0.0)))
        print('\nstd error  {:.4f} ms'.format(sol.std_error))

    def write_results(self, outdir='.'):
        """Write the solution JSON and the matched-events table."""
        write_solution(os.path.join(outdir, 'solution.json'), self.solution)
        write_table(os.path.join(outdir, 'matched_events.csv'), self.report)

    def run(self, outdir=None, threshold=None, tolerance_ms=None,
            manual_offsets={}, mode=None, will_viz=False, save_fn=None, show=False):
        """
        Extract timestamps, detect and match events, solve.

        Returns
        -------
        solution : SyncSolution
        """
        outdir = self.config.output_dir if outdir is None else outdir
        self.extract_timestamps()
        self.detect_events(threshold)
        self.match_events(tolerance_ms, manual_offsets)
        self.solve(mode)
        if self.save_files:
            if not os.path.isdir(outdir):
                os.makedirs(outdir)
            for cid, track in self.tracks.items():
                write_timestamps(os.path.join(outdir, cid + '_timestamps.csv'), track)
            write_events(os.path.join(outdir, 'events.csv'),
                         [e for evs in self.events.values() for e in evs])
            self.write_results(outdir)
        if will_viz:
            self.viz_results(save_fn=save_fn, show=show)
        return self.solution

    def viz_results(self, subplots=None, show=True, save_fn=None, dpi=200, **kwargs):
        from .viz import plot_sync_summary
        times = OrderedDict(
            (cid, [e.time for e in self.timed_events(cid)]) for cid in self.events)
        return plot_sync_summary(times, self.report, subplots=subplots, show=show,
                                 save_fn=save_fn, dpi=dpi, **kwargs)

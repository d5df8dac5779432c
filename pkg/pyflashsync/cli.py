"""
Command-line frontend: pyflashsync {extract,detect,solve,apply,simulate,report}.
"""
from __future__ import division, print_function

import argparse
import json
import logging
import os
import sys

from .configs import load_project_config, parse_manual_offsets, simulation_config
from .core import (read_events, read_solution, write_events, write_table,
                   write_timestamps)
from .exceptions import ConfigError, DomainError, FlashSyncError
from .ingest import load_timestamp_csv
from .simulate import SimulatedCameraSpec
from .synchronizer import FlashSynchronizer
from .syncsolve import residual_report
from .tasks import simulate_dataset
from .viz import event_timeline_text

__all__ = ['main', 'build_parser', 'cmd_extract', 'cmd_detect', 'cmd_solve',
           'cmd_apply', 'cmd_simulate', 'cmd_report']

logger = logging.getLogger(__name__)


def _outdir(config, outdir):
    outdir = config.output_dir if outdir is None else outdir
    if not os.path.isdir(outdir):
        os.makedirs(outdir)
    return outdir


def cmd_extract(config, outdir=None):
    """Write <camera>_timestamps.csv for every camera of the config."""
    outdir = _outdir(config, outdir)
    sync = FlashSynchronizer(config)
    for cid, track in sync.extract_timestamps().items():
        write_timestamps(os.path.join(outdir, cid + '_timestamps.csv'), track)
    return sync


def cmd_detect(config, outdir=None, threshold=None):
    """Detect events of every camera into events.csv."""
    outdir = _outdir(config, outdir)
    sync = FlashSynchronizer(config)
    events = sync.detect_events(threshold)
    write_events(os.path.join(outdir, 'events.csv'),
                 [e for evs in events.values() for e in evs])
    return sync


def _prepared(config, events_fn, threshold):
    sync = FlashSynchronizer(config)
    sync.extract_timestamps()
    if events_fn is not None:
        sync.set_events(read_events(events_fn))
    else:
        sync.detect_events(threshold)
    return sync


def cmd_solve(config, events_fn=None, outdir=None, threshold=None,
              tolerance_ms=None, manual_offsets={}, mode=None):
    """Match and solve; writes solution.json and matched_events.csv."""
    outdir = _outdir(config, outdir)
    sync = _prepared(config, events_fn, threshold)
    sync.match_events(tolerance_ms, manual_offsets)
    sync.solve(mode)
    sync.write_results(outdir)
    return sync


def cmd_apply(solution_fn, camera_id, row, t_f=None, timestamps_fn=None,
              frame=None, pair=None):
    """
    Reference time of (frame, row) of a camera. The frame timestamp is
    given directly or looked up in a timestamp CSV.
    """
    solution = read_solution(solution_fn)
    if t_f is None:
        if timestamps_fn is None or frame is None:
            raise DomainError('give --t-f or both --timestamps and --frame')
        with open(timestamps_fn) as f:
            ms = load_timestamp_csv(f, camera_id).to_ms()
        if not 0 <= frame < len(ms):
            raise DomainError('frame {} outside the {} timestamps'.format(frame, len(ms)))
        t_f = float(ms[frame])
    return solution.apply(camera_id, t_f, row, pair)


def _scenario_from_file(fn):
    with open(fn) as f:
        d = json.load(f)
    cameras = d.get('cameras')
    specs = None
    if cameras:
        try:
            specs = [SimulatedCameraSpec(**c) for c in cameras]
        except TypeError as exc:
            raise ConfigError('{}: bad camera entry ({})'.format(fn, exc))
    return specs, d.get('simulation', {}), d.get('reference')


def cmd_simulate(outdir, seed=0, scenario_fn=None, sim_params={}):
    """Write a synthetic dataset, see tasks.simulate_dataset."""
    specs, params, reference = None, {}, None
    if scenario_fn is not None:
        specs, params, reference = _scenario_from_file(scenario_fn)
    params = dict(params, **sim_params)
    return simulate_dataset(outdir, seed, specs, simulation_config(params), reference)


def cmd_report(config, solution_fn, events_fn=None, outdir=None, threshold=None,
               tolerance_ms=None, manual_offsets={}, plot_fn=None, width=72):
    """
    Residuals of a stored solution: residuals.csv, per-camera std and an
    event timeline in reference time.

    Returns
    -------
    text : str
    """
    outdir = _outdir(config, outdir)
    solution = read_solution(solution_fn)
    if solution.reference_id != config.reference:
        config = config.with_reference(solution.reference_id)
    sync = _prepared(config, events_fn, threshold)
    matched = sync.match_events(tolerance_ms, manual_offsets)
    table, stds = residual_report(solution, matched.values())
    write_table(os.path.join(outdir, 'residuals.csv'), table)

    times = {}
    for cid in config.camera_ids:
        evs = sync.timed_events(cid)
        if cid != solution.reference_id and cid not in solution.params:
            continue
        times[cid] = [solution.apply(cid, e.frame_time, e.row) for e in evs]
    lines = ['camera      pairs    std [ms]']
    for cid, std in stds.items():
        lines.append('{:<10} {:>6} {:>11.4f}'.format(cid, len(matched[cid]), std))
    lines += ['', event_timeline_text(times, width)]
    if plot_fn is not None:
        from .viz import plot_sync_summary
        plot_sync_summary(times, table, show=False, save_fn=plot_fn)
    return '\n'.join(lines)


def _threshold(text):
    if text == 'auto':
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("threshold must be a number or 'auto'")


def build_parser():
    parser = argparse.ArgumentParser(
        prog='pyflashsync',
        description='Synchronize rolling-shutter cameras with flash events.')
    parser.add_argument('-v', '--verbose', action='count', default=0,
                        help='INFO with -v, DEBUG with -vv')
    sub = parser.add_subparsers(dest='command')
    sub.required = True

    def project(p):
        p.add_argument('config', help='JSON project config')
        p.add_argument('-o', '--outdir', default=None)
        p.add_argument('--workers', type=int, default=None)
        p.add_argument('--reference', default=None)

    def matching(p):
        p.add_argument('--events', default=None, help='events CSV; detect if omitted')
        p.add_argument('--threshold', type=_threshold, default=None)
        p.add_argument('--tolerance-ms', type=float, default=None)
        p.add_argument('--manual-offset', action='append', default=[],
                       metavar='CAMERA=MS')

    p = sub.add_parser('extract', help='frame timestamps to CSV')
    project(p)

    p = sub.add_parser('detect', help='detect flash events')
    project(p)
    p.add_argument('--threshold', type=_threshold, default=None)

    p = sub.add_parser('solve', help='match events and solve')
    project(p)
    matching(p)
    p.add_argument('--mode', choices=['joint', 'pairwise'], default=None)

    p = sub.add_parser('apply', help='map a camera (frame, row) to reference time')
    p.add_argument('solution')
    p.add_argument('--camera', required=True)
    p.add_argument('--row', type=float, required=True)
    p.add_argument('--t-f', type=float, default=None, help='frame timestamp in ms')
    p.add_argument('--timestamps', default=None, help='timestamp CSV of the camera')
    p.add_argument('--frame', type=int, default=None)
    p.add_argument('--pair', default=None,
                   help='for the reference camera: use the row period fitted '
                        'with this camera (pairwise solutions)')

    p = sub.add_parser('simulate', help='write a synthetic dataset')
    p.add_argument('outdir')
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--scenario', default=None, help='scenario JSON')
    p.add_argument('--n-flashes', type=int, default=None)
    p.add_argument('--duration-ms', type=float, default=None)
    p.add_argument('--drop-probability', type=float, default=None)
    p.add_argument('--row-noise', type=float, default=None)

    p = sub.add_parser('report', help='residuals and event timeline of a solution')
    project(p)
    matching(p)
    p.add_argument('--solution', required=True)
    p.add_argument('--plot', default=None, help='figure file name')
    return parser


def _load(args):
    config = load_project_config(args.config)
    if args.reference is not None:
        config = config.with_reference(args.reference)
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError('--workers must be >= 1')
        config.workers = args.workers
    return config


def _dispatch(args):
    if args.command == 'extract':
        cmd_extract(_load(args), args.outdir)
    elif args.command == 'detect':
        cmd_detect(_load(args), args.outdir, args.threshold)
    elif args.command == 'solve':
        sync = cmd_solve(_load(args), args.events, args.outdir, args.threshold,
                         args.tolerance_ms, parse_manual_offsets(args.manual_offset),
                         args.mode)
        logger.info('std error %.4f ms', sync.solution.std_error)
    elif args.command == 'apply':
        print('{:.6f}'.format(cmd_apply(args.solution, args.camera, args.row,
                                         args.t_f, args.timestamps, args.frame,
                                         args.pair)))
    elif args.command == 'simulate':
        overrides = {}
        for key, val in [('n_flashes', args.n_flashes),
                         ('total_duration', args.duration_ms),
                         ('drop_probability', args.drop_probability),
                         ('row_noise_sigma', args.row_noise)]:
            if val is not None:
                overrides[key] = val
        cmd_simulate(args.outdir, args.seed, args.scenario, overrides)
    elif args.command == 'report':
        print(cmd_report(_load(args), args.solution, args.events, args.outdir,
                         args.threshold, args.tolerance_ms,
                         parse_manual_offsets(args.manual_offset), args.plot))
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')
    try:
        return _dispatch(args)
    except FlashSyncError as exc:
        print('error: {}'.format(exc), file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print('error: {}'.format(exc), file=sys.stderr)
        return 2


if __name__ == '__main__':
    sys.exit(main())

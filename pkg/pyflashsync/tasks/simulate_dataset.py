""" Write a complete synthetic multi-camera dataset with ground truth."""
from __future__ import division, print_function

import logging
import os
from collections import OrderedDict

import numpy as np

from ..configs import simulation_config
from ..core import write_events, write_json, write_row_profiles, write_timestamps
from ..simulate import (default_scenario, random_flash_schedule,
                        render_row_profiles, simulate_capture)

__all__ = ['simulate_dataset']

logger = logging.getLogger(__name__)


def _amplitudes(amplitude, n_flashes, seed):
    if np.ndim(amplitude) == 0:
        return float(amplitude)
    lo, hi = amplitude
    return np.random.default_rng([seed, 1]).uniform(lo, hi, n_flashes)


def simulate_dataset(outdir='.', seed=0, scenario=None, sim_params={},
                     reference=None, quantize=True):
    """
    Simulate a flash schedule seen by several cameras and write every
    file the pipeline consumes.

    Parameters
    ----------
    outdir : string, optional
        Output directory, created if needed.
    seed : int, optional
        Seeds the schedule, the capture and the rendered profiles.
    scenario : list of SimulatedCameraSpec, optional
        Cameras; default_scenario() configured from `sim_params` if None.
    sim_params : dict, optional
        Parameters that differ from DEFAULT_SIMULATION.
    reference : string, optional
        Reference camera id; the first camera with alpha=1, beta=0 if None.
    quantize : bool, optional
        Round ground-truth event rows to integers.

    Returns
    -------
    captures : OrderedDict
        SimulatedCapture by camera id.

    Notes
    -----
    Files written: config.json, <cam>_timestamps.csv, <cam>_profiles.csv,
    ground_truth_events.csv and ground_truth.json.
    """
    sim = simulation_config(sim_params)
    if scenario is None:
        scenario = default_scenario(
            fps=sim['fps'], drop_probability=sim['drop_probability'],
            row_noise_sigma=sim['row_noise_sigma'],
            profile_noise_sigma=sim['profile_noise_sigma'],
            exposure=sim['exposure'], flash_visibility=sim['flash_visibility'])
    if reference is None:
        reference = [s.camera_id for s in scenario if s.is_reference()][0]

    schedule = random_flash_schedule(
        sim['n_flashes'], sim['total_duration'], seed=[seed, 0],
        min_separation=sim['min_separation'], duration=sim['flash_duration'],
        amplitude=_amplitudes(sim['amplitude'], sim['n_flashes'], seed),
        decay_constant=sim['decay_constant'])
    captures = simulate_capture(scenario, schedule, sim['total_duration'],
                                seed=[seed, 2], quantize=quantize)

    if not os.path.isdir(outdir):
        os.makedirs(outdir)

    cameras, truth, events = [], OrderedDict(), []
    for i, (cam, capture) in enumerate(captures.items()):
        ts_fn = '{}_timestamps.csv'.format(cam)
        prof_fn = '{}_profiles.csv'.format(cam)
        write_timestamps(os.path.join(outdir, ts_fn), capture.track)
        profiles = render_row_profiles(capture, schedule, sim['profile_window'],
                                       seed=[seed, 3, i])
        write_row_profiles(os.path.join(outdir, prof_fn), profiles)
        geom = capture.spec.geometry
        cameras.append(OrderedDict([
            ('camera_id', cam), ('fps', capture.spec.fps),
            ('timestamps', {'format': 'csv', 'path': ts_fn}),
            ('profiles', prof_fn),
            ('geometry', OrderedDict([('rows_before', geom.rows_before),
                                      ('rows_active', geom.rows_active),
                                      ('rows_after', geom.rows_after)]))]))
        entry = capture.truth.to_dict()
        if cam != reference:
            p = capture.truth.solver_params(captures[reference].truth)
            entry['solver'] = OrderedDict([('alpha', p.alpha), ('beta_ms', p.beta),
                                           ('t_row_ms', p.t_row)])
        entry['dropped_frames'] = capture.dropped.tolist()
        entry['flash_indices'] = [r.flash_index for r in capture.records
                                  if not r.boundary]
        truth[cam] = entry
        events.extend(capture.events)

    write_json(os.path.join(outdir, 'config.json'),
               OrderedDict([('reference', reference), ('cameras', cameras),
                            ('output_dir', '.')]))
    write_events(os.path.join(outdir, 'ground_truth_events.csv'), events)
    write_json(os.path.join(outdir, 'ground_truth.json'), OrderedDict([
        ('seed', seed), ('reference', reference),
        ('reference_t_row_ms', captures[reference].truth.t_row),
        ('flash_times_ms', schedule.times.tolist()),
        ('cameras', truth)]))
    logger.info('simulated %d cameras, %d flashes into %s', len(captures),
                len(schedule), outdir)
    return captures

from __future__ import division, print_function

import json
import logging
import os
from collections import namedtuple

from .exceptions import ConfigError
from .timebase import SensorGeometry

__all__ = ['DEFAULT_DETECT', 'DEFAULT_MATCH', 'DEFAULT_SOLVE',
           'DEFAULT_SIMULATION', 'detect_config', 'match_config',
           'solve_config', 'simulation_config', 'CameraConfig',
           'ProjectConfig', 'load_project_config', 'parse_manual_offsets']

logger = logging.getLogger(__name__)

DEFAULT_DETECT = {'threshold': 40.0,
                  'auto_k': 8.0,
                  'margin': 0.02,
                  'include_trailing': False}

# tolerance_ms None means half the nominal frame duration
DEFAULT_MATCH = {'tolerance_ms': None,
                 'gap_slack': 0.25}

DEFAULT_SOLVE = {'mode': 'joint'}

DEFAULT_SIMULATION = {'total_duration': 300000.0,
                      'n_flashes': 15,
                      'min_separation': 5000.0,
                      'flash_duration': 2.0,
                      'amplitude': [60.0, 200.0],
                      'decay_constant': 0.3,
                      'exposure': 0.5,
                      'drop_probability': 0.0,
                      'row_noise_sigma': 0.0,
                      'profile_noise_sigma': 2.0,
                      'flash_visibility': 1.0,
                      'profile_window': 2,
                      'fps': 25.0}

SOLVE_MODES = ('joint', 'pairwise')


def _overlay(defaults, init_params, name):
    unknown = set(init_params) - set(defaults)
    if unknown:
        raise ConfigError('unknown {} option(s): {}'.format(
            name, ', '.join(sorted(unknown))))
    config = defaults.copy()
    for k, v in list(init_params.items()):
        config[k] = v
    return config


def detect_config(init_params={}):
    """
    Create a detection config dictionary.

    Parameters
    ----------
    init_params: dict, optional
        Parameters that differ from DEFAULT_DETECT. `threshold` may be a
        number or 'auto'.
    """
    config = _overlay(DEFAULT_DETECT, init_params, 'detection')
    thresh = config['threshold']
    if thresh != 'auto' and not (isinstance(thresh, (int, float)) and thresh > 0):
        raise ConfigError("threshold must be positive or 'auto', got {!r}".format(thresh))
    if not 0 <= config['margin'] < 0.5:
        raise ConfigError('margin must be in [0, 0.5)')
    return config


def match_config(init_params={}):
    """Matching config: DEFAULT_MATCH overlaid with `init_params`."""
    config = _overlay(DEFAULT_MATCH, init_params, 'matching')
    tol = config['tolerance_ms']
    if tol is not None and not tol > 0:
        raise ConfigError('tolerance_ms must be positive')
    return config


def solve_config(init_params={}):
    config = _overlay(DEFAULT_SOLVE, init_params, 'solve')
    if config['mode'] not in SOLVE_MODES:
        raise ConfigError('solve mode must be one of {}'.format(SOLVE_MODES))
    return config


def simulation_config(init_params={}):
    """
    Create a simulation config dictionary.

    Parameters
    ----------
    init_params: dict, optional
        Parameters that differ from DEFAULT_SIMULATION. `amplitude` is
        either a number or a [low, high] range drawn from per flash.
    """
    return _overlay(DEFAULT_SIMULATION, init_params, 'simulation')


CameraConfig = namedtuple('CameraConfig', ['camera_id', 'fps', 'timestamps',
                                           'profiles', 'frames', 'geometry',
                                           'row_period_ms', 'manual_offset_ms'])


def _resolve(path, base_dir):
    if path is None or os.path.isabs(path):
        return path
    return os.path.normpath(os.path.join(base_dir, path))


def _camera_from_dict(d, base_dir):
    try:
        camera_id = str(d['camera_id'])
        fps = float(d['fps'])
        ts = dict(d['timestamps'])
        ts_format, ts_path = ts['format'], ts['path']
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError('camera entry {!r}: missing or bad {}'.format(d, exc))
    if ts_format not in ('mp4', 'rtp', 'csv'):
        raise ConfigError('camera {}: unknown timestamp format {!r}'.format(
            camera_id, ts_format))
    ts['path'] = _resolve(ts_path, base_dir)
    frames = d.get('frames')
    if frames is not None:
        frames = dict(frames)
        if not {'path', 'height', 'width'} <= set(frames):
            raise ConfigError('camera {}: frames need path, height, width'.format(
                camera_id))
        frames['path'] = _resolve(frames['path'], base_dir)
    geometry = d.get('geometry')
    if geometry is not None:
        geometry = SensorGeometry(**geometry)
    elif frames is not None:
        geometry = SensorGeometry.active_only(frames['height'])
    return CameraConfig(camera_id, fps, ts, _resolve(d.get('profiles'), base_dir),
                        frames, geometry, d.get('row_period_ms'),
                        d.get('manual_offset_ms'))


class ProjectConfig(object):
    """
    All cameras of a synchronization project and the pipeline options.

    Parameters
    ----------
    cameras : list of CameraConfig
    reference : str
        Reference camera id.
    detection, matching, solve : dict, optional
        Overrides of DEFAULT_DETECT, DEFAULT_MATCH and DEFAULT_SOLVE.
    workers : int, optional
        Threads for the per-camera stages.
    output_dir : str, optional
    """

    def __init__(self, cameras, reference, detection={}, matching={}, solve={},
                 workers=1, output_dir='.'):
        self.cameras = list(cameras)
        ids = [c.camera_id for c in self.cameras]
        if len(set(ids)) != len(ids):
            raise ConfigError('camera ids must be unique: {}'.format(ids))
        if reference not in ids:
            raise ConfigError('reference camera {!r} not in cameras {}'.format(
                reference, ids))
        if int(workers) < 1:
            raise ConfigError('workers must be >= 1')
        self.reference = reference
        self.detection = detect_config(detection)
        self.matching = match_config(matching)
        self.solve = solve_config(solve)
        self.workers = int(workers)
        self.output_dir = output_dir

    @property
    def camera_ids(self):
        return [c.camera_id for c in self.cameras]

    def camera(self, camera_id):
        for c in self.cameras:
            if c.camera_id == camera_id:
                return c
        raise ConfigError('unknown camera {!r}'.format(camera_id))

    def with_reference(self, reference):
        return ProjectConfig(self.cameras, reference, self.detection,
                             self.matching, self.solve, self.workers,
                             self.output_dir)

    @classmethod
    def from_dict(cls, d, base_dir='.'):
        if 'cameras' not in d or 'reference' not in d:
            raise ConfigError('config needs "cameras" and "reference"')
        cameras = [_camera_from_dict(c, base_dir) for c in d['cameras']]
        return cls(cameras, d['reference'], d.get('detection', {}),
                   d.get('matching', {}), d.get('solve', {}), d.get('workers', 1),
                   _resolve(d.get('output_dir', '.'), base_dir))


def load_project_config(fn):
    """
    Read a JSON project config. Relative paths in it are taken relative
    to the config file.
    """
    with open(fn) as f:
        try:
            d = json.load(f)
        except ValueError as exc:
            raise ConfigError('{}: invalid JSON ({})'.format(fn, exc))
    logger.info('loaded config %s', fn)
    return ProjectConfig.from_dict(d, os.path.dirname(os.path.abspath(fn)))


def parse_manual_offsets(items):
    """
    Parse ['cam=ms', ...] command line overrides.

    Returns
    -------
    offsets : dict
        Offset in ms by camera id.
    """
    offsets = {}
    for item in items or []:
        cam, sep, value = item.partition('=')
        try:
            if not sep or not cam:
                raise ValueError
            offsets[cam] = float(value)
        except ValueError:
            raise ConfigError('manual offset must look like camera=ms, got {!r}'.format(item))
    return offsets

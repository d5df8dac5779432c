""" Detect flashes and synchronize all cameras of a project in one go."""
from __future__ import division, print_function

import logging
import os

from ..configs import load_project_config
from ..synchronizer import FlashSynchronizer

__all__ = ['flash_sync']

logger = logging.getLogger(__name__)


def flash_sync(config_fn, outdir=None, threshold=None, tolerance_ms=None,
               manual_offsets={}, mode=None, reference=None, save_files=True,
               visualize=False, save_fn=None, verbose=False):
    """
    Run timestamp extraction, event detection, matching and solving on
    the cameras of a project config.

    Parameters
    ----------
    config_fn : string
        JSON project config file name.
    outdir : string, optional
        Where results are written; the config's output_dir by default.
    threshold : float or 'auto', optional
        Detection threshold override.
    tolerance_ms : float, optional
        Matching tolerance override.
    manual_offsets : dict, optional
        Coarse offsets in ms by camera id replacing the automatic ones.
    mode : string, optional
        'joint' or 'pairwise'.
    reference : string, optional
        Reference camera override.
    save_files : bool, optional
        If True, write timestamps, events, solution and matched events.
    visualize : bool, optional
        If True, plot the event timeline and residuals.
    save_fn : string, optional
        Figure file name; saved next to the results if only a base name.
    verbose : bool, optional
        If True, print the solution.

    Returns
    -------
    synchronizer : FlashSynchronizer
        With the solution, matched events and residual report.
    """
    config = load_project_config(config_fn)
    if reference is not None:
        config = config.with_reference(reference)
    outdir = config.output_dir if outdir is None else outdir

    if save_fn is not None and os.path.dirname(save_fn) == '':
        save_fn = os.path.join(outdir, save_fn)

    sync = FlashSynchronizer(config, save_files=save_files)
    sync.run(outdir, threshold=threshold, tolerance_ms=tolerance_ms,
             manual_offsets=manual_offsets, mode=mode, will_viz=visualize,
             save_fn=save_fn, show=False)
    logger.info('synchronized %d cameras to %s, std error %.4f ms',
                len(sync.solution.params), config.reference,
                sync.solution.std_error)
    if verbose:
        sync.print_results()
    return sync

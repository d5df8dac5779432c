"""
Collection of visualization functions for flash synchronization.
"""
from __future__ import division, print_function

import numpy as np
import matplotlib.pyplot as plt

__all__ = ['plot_event_timeline', 'plot_detection', 'plot_diff_profile',
           'plot_residuals', 'plot_sync_summary', 'event_timeline_text']


def _axis(ax, **kwargs):
    if ax is None:
        fig, ax = plt.subplots(**kwargs)
    return ax.figure, ax


def _finish(fig, show, save_fn, dpi):
    if show:
        plt.show()
    if save_fn is not None:
        fig.savefig(save_fn, bbox_inches='tight', dpi=dpi)


def plot_event_timeline(event_times, ax=None, show=False, save_fn=None,
                        dpi=200, fontsize=12, **kwargs):
    """
    Event times of every camera on one time axis, one line per camera.

    Parameters
    ----------
    event_times : dict
        Event times in ms (camera or reference time) by camera id.
    """
    fig, ax = _axis(ax, **kwargs)
    for i, (cam, times) in enumerate(event_times.items()):
        times = np.asarray(times, dtype=float) / 1000.0
        ax.plot(times, np.full(len(times), i), '|', ms=14, mew=2, label=cam)
    ax.set_yticks(range(len(event_times)))
    ax.set_yticklabels(list(event_times.keys()), fontsize=fontsize)
    ax.set_xlabel('time [s]', fontsize=fontsize)
    ax.set_ylim(-0.5, len(event_times) - 0.5)
    _finish(fig, show, save_fn, dpi)
    return fig, ax


def plot_detection(diffs, threshold, events=(), ax=None, show=False,
                   save_fn=None, dpi=200, fontsize=12, **kwargs):
    """
    Per-frame maximum of the difference profiles with the threshold and
    the detected event frames.
    """
    fig, ax = _axis(ax, **kwargs)
    frames = np.array([d.frame for d in diffs])
    maxima = np.array([np.max(d.values) for d in diffs], dtype=float)
    ax.plot(frames, maxima, '-', color='k', lw=1)
    ax.axhline(threshold, color='r', ls='--', label='threshold')
    if len(events):
        det = set(e.frame for e in events)
        sel = np.array([f in det for f in frames], dtype=bool)
        ax.plot(frames[sel], maxima[sel], 'o', mfc='none', mec='b', label='events')
    ax.set_xlabel('frame', fontsize=fontsize)
    ax.set_ylabel(r'$\max(d_f)$', fontsize=fontsize)
    ax.legend(loc='best')
    _finish(fig, show, save_fn, dpi)
    return fig, ax


def plot_diff_profile(diff, edge_row=None, ax=None, show=False, save_fn=None,
                      dpi=200, fontsize=12, **kwargs):
    """Difference profile of one frame against row, with the located edge."""
    fig, ax = _axis(ax, **kwargs)
    values = np.asarray(diff.values)
    ax.plot(np.arange(len(values)), values, '-', color='k', lw=1)
    if edge_row is not None:
        ax.axvline(edge_row, color='r', ls='--', label='edge row {}'.format(edge_row))
        ax.legend(loc='best')
    ax.set_xlabel('row', fontsize=fontsize)
    ax.set_ylabel('frame {} difference'.format(diff.frame), fontsize=fontsize)
    _finish(fig, show, save_fn, dpi)
    return fig, ax


def plot_residuals(report, ax=None, show=False, save_fn=None, dpi=200,
                   fontsize=12, **kwargs):
    """
    Residuals of the matched events against reference time.

    Parameters
    ----------
    report : astropy.table.Table
        As returned by residual_report.
    """
    fig, ax = _axis(ax, **kwargs)
    for cam in np.unique(report['camera']):
        sel = report['camera'] == cam
        res = np.asarray(report['residual_ms'][sel])
        ax.plot(np.asarray(report['t_ref_ms'][sel]) / 1000.0, res, 'o',
                label=r'{} ($\sigma$={:.2f} ms)'.format(cam, np.std(res)))
    ax.axhline(0, color='k', lw=1)
    ax.set_xlabel('reference time [s]', fontsize=fontsize)
    ax.set_ylabel('residual [ms]', fontsize=fontsize)
    ax.legend(loc='best')
    _finish(fig, show, save_fn, dpi)
    return fig, ax


def plot_sync_summary(event_times, report, subplots=None, show=True,
                      save_fn=None, dpi=200, **kwargs):
    """Event timeline and residuals side by side."""
    if subplots:
        fig, axes = subplots
    else:
        if 'figsize' not in kwargs.keys():
            kwargs['figsize'] = (14, 5)
        fig, axes = plt.subplots(1, 2, **kwargs)
        fig.subplots_adjust(wspace=0.25)
    plot_event_timeline(event_times, ax=axes[0])
    if report is not None:
        plot_residuals(report, ax=axes[1])
    _finish(fig, show, save_fn, dpi)
    return fig, axes


def event_timeline_text(event_times, width=72, t_min=None, t_max=None):
    """
    Plain-text event timeline: one line per camera, a '|' in the column
    of every event.

    Parameters
    ----------
    event_times : dict
        Event times in ms by camera id.
    width : int, optional
        Number of time columns.

    Returns
    -------
    text : str
    """
    all_times = np.concatenate([np.asarray(t, dtype=float)
                                for t in event_times.values()] + [np.zeros(0)])
    if t_min is None:
        t_min = all_times.min() if all_times.size else 0.0
    if t_max is None:
        t_max = all_times.max() if all_times.size else 1.0
    span = max(t_max - t_min, 1e-9)
    label = max([len(str(c)) for c in event_times] + [1])
    lines = []
    for cam, times in event_times.items():
        row = [' '] * width
        for t in times:
            col = int(round((t - t_min) / span * (width - 1)))
            if 0 <= col < width:
                row[col] = '|'
        lines.append('{:>{}} {}  ({} events)'.format(cam, label, ''.join(row), len(times)))
    left = '{:.1f} s'.format(t_min / 1000.0)
    right = '{:.1f} s'.format(t_max / 1000.0)
    lines.append('{:>{}} {}{:>{}}'.format('', label, left, right,
                                          max(width - len(left), len(right) + 1)))
    return '\n'.join(lines)

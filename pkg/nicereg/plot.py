"""
This module performs plotting of training curves, evaluation results,
and volume slices using matplotlib.

Copyright 2026 nicereg developers
"""

import numpy as np

__all__ = ('plot_losses', 'plot_validation', 'plot_step_ncc',
           'plot_ablation', 'plot_stepwise', 'mid_slice', 'read_table')


def make_axes(figsize=None, axes=None, **kwargs):

    from matplotlib.pyplot import subplots

    if axes is not None:
        fig = axes.figure
    elif figsize is not None:
        fig, axes = subplots(1, figsize=figsize, **kwargs)
    else:
        fig, axes = subplots(1, **kwargs)

    return axes


def _finish(axes, filename):

    if filename is None:
        return axes

    from matplotlib.pyplot import close

    fig = axes.figure if not isinstance(axes, np.ndarray) else axes.flat[0].figure
    fig.tight_layout()
    fig.savefig(filename, dpi=100)
    close(fig)
    return filename


def read_table(filename):
    """Read a CSV file with a header row as a numpy record array;
    lines starting with # are skipped."""

    return np.atleast_1d(np.genfromtxt(filename, delimiter=',', names=True,
                                       comments='#', dtype=None,
                                       encoding='utf-8'))


def plot_losses(metrics_csv, filename=None, **kwargs):
    """Plot the total loss and the per-level similarity terms against
    iteration."""

    table = read_table(metrics_csv)
    ax = make_axes(figsize=kwargs.pop('figsize', None),
                   axes=kwargs.pop('axes', None))

    iterations = table['iteration']
    ax.plot(iterations, table['total'], label='total', **kwargs)
    for name in table.dtype.names:
        if name.startswith('sim_'):
            ax.plot(iterations, table[name], '--', label=name, **kwargs)
    ax.set_xlabel('Iteration')
    ax.set_ylabel('Loss')
    ax.legend()
    return _finish(ax, filename)


def plot_validation(validation_csv, filename=None, **kwargs):

    from matplotlib.pyplot import subplots

    table = read_table(validation_csv)
    fig, axes = subplots(1, 3, figsize=kwargs.pop('figsize', (12, 3.5)))
    names = [('mean_ncc', 'NCC'), ('mean_dsc', 'DSC'), ('mean_njd', 'NJD (%)')]
    for ax, (name, label) in zip(axes, names):
        ax.plot(table['iteration'], table[name], 'o-', **kwargs)
        ax.set_xlabel('Iteration')
        ax.set_ylabel(label)
    return _finish(axes, filename)


def plot_step_ncc(step_ncc, filename=None, baseline=None, **kwargs):
    """Plot the mean NCC after each registration step."""

    ax = make_axes(figsize=kwargs.pop('figsize', None),
                   axes=kwargs.pop('axes', None))

    steps = np.arange(1, len(step_ncc) + 1)
    ax.plot(steps, step_ncc, 'o-', label='registered', **kwargs)
    if baseline is not None:
        ax.axhline(baseline, color='0.7', linestyle='--', label='unregistered')
        ax.legend()
    ax.set_xticks(steps)
    ax.set_xlabel('Step')
    ax.set_ylabel('NCC')
    return _finish(ax, filename)


def plot_ablation(rows, filename=None, **kwargs):
    """Bar chart of DSC and NJD for each (L, lambda) ablation cell."""

    from matplotlib.pyplot import subplots

    rows = [row for row in rows if row['status'] == 'ok']
    labels = ['L=%s\nlambda=%s' % (row['L'], row['lambda']) for row in rows]
    x = np.arange(len(rows))

    fig, axes = subplots(1, 2, figsize=kwargs.pop('figsize', (10, 3.5)))
    axes[0].bar(x, [float(row['dsc']) for row in rows], **kwargs)
    axes[0].set_ylabel('DSC')
    axes[1].bar(x, [float(row['njd']) for row in rows], **kwargs)
    axes[1].set_ylabel('NJD (%)')
    for ax in axes:
        ax.set_xticks(x)
        ax.set_xticklabels(labels)
    return _finish(axes, filename)


def mid_slice(vol, axis=0):
    """The middle slice of a volume along axis."""

    data = np.asarray(vol.data if hasattr(vol, 'data') else vol)
    return np.take(data, data.shape[axis] // 2, axis=axis)


def plot_stepwise(report, moving, fixed, filename=None, **kwargs):
    """Mid-slices of the moving image, the image warped by each step,
    and the fixed image."""

    from matplotlib.pyplot import subplots

    panels = [('moving', moving)]
    for i, vol in enumerate(report.warped):
        panels.append(('step %d (NCC %.3f)' % (i + 1, report.ncc[i]), vol))
    panels.append(('fixed', fixed))

    fig, axes = subplots(1, len(panels),
                         figsize=kwargs.pop('figsize', (2.5 * len(panels), 2.8)))
    for ax, (title, vol) in zip(np.atleast_1d(axes), panels):
        ax.imshow(mid_slice(vol), cmap='gray', vmin=0, vmax=1, **kwargs)
        ax.set_title(title, fontsize=8)
        ax.axis('off')
    return _finish(np.atleast_1d(axes), filename)

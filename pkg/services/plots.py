"""
Figures for the experiment outputs, rendered to SVG with matplotlib's Agg
backend. Hash salt and date metadata are pinned so reruns produce the same
bytes.
"""

from pathlib import Path

import matplotlib

matplotlib.use('Agg')

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

SVG_SALT = 'risk-toolkit'

FIGURE1_SERIES = [
    ('oracle', 'oracle', 'k-'),
    ('lo', 'LOOCV', 'C0o-'),
    ('alo', 'ALO', 'C1x--'),
    ('amp', 'AMP', 'C2+:'),
    ('kfold2', '2-fold', 'C3-'),
    ('kfold3', '3-fold', 'C4-'),
    ('kfold5', '5-fold', 'C5-'),
]


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context({'svg.hashsalt': SVG_SALT}):
        fig.savefig(path, format='svg', metadata={'Date': None})
    plt.close(fig)
    return path


def plot_figure1(means: pd.DataFrame, path) -> Path:
    """Mean risk estimates against lambda"""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for column, label, style in FIGURE1_SERIES:
        if column in means and means[column].notna().any():
            ax.plot(means['lambda'], means[column], style, label=label, markersize=4)
    ax.set_xscale('log')
    ax.set_xlabel('lambda')
    ax.set_ylabel('out-of-sample risk')
    ax.legend(loc='best', fontsize=8)
    ax.grid(True, which='both', alpha=0.3)
    return _save(fig, path)


def plot_rates(summary: pd.DataFrame, path) -> Path:
    """Median discrepancies against n on log-log axes"""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for column, label, style in [('d_lo_alo', '|LO - ALO|', 'C1o-'),
                                 ('d_lo_amp', '|LO - AMP|', 'C2s-')]:
        values = summary[column].clip(lower=1e-300)
        ax.plot(summary['n'], values, style, label=label)
    ax.set_xscale('log')
    ax.set_yscale('log')
    ax.set_xlabel('n')
    ax.set_ylabel('median discrepancy')
    ax.legend(loc='best')
    ax.grid(True, which='both', alpha=0.3)
    return _save(fig, path)


def plot_amp_trace(trace: pd.DataFrame, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.semilogy(trace['t'], trace['delta_beta_inf'].clip(lower=1e-300), 'C0-')
    ax.set_xlabel('iteration t')
    ax.set_ylabel('||beta^{t+1} - beta^t||_inf')
    ax.grid(True, which='both', alpha=0.3)
    return _save(fig, path)

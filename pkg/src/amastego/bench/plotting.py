"""
Figures written next to the CSV reports.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "svg.hashsalt": "amastego",
}


def _figure(width=5.0, height=None):
    golden = (np.sqrt(5) - 1.0) / 2.0
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(width, height or width * golden))
    return fig, ax


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(RC):
        fig.tight_layout()
        fig.savefig(path, metadata={"Software": None} if path.suffix == ".png" else None)
    plt.close(fig)
    return path


def plot_error_rates(rows, path: Path, metric: str = "p_md") -> Path:
    """Grouped bars of one error rate per (scheme, steganalyzer) and payload."""
    payloads = sorted({r.payload for r in rows})
    series = sorted({(r.scheme, r.steganalyzer) for r in rows})
    fig, ax = _figure()
    width = 0.8 / max(len(series), 1)
    x = np.arange(len(payloads))
    for k, (scheme, sa) in enumerate(series):
        vals = []
        for p in payloads:
            hit = [r for r in rows if r.scheme == scheme and r.steganalyzer == sa and r.payload == p]
            vals.append(100 * getattr(hit[0].metrics, metric) if hit else np.nan)
        ax.bar(x + (k - (len(series) - 1) / 2) * width, vals, width, label=f"{scheme} / {sa}")
    ax.set_xticks(x)
    ax.set_xticklabels([f"{p:.1f}" for p in payloads])
    ax.set_xlabel("payload (bits per element)")
    ax.set_ylabel(f"{metric.upper().replace('_', ' ')} (%)")
    ax.set_ylim(0, 100)
    ax.legend(frameon=False, ncol=2)
    return _save(fig, path)


def plot_beta_histogram(report, path: Path) -> Path:
    fig, ax = _figure()
    labels = report.beta_labels
    payloads = list(report.beta_hist)
    width = 0.8 / max(len(payloads), 1)
    x = np.arange(len(labels))
    for k, p in enumerate(payloads):
        vals = [report.beta_hist[p][lab] for lab in labels]
        ax.bar(x + (k - (len(payloads) - 1) / 2) * width, vals, width, label=f"{p:.1f}")
    ax.set_xticks(x)
    ax.set_xticklabels(labels)
    ax.set_xlabel(r"$\beta$ used")
    ax.set_ylabel("frequency (%)")
    ax.legend(title="payload", frameon=False)
    return _save(fig, path)


def plot_game(rounds, path: Path) -> Path:
    fig, ax = _figure()
    r = [g.index for g in rounds]
    ax.plot(r, [100 * g.unaware.p_e for g in rounds], "o-", label="unaware $P_e$")
    ax.plot(r, [100 * g.aware.p_e for g in rounds], "s-", label="aware $P_e$")
    ax.plot(r, [100 * g.unaware.p_md for g in rounds], "o--", label="unaware $P_{md}$")
    ax.plot(r, [100 * g.aware.p_md for g in rounds], "s--", label="aware $P_{md}$")
    ax.set_xticks(r)
    ax.set_xlabel("round")
    ax.set_ylabel("error rate (%)")
    ax.set_ylim(0, 100)
    ax.legend(frameon=False, ncol=2)
    return _save(fig, path)

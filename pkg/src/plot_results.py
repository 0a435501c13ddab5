"""
Generazione dei grafici SVG per l'analisi dei risultati.

Questo modulo fornisce le visualizzazioni statiche dei risultati:
1. DOA stimati nel tempo sopra lo spettro CBF (una colonna per metodo)
2. GOSPA nel tempo per SVALSE e VALSE
3. GOSPA (con scomposizione) e RMSE in funzione dell'SNR
4. Analisi di sensibilita' rispetto a p^d e p^a

I file SVG sono autocontenuti e deterministici (salt fisso degli id e
nessuna data nei metadati), cosi' due esecuzioni producono file identici.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Optional, Sequence

import matplotlib

matplotlib.use('Agg')  # Backend non interattivo: solo file
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from model import ArrayGeometry, Snapshot
from simkit import cbf

plt.rcParams['svg.hashsalt'] = 'svalse'  # Id degli elementi SVG riproducibili

METHOD_STYLE = {
    'svalse': {'color': 'tab:red', 'marker': 'o', 'label': 'SVALSE'},
    'valse': {'color': 'tab:blue', 'marker': 's', 'label': 'VALSE'},
}


def _save(fig, out_path: Path) -> Path:
    """Salva la figura in SVG senza data nei metadati e la chiude."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, format='svg', metadata={'Date': None})
    plt.close(fig)
    return out_path


def plot_doa_tracks(
    snapshots: Sequence[Snapshot],               # Snapshot della sequenza
    geom: ArrayGeometry,                         # Geometria dell'array
    tracks: Dict[str, pd.DataFrame],             # Tracce per metodo (schema tracks.csv)
    out_path: Path,                              # File SVG di output
    truth: Optional[pd.DataFrame] = None,        # Verita' (schema truth.csv), opzionale
    grid_step: float = 0.5,                      # Passo della griglia CBF [gradi]
) -> Path:
    """
    DOA stimati nel tempo sopra lo spettro CBF normalizzato [dB].

    Un pannello per ogni metodo; la verita' (se presente) e' disegnata in nero.

    Returns:
        Percorso del file scritto
    """
    grid = np.arange(-90.0, 90.0 + grid_step / 2, grid_step)
    power = np.array([cbf(geom, snap, grid) for snap in snapshots])
    power_db = 10.0 * np.log10(np.maximum(power / max(power.max(), 1e-300), 1e-6))
    t_values = [snap.t for snap in snapshots]

    fig, axes = plt.subplots(1, len(tracks), figsize=(6 * len(tracks), 5), sharey=True, squeeze=False)
    for ax, (method, frame) in zip(axes[0], tracks.items()):
        style = METHOD_STYLE.get(method, {'color': 'tab:green', 'marker': 'o', 'label': method})
        ax.imshow(
            power_db.T, origin='lower', aspect='auto', cmap='Greys', vmin=-30, vmax=0,
            extent=[t_values[0] - 0.5, t_values[-1] + 0.5, grid[0], grid[-1]],
        )
        if truth is not None and not truth.empty:
            ax.plot(truth['t'], truth['doa_deg'], 'k.', markersize=4, label='truth')
        ax.scatter(frame['t'], frame['doa_deg'], s=10, color=style['color'],
                   marker=style['marker'], label=style['label'])
        ax.set_title(style['label'])
        ax.set_xlabel('time step')
        ax.set_ylim(-90, 90)
        ax.legend(loc='upper right', fontsize=8)
    axes[0][0].set_ylabel('DOA [deg]')
    fig.tight_layout()
    return _save(fig, out_path)


def plot_gospa_vs_time(time_summary: pd.DataFrame, snr_db: float, out_path: Path) -> Path:
    """GOSPA medio per passo temporale, un tracciato per metodo."""
    data = time_summary[time_summary['snr_db'] == snr_db]
    fig, ax = plt.subplots(figsize=(8, 4))
    for method, group in data.groupby('method', sort=True):
        style = METHOD_STYLE.get(method, {'color': 'tab:green', 'label': method})
        mean = group['gospa_total'].mean()
        ax.plot(group['t'], group['gospa_total'], color=style['color'],
                label=f"{style['label']} (mean {mean:.2f} deg)")
    ax.set_xlabel('time step')
    ax.set_ylabel('GOSPA [deg]')
    ax.set_title(f'GOSPA vs time, SNR {snr_db:g} dB')
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return _save(fig, out_path)


def plot_metrics_vs_snr(summary: pd.DataFrame, out_dir: Path) -> Sequence[Path]:
    """
    Curve delle metriche in funzione dell'SNR.

    File generati:
    1. gospa_vs_snr.svg: GOSPA totale, distanza, mancati, falsi (2x2)
    2. rmse_vs_snr.svg: RMSE
    """
    out_dir = Path(out_dir)
    panels = [
        ('gospa_total', 'GOSPA'),
        ('gospa_dist', 'localization error'),
        ('gospa_miss', 'missed DOAs'),
        ('gospa_false', 'false DOAs'),
    ]

    fig, axes = plt.subplots(2, 2, figsize=(10, 8), sharex=True)
    for ax, (col, title) in zip(axes.ravel(), panels):
        for method, group in summary.groupby('method', sort=True):
            style = METHOD_STYLE.get(method, {'color': 'tab:green', 'marker': 'o', 'label': method})
            ax.plot(group['snr_db'], group[col], color=style['color'], marker=style['marker'],
                    label=style['label'])
        ax.set_title(title)
        ax.set_ylabel('[deg]')
        ax.grid(True, alpha=0.3)
    for ax in axes[1]:
        ax.set_xlabel('SNR [dB]')
    axes[0][0].legend()
    fig.tight_layout()
    gospa_path = _save(fig, out_dir / 'gospa_vs_snr.svg')

    fig, ax = plt.subplots(figsize=(6, 4))
    for method, group in summary.groupby('method', sort=True):
        style = METHOD_STYLE.get(method, {'color': 'tab:green', 'marker': 'o', 'label': method})
        ax.plot(group['snr_db'], group['rmse'], color=style['color'], marker=style['marker'],
                label=style['label'])
    ax.set_xlabel('SNR [dB]')
    ax.set_ylabel('RMSE [deg]')
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    rmse_path = _save(fig, out_dir / 'rmse_vs_snr.svg')
    return [gospa_path, rmse_path]


def plot_sensitivity(frame: pd.DataFrame, out_path: Path) -> Path:
    """GOSPA medio (con scomposizione impilata) per ogni coppia (p^d, p^a)."""
    labels = [f'pd={r.p_deact:g}\npa={r.p_act:g}' for r in frame.itertuples(index=False)]
    x = np.arange(len(frame))

    fig, ax = plt.subplots(figsize=(max(6, 1.5 * len(frame)), 4))
    bottom = np.zeros(len(frame))
    for col, label in [('gospa_dist', 'localization'), ('gospa_miss', 'missed'), ('gospa_false', 'false')]:
        ax.bar(x, frame[col], bottom=bottom, label=label)
        bottom += frame[col].to_numpy()
    ax.set_xticks(x)
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel('GOSPA [deg]')
    ax.grid(True, axis='y', alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return _save(fig, out_path)

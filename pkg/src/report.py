"""
Generazione di report e metriche aggregate dalle stime DOA.

Questo modulo calcola le metriche per ogni passo temporale (GOSPA con la sua
scomposizione, RMSE, numero di sorgenti vere e stimate) confrontando le
tracce stimate con la verita' simulata, e le aggrega:
- per metodo e SNR (curve GOSPA/RMSE vs SNR)
- per metodo, SNR e passo temporale (GOSPA vs tempo)
- in una tabella di testo a colonne fisse
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Iterable, List, Sequence

import numpy as np
import pandas as pd

from metrics import MetricConfig, average_metrics, gospa, rmse
from simkit import Truth
from tracker import TrackRecord

METRIC_FIELDS = ['gospa_total', 'gospa_dist', 'gospa_miss', 'gospa_false', 'rmse', 'n_true', 'n_est']
METRIC_COLUMNS = ['run', 'method', 'snr_db', 't'] + METRIC_FIELDS


def metric_rows(
    truth: Truth,                       # Verita' simulata
    records: Sequence[TrackRecord],     # Tracce stimate (tutti i passi)
    run: int,                           # Indice della simulazione
    method: str,                        # 'svalse' oppure 'valse'
    snr_db: float,                      # SNR della simulazione [dB]
    cfg: MetricConfig,                  # Parametri delle metriche
) -> List[Dict]:
    """
    Calcola le metriche per ogni passo temporale.

    Il RMSE non e' definito nei passi senza sorgenti vere: in quel caso vale
    NaN e viene escluso dalle medie.

    Returns:
        Lista di dizionari, uno per passo, con le colonne METRIC_COLUMNS
    """
    by_t: Dict[int, List[float]] = {}
    for r in records:
        by_t.setdefault(r.t, []).append(r.doa_deg)

    rows = []
    for t in range(1, truth.t_max + 1):
        true_doas = truth.doas(t)
        est_doas = np.array(by_t.get(t, []), dtype=float)
        g = gospa(true_doas, est_doas, cfg)
        rows.append({
            'run': run,
            'method': method,
            'snr_db': snr_db,
            't': t,
            'gospa_total': g.total,
            'gospa_dist': g.dist,
            'gospa_miss': g.miss,
            'gospa_false': g.false_,
            'rmse': rmse(true_doas, est_doas, cfg) if len(true_doas) else np.nan,
            'n_true': len(true_doas),
            'n_est': len(est_doas),
        })
    return rows


def sort_metrics(frame: pd.DataFrame) -> pd.DataFrame:
    """
    Ordina le righe per (method, snr_db, run, t) indipendentemente dall'ordine di calcolo.

    Ogni blocco (method, snr_db) e' contiguo e al suo interno le righe seguono
    (run, t), lo stesso ordine delle tracce senza component_id: le metriche
    hanno una riga per passo.
    """
    return frame.sort_values(['method', 'snr_db', 'run', 't'], kind='mergesort').reset_index(drop=True)


def build_summary(metrics: pd.DataFrame) -> pd.DataFrame:
    """
    Medie per metodo e SNR su tutti i passi e tutte le simulazioni.

    Returns:
        DataFrame con colonne method, snr_db e le medie di METRIC_FIELDS
    """
    rows = []
    for (method, snr), group in metrics.groupby(['method', 'snr_db'], sort=True):
        means = average_metrics(group[METRIC_FIELDS])
        rows.append({'method': method, 'snr_db': snr, **means.to_dict()})
    return pd.DataFrame(rows, columns=['method', 'snr_db'] + METRIC_FIELDS)


def build_time_summary(metrics: pd.DataFrame) -> pd.DataFrame:
    """Medie per metodo, SNR e passo temporale (sulle simulazioni)."""
    grouped = metrics.groupby(['method', 'snr_db', 't'], sort=True)[METRIC_FIELDS].mean()
    return grouped.reset_index()


def format_table(summary: pd.DataFrame) -> str:
    """
    Tabella di testo a colonne fisse con le medie per metodo e SNR.

    Args:
        summary: Output di build_summary

    Returns:
        Tabella pronta per la stampa
    """
    fmt = '{:<10} {:>8} {:>12} {:>12} {:>12} {:>12} {:>10} {:>8} {:>8}'
    lines = [
        '=' * 100,
        'GOSPA / RMSE [deg] - medie su passi temporali e simulazioni',
        '=' * 100,
        fmt.format('method', 'snr_db', 'gospa', 'dist', 'miss', 'false', 'rmse', 'n_true', 'n_est'),
        '-' * 100,
    ]
    for row in summary.itertuples(index=False):
        lines.append(fmt.format(
            row.method,
            f'{row.snr_db:g}',
            f'{row.gospa_total:.3f}',
            f'{row.gospa_dist:.3f}',
            f'{row.gospa_miss:.3f}',
            f'{row.gospa_false:.3f}',
            f'{row.rmse:.3f}',
            f'{row.n_true:.2f}',
            f'{row.n_est:.2f}',
        ))
    return '\n'.join(lines) + '\n'


def save_report(report: pd.DataFrame, out_path: Path) -> None:
    """
    Salva un report su file CSV.

    Args:
        report: DataFrame da salvare
        out_path: Percorso del file di output
    """
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    report.to_csv(out_path, index=False)


def save_text(text: str, out_path: Path) -> None:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(text, encoding='utf-8')

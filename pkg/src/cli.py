"""
Punto di ingresso a linea di comando per simulazione, stima e benchmark.

Sottocomandi:
- simulate: genera snapshot e verita' dallo scenario della configurazione
- estimate: esegue SVALSE (o VALSE con --no-sequential) su un file di snapshot
- benchmark: simulazioni Monte Carlo per ogni SNR, metriche GOSPA/RMSE per
  SVALSE e VALSE, tabelle riassuntive e grafici SVG
- sensitivity: GOSPA/RMSE di SVALSE al variare di (p^d, p^a)

Ogni simulazione usa seed derivati da (seed principale, indice SNR, indice
della simulazione): i risultati non dipendono dal numero di processi.

Codici di uscita: 0 successo, 2 errore di configurazione, 3 errore nei dati.
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections import Counter
from dataclasses import replace
from multiprocessing import Pool
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Set, Tuple

import pandas as pd
from tqdm import tqdm  # Barra di avanzamento per i cicli Monte Carlo

# Aggiunge la cartella corrente al path per gli import locali
sys.path.insert(0, str(Path(__file__).resolve().parent))

from loader import (
    ConfigError,
    DataError,
    RunConfig,
    load_run_config,
    parse_snapshots,
    tracks_frame,
    write_frame,
    write_snapshots,
    write_truth,
)
from metrics import average_metrics
from plot_results import plot_doa_tracks, plot_gospa_vs_time, plot_metrics_vs_snr, plot_sensitivity
from report import (
    METRIC_COLUMNS,
    METRIC_FIELDS,
    build_summary,
    build_time_summary,
    format_table,
    metric_rows,
    save_report,
    save_text,
    sort_metrics,
)
from simkit import Truth, build_truth, synthesize
from tracker import TrackRecord, run_sequence

logger = logging.getLogger(__name__)

METHODS = ('svalse', 'valse')


# ==================== SEED ====================

def truth_seed(seed: int, run: int) -> List[int]:
    """Seed della verita': uguale per tutti gli SNR della stessa simulazione."""
    return [seed, 0, run]


def noise_seed(seed: int, snr_idx: int, run: int) -> List[int]:
    """Seed del rumore per la coppia (SNR, simulazione)."""
    return [seed, 1 + snr_idx, run]


def simulate_run(cfg: RunConfig, snr_idx: int, run: int, flags: Optional[Set[str]] = None):
    """Verita' e snapshot di una simulazione (diagnostica del simulatore in flags)."""
    truth = build_truth(cfg.sources, cfg.t_max, truth_seed(cfg.seed, run))
    snapshots = synthesize(truth, cfg.geometry, cfg.snr_db[snr_idx], noise_seed(cfg.seed, snr_idx, run), flags)
    return truth, snapshots


def run_trial(task: Tuple[RunConfig, int, int, Sequence[str]]) -> Tuple[List[dict], Dict[str, List[TrackRecord]], Set[str]]:
    """
    Una simulazione Monte Carlo: simula, stima con ogni metodo e calcola le metriche.

    Args:
        task: (configurazione, indice SNR, indice simulazione, metodi)

    Returns:
        (righe delle metriche per passo, tracce per metodo, diagnostica del simulatore)
    """
    cfg, snr_idx, run, methods = task
    flags: Set[str] = set()
    truth, snapshots = simulate_run(cfg, snr_idx, run, flags)
    rows: List[dict] = []
    tracks: Dict[str, List[TrackRecord]] = {}
    for method in methods:
        records = run_sequence(snapshots, cfg.geometry, cfg.estimator, sequential=(method == 'svalse'))
        rows += metric_rows(truth, records, run, method, cfg.snr_db[snr_idx], cfg.metrics)
        tracks[method] = records
    return rows, tracks, flags


def _run_trials(tasks: list, workers: int, desc: str) -> list:
    """Esegue le simulazioni in serie oppure con un pool di processi (ordine preservato)."""
    if workers <= 1 or len(tasks) <= 1:
        return [run_trial(task) for task in tqdm(tasks, desc=desc)]
    with Pool(processes=workers) as pool:
        return list(tqdm(pool.imap(run_trial, tasks), total=len(tasks), desc=desc))


def report_flags(results: list) -> Counter:
    """Conta le simulazioni con ciascun flag diagnostico e lo segnala."""
    counts = Counter(flag for *_, flags in results for flag in flags)
    for flag, n in sorted(counts.items()):
        print(f'diagnostics: {flag} in {n}/{len(results)} simulations')
    return counts


# ==================== SOTTOCOMANDI ====================

def cmd_simulate(cfg: RunConfig, snr_idx: int = 0, run: int = 0) -> Tuple[Path, Path]:
    """
    Scrive snapshots.csv e truth.csv nella cartella di output.

    Returns:
        (percorso snapshot, percorso verita')
    """
    flags: Set[str] = set()
    truth, snapshots = simulate_run(cfg, snr_idx, run, flags)
    snap_path = write_snapshots(cfg.output_dir / 'snapshots.csv', snapshots)
    truth_path = write_truth(cfg.output_dir / 'truth.csv', truth)
    print(f'wrote {snap_path} rows={len(snapshots)} (M={cfg.geometry.m_sensors}, snr={cfg.snr_db[snr_idx]:g} dB)')
    print(f'wrote {truth_path} rows={sum(len(s) for s in truth.steps)}')
    if flags:
        print(f'diagnostics: {", ".join(sorted(flags))}')
    return snap_path, truth_path


def cmd_estimate(
    cfg: RunConfig,
    snapshots_path: Path,
    sequential: bool = True,
    plot: bool = False,
    truth_path: Optional[Path] = None,
) -> Path:
    """
    Stima le tracce da un file di snapshot e scrive tracks.csv.

    Args:
        cfg: Configurazione (geometria e stimatore)
        snapshots_path: File degli snapshot
        sequential: False per VALSE indipendente a ogni passo
        plot: Se True scrive anche doa_tracks.svg
        truth_path: Verita' da sovrapporre al grafico (opzionale)

    Returns:
        Percorso del file delle tracce
    """
    snapshots = parse_snapshots(snapshots_path, cfg.geometry.m_sensors)
    method = 'svalse' if sequential else 'valse'
    records = run_sequence(snapshots, cfg.geometry, cfg.estimator, sequential=sequential)
    frame = tracks_frame(records, run=0)
    out_path = write_frame(frame, cfg.output_dir / 'tracks.csv')
    print(f'wrote {out_path} rows={len(frame)} (method={method}, steps={len(snapshots)})')

    if plot:
        truth = None
        if truth_path is not None:
            try:
                truth = pd.read_csv(truth_path)
            except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
                raise DataError(f'{truth_path}: cannot read truth file ({exc})') from None
        svg = plot_doa_tracks(snapshots, cfg.geometry, {method: frame}, cfg.output_dir / 'doa_tracks.svg', truth)
        print(f'wrote {svg}')
    return out_path


def cmd_benchmark(cfg: RunConfig, plots: bool = True) -> pd.DataFrame:
    """
    Benchmark Monte Carlo di SVALSE e VALSE su tutti gli SNR.

    File generati nella cartella di output:
    - metrics.csv: metriche per passo (run, method, snr_db, t, ...)
    - summary.csv, summary.txt: medie per metodo e SNR
    - tracks_snr<k>_<method>.csv: tracce della simulazione 0 per ogni SNR
    - gospa_vs_snr.svg, rmse_vs_snr.svg, gospa_vs_time_snr<k>.svg, doa_tracks_snr<k>.svg

    Returns:
        Tabella riassuntiva per metodo e SNR
    """
    tasks = [(cfg, k, run, METHODS) for k in range(len(cfg.snr_db)) for run in range(cfg.n_runs)]
    results = _run_trials(tasks, cfg.workers, 'benchmark')

    report_flags(results)
    rows = [row for trial_rows, *_ in results for row in trial_rows]
    metrics = sort_metrics(pd.DataFrame(rows, columns=METRIC_COLUMNS))
    out_dir = cfg.output_dir
    write_frame(metrics, out_dir / 'metrics.csv')
    print(f'wrote {out_dir / "metrics.csv"} rows={len(metrics)}')

    summary = build_summary(metrics)
    save_report(summary, out_dir / 'summary.csv')
    table = format_table(summary)
    save_text(table, out_dir / 'summary.txt')
    print(table, end='')
    print(f'wrote {out_dir / "summary.csv"} and {out_dir / "summary.txt"}')

    # Tracce della simulazione 0 per ogni SNR
    for (_, k, run, _), (_, tracks, _) in zip(tasks, results):
        if run != 0:
            continue
        for method, records in tracks.items():
            write_frame(tracks_frame(records, run=0), out_dir / f'tracks_snr{k}_{method}.csv')

    if plots:
        plot_metrics_vs_snr(summary, out_dir)
        time_summary = build_time_summary(metrics)
        for (_, k, run, _), (_, tracks, _) in zip(tasks, results):
            if run != 0:
                continue
            plot_gospa_vs_time(time_summary, cfg.snr_db[k], out_dir / f'gospa_vs_time_snr{k}.svg')
            truth, snapshots = simulate_run(cfg, k, 0)
            frames = {m: tracks_frame(r, run=0) for m, r in tracks.items()}
            plot_doa_tracks(snapshots, cfg.geometry, frames, out_dir / f'doa_tracks_snr{k}.svg', truth.to_frame())
        print(f'wrote {out_dir}/*.svg')
    return summary


def cmd_sensitivity(cfg: RunConfig, plots: bool = True) -> pd.DataFrame:
    """
    GOSPA e RMSE medi di SVALSE per ogni coppia (p^d, p^a) della configurazione.

    Usa il primo SNR della lista e n_runs simulazioni per coppia.

    Returns:
        Tabella p_deact, p_act, gospa_total, gospa_dist, gospa_miss, gospa_false, rmse
    """
    if not cfg.sensitivity:
        raise ConfigError('sensitivity: no (p_deact, p_act) pairs configured')

    out_rows = []
    for p_deact, p_act in cfg.sensitivity:
        pair_cfg = replace(cfg, estimator=replace(cfg.estimator, p_deact=p_deact, p_act=p_act))
        tasks = [(pair_cfg, 0, run, ('svalse',)) for run in range(cfg.n_runs)]
        results = _run_trials(tasks, cfg.workers, f'pd={p_deact:g} pa={p_act:g}')
        report_flags(results)
        rows = [row for trial_rows, *_ in results for row in trial_rows]
        means = average_metrics(pd.DataFrame(rows, columns=METRIC_COLUMNS)[METRIC_FIELDS])
        out_rows.append({
            'p_deact': p_deact,
            'p_act': p_act,
            **{col: means[col] for col in ['gospa_total', 'gospa_dist', 'gospa_miss', 'gospa_false', 'rmse']},
        })

    frame = pd.DataFrame(out_rows)
    out_path = write_frame(frame, cfg.output_dir / 'sensitivity.csv')
    print(f'wrote {out_path} rows={len(frame)}')
    if plots:
        svg = plot_sensitivity(frame, cfg.output_dir / 'sensitivity.svg')
        print(f'wrote {svg}')
    return frame


# ==================== ARGOMENTI ====================

def _apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    """Applica le opzioni da linea di comando sopra i valori del file."""
    changes = {}
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError(f'--seed must be >= 0, got {args.seed}')
        changes['seed'] = args.seed
    if args.out is not None:
        changes['output_dir'] = Path(args.out)
    if getattr(args, 'n_runs', None) is not None:
        if args.n_runs < 1:
            raise ConfigError(f'--n-runs must be >= 1, got {args.n_runs}')
        changes['n_runs'] = args.n_runs
    if getattr(args, 'workers', None) is not None:
        if args.workers < 1:
            raise ConfigError(f'--workers must be >= 1, got {args.workers}')
        changes['workers'] = args.workers
    if getattr(args, 'snr', None):
        try:
            changes['snr_db'] = [float(v) for v in args.snr.split(',') if v.strip()]
        except ValueError:
            raise ConfigError(f'--snr: invalid list {args.snr!r}') from None
        if not changes['snr_db']:
            raise ConfigError('--snr: list must be nonempty')
    return replace(cfg, **changes) if changes else cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='Sequential gridless DOA estimation (SVALSE).')
    parser.add_argument('--config', default='configs/moving.yaml', help='YAML run configuration')
    parser.add_argument('--out', default=None, help='Output directory (overrides project.output_dir)')
    parser.add_argument('--seed', type=int, default=None, help='Master seed (overrides project.seed)')
    parser.add_argument('--verbose', action='store_true', help='Debug logging')
    sub = parser.add_subparsers(dest='command', required=True)

    p_sim = sub.add_parser('simulate', help='Write snapshots.csv and truth.csv')
    p_sim.add_argument('--snr', default='', help='Comma-separated SNR values in dB; the first is used')
    p_sim.add_argument('--run', type=int, default=0, help='Monte Carlo run index for seeding')

    p_est = sub.add_parser('estimate', help='Estimate tracks from a snapshot file')
    p_est.add_argument('--snapshots', default=None, help='Snapshot CSV (default: input.snapshots or <out>/snapshots.csv)')
    p_est.add_argument('--no-sequential', action='store_true', help='Independent VALSE at every step')
    p_est.add_argument('--plot', action='store_true', help='Write doa_tracks.svg with CBF background')
    p_est.add_argument('--truth', default=None, help='Truth CSV drawn on the plot')

    for name, help_text in [('benchmark', 'Monte Carlo SVALSE vs VALSE over the SNR list'),
                            ('sensitivity', 'SVALSE metrics over (p_deact, p_act) pairs')]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument('--n-runs', type=int, default=None, help='Runs per SNR (overrides project.n_runs)')
        p.add_argument('--workers', type=int, default=None, help='Parallel processes')
        p.add_argument('--snr', default='', help='Comma-separated SNR values in dB')
        p.add_argument('--no-plots', action='store_true', help='Skip SVG output')
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Funzione principale: parsing argomenti ed esecuzione del sottocomando.

    Returns:
        Codice di uscita (0 successo, 2 configurazione, 3 dati)
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format='%(levelname)s %(name)s: %(message)s',
    )

    try:
        cfg = _apply_overrides(load_run_config(Path(args.config)), args)
        if args.command == 'simulate':
            if args.run < 0:
                raise ConfigError(f'--run must be >= 0, got {args.run}')
            cmd_simulate(cfg, 0, args.run)
        elif args.command == 'estimate':
            path = args.snapshots or cfg.snapshots_path or cfg.output_dir / 'snapshots.csv'
            cmd_estimate(cfg, Path(path), sequential=not args.no_sequential, plot=args.plot,
                         truth_path=None if args.truth is None else Path(args.truth))
        elif args.command == 'benchmark':
            cmd_benchmark(cfg, plots=not args.no_plots)
        else:
            cmd_sensitivity(cfg, plots=not args.no_plots)
    except ConfigError as exc:
        print(f'config error: {exc}', file=sys.stderr)
        return 2
    except DataError as exc:
        print(f'data error: {exc}', file=sys.stderr)
        return 3
    except OSError as exc:
        print(f'config error: cannot write output ({exc})', file=sys.stderr)
        return 2
    return 0


if __name__ == '__main__':
    sys.exit(main())

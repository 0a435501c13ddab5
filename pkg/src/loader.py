"""
Caricamento della configurazione e lettura/scrittura dei file CSV.

Questo modulo si occupa di:
1. Leggere il file YAML di configurazione (configs/*.yaml) e costruire un RunConfig
   con geometria, sorgenti, parametri dello stimatore e delle metriche
2. Leggere gli snapshot da CSV con controllo stretto dello schema
   (header t,re_0,im_0,...,re_{M-1},im_{M-1})
3. Scrivere snapshot, verita' e tracce su CSV con formato canonico
   (rappresentazione decimale round-trip dei float)

Gli errori di configurazione sollevano ConfigError, quelli sui dati DataError;
entrambi indicano file, riga o chiave coinvolta.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import yaml

from metrics import MetricConfig
from model import ArrayGeometry, EstimatorConfig, Snapshot
from simkit import SourceSpec, Truth
from tracker import TrackRecord

TRACK_COLUMNS = ['run', 't', 'component_id', 'doa_deg', 'pa_rad', 'kappa', 'w_re', 'w_im']


class ConfigError(ValueError):
    """Configurazione non valida (codice di uscita 2)."""


class DataError(ValueError):
    """File di dati non valido (codice di uscita 3)."""


@dataclass
class RunConfig:
    """
    Configurazione completa di un'esecuzione.

    Attributi:
        geometry: Geometria dell'array
        sources: Sorgenti dello scenario simulato
        estimator: Parametri dello stimatore
        metrics: Parametri delle metriche
        snr_db: Lista degli SNR [dB]
        n_runs: Numero di simulazioni Monte Carlo per SNR
        seed: Seed principale
        t_max: Numero di passi temporali
        output_dir: Cartella di output
        workers: Processi paralleli per il benchmark
        sensitivity: Coppie (p_deact, p_act) per l'analisi di sensibilita'
        snapshots_path: File di snapshot da rielaborare (opzionale)
        name: Nome dello scenario
    """
    geometry: ArrayGeometry
    sources: List[SourceSpec]
    estimator: EstimatorConfig
    metrics: MetricConfig
    snr_db: List[float]
    n_runs: int = 1
    seed: int = 0
    t_max: int = 50
    output_dir: Path = Path('outputs')
    workers: int = 1
    sensitivity: List[Tuple[float, float]] = field(default_factory=list)
    snapshots_path: Optional[Path] = None
    name: str = 'scenario'


# ==================== CONFIGURAZIONE YAML ====================

_KEYS = {
    'project': {'name', 't_max', 'seed', 'n_runs', 'snr_db', 'output_dir', 'workers'},
    'array': {'m_sensors', 'spacing_m', 'sound_speed_mps', 'frequency_hz'},
    'estimator': {'l_components', 'p_act', 'p_deact', 'kappa_r', 'prune_d', 'rho0',
                  'max_iter', 'theta_tol', 'snr_init_db'},
    'metrics': {'c_deg', 'c_prime_deg'},
    'input': {'snapshots'},
    'sources': None,
    'sensitivity': None,
}
_SOURCE_KEYS = {'initial_doa', 'amplitude', 'motion', 'window'}
_AMPLITUDE_KEYS = {'model', 'tau', 'value_re', 'value_im'}
_MOTION_KEYS = {'model', 'std_deg'}


def _mapping(value: Any, where: str) -> Dict[str, Any]:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f'{where}: expected a mapping, got {type(value).__name__}')
    return value


def _check_keys(section: Dict[str, Any], allowed: set, where: str) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f'{where}: unknown key(s) {", ".join(f"{where}.{k}" for k in unknown)}')


def _value(section: Dict[str, Any], key: str, cast: Callable, default: Any, where: str) -> Any:
    """Legge section[key] con conversione di tipo; errore con il percorso della chiave."""
    if key not in section or section[key] is None:
        return default
    raw = section[key]
    if isinstance(raw, bool) and cast is not bool:
        raise ConfigError(f'{where}.{key}: invalid value {raw!r}')
    try:
        return cast(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f'{where}.{key}: invalid value {raw!r} ({exc})') from None


def _strict_int(value: Any) -> int:
    if isinstance(value, float) and not value.is_integer():
        raise ValueError('expected an integer')
    return int(value)


def _build(where: str, factory: Callable, **kwargs):
    """Costruisce una dataclass convertendo i ValueError in ConfigError."""
    try:
        return factory(**kwargs)
    except ValueError as exc:
        raise ConfigError(f'{where}: {exc}') from None


def _parse_source(raw: Any, idx: int) -> SourceSpec:
    where = f'sources[{idx}]'
    raw = _mapping(raw, where)
    _check_keys(raw, _SOURCE_KEYS, where)
    if 'initial_doa' not in raw:
        raise ConfigError(f'{where}.initial_doa: missing')

    amp = _mapping(raw.get('amplitude'), f'{where}.amplitude')
    _check_keys(amp, _AMPLITUDE_KEYS, f'{where}.amplitude')
    motion = _mapping(raw.get('motion'), f'{where}.motion')
    _check_keys(motion, _MOTION_KEYS, f'{where}.motion')

    window = raw.get('window', [1, None])
    if not isinstance(window, (list, tuple)) or len(window) != 2:
        raise ConfigError(f'{where}.window: expected [t_start, t_end], got {window!r}')
    try:
        start = _strict_int(window[0])
        end = None if window[1] is None else _strict_int(window[1])
    except (TypeError, ValueError):
        raise ConfigError(f'{where}.window: invalid bounds {window!r}') from None

    value = complex(
        _value(amp, 'value_re', float, 10.0, f'{where}.amplitude'),
        _value(amp, 'value_im', float, 0.0, f'{where}.amplitude'),
    )
    return _build(
        where, SourceSpec,
        initial_doa=_value(raw, 'initial_doa', float, 0.0, where),
        amplitude_model=_value(amp, 'model', str, 'gaussian', f'{where}.amplitude'),
        tau=_value(amp, 'tau', float, 1.0, f'{where}.amplitude'),
        amplitude=value,
        motion=_value(motion, 'model', str, 'static', f'{where}.motion'),
        std_deg=_value(motion, 'std_deg', float, 1.5, f'{where}.motion'),
        window=(start, end),
    )


def parse_run_config(raw: Any, base_dir: Path = Path('.')) -> RunConfig:
    """
    Converte il dizionario YAML in un RunConfig validato.

    Le chiavi mancanti prendono i valori di default; chiavi sconosciute o
    valori non validi sollevano ConfigError con il percorso della chiave.
    """
    raw = _mapping(raw, 'config')
    _check_keys(raw, set(_KEYS), 'config')

    project = _mapping(raw.get('project'), 'project')
    array = _mapping(raw.get('array'), 'array')
    est = _mapping(raw.get('estimator'), 'estimator')
    met = _mapping(raw.get('metrics'), 'metrics')
    inp = _mapping(raw.get('input'), 'input')
    for name in ('project', 'array', 'estimator', 'metrics', 'input'):
        _check_keys(_mapping(raw.get(name), name), _KEYS[name], name)

    # ==================== GEOMETRIA ====================
    geometry = _build(
        'array', ArrayGeometry.from_frequency,
        m_sensors=_value(array, 'm_sensors', _strict_int, 15, 'array'),
        spacing=_value(array, 'spacing_m', float, 3.75, 'array'),
        sound_speed=_value(array, 'sound_speed_mps', float, 1500.0, 'array'),
        frequency_hz=_value(array, 'frequency_hz', float, 200.0, 'array'),
    )

    # ==================== STIMATORE E METRICHE ====================
    defaults = EstimatorConfig()
    estimator = _build(
        'estimator', EstimatorConfig,
        l_components=_value(est, 'l_components', _strict_int, geometry.m_sensors, 'estimator'),
        p_act=_value(est, 'p_act', float, defaults.p_act, 'estimator'),
        p_deact=_value(est, 'p_deact', float, defaults.p_deact, 'estimator'),
        kappa_r=_value(est, 'kappa_r', float, defaults.kappa_r, 'estimator'),
        prune_d=_value(est, 'prune_d', _strict_int, defaults.prune_d, 'estimator'),
        rho0=_value(est, 'rho0', float, defaults.rho0, 'estimator'),
        max_iter=_value(est, 'max_iter', _strict_int, defaults.max_iter, 'estimator'),
        theta_tol=_value(est, 'theta_tol', float, defaults.theta_tol, 'estimator'),
        snr_init_db=_value(est, 'snr_init_db', float, defaults.snr_init_db, 'estimator'),
    )
    metrics = _build(
        'metrics', MetricConfig,
        c=_value(met, 'c_deg', float, 10.0, 'metrics'),
        c_prime=_value(met, 'c_prime_deg', float, 10.0, 'metrics'),
    )

    # ==================== SORGENTI E SENSIBILITA' ====================
    raw_sources = raw.get('sources') or []
    if not isinstance(raw_sources, list):
        raise ConfigError('sources: expected a list')
    sources = [_parse_source(s, i) for i, s in enumerate(raw_sources)]

    raw_sens = raw.get('sensitivity') or []
    if not isinstance(raw_sens, list):
        raise ConfigError('sensitivity: expected a list')
    sensitivity = []
    for i, item in enumerate(raw_sens):
        item = _mapping(item, f'sensitivity[{i}]')
        _check_keys(item, {'p_deact', 'p_act'}, f'sensitivity[{i}]')
        pair = (
            _value(item, 'p_deact', float, defaults.p_deact, f'sensitivity[{i}]'),
            _value(item, 'p_act', float, defaults.p_act, f'sensitivity[{i}]'),
        )
        if not all(0.0 < p < 1.0 for p in pair):
            raise ConfigError(f'sensitivity[{i}]: probabilities must lie in (0, 1), got {pair}')
        sensitivity.append(pair)

    # ==================== PROGETTO ====================
    snr = project.get('snr_db', [20.0])
    if not isinstance(snr, list):
        snr = [snr]
    try:
        snr_db = [float(v) for v in snr]
    except (TypeError, ValueError):
        raise ConfigError(f'project.snr_db: invalid value {snr!r}') from None
    if not snr_db:
        raise ConfigError('project.snr_db: list must be nonempty')

    n_runs = _value(project, 'n_runs', _strict_int, 1, 'project')
    t_max = _value(project, 't_max', _strict_int, 50, 'project')
    workers = _value(project, 'workers', _strict_int, 1, 'project')
    seed = _value(project, 'seed', _strict_int, 0, 'project')
    if n_runs < 1:
        raise ConfigError(f'project.n_runs: must be >= 1, got {n_runs}')
    if t_max < 1:
        raise ConfigError(f'project.t_max: must be >= 1, got {t_max}')
    if workers < 1:
        raise ConfigError(f'project.workers: must be >= 1, got {workers}')
    if seed < 0:
        raise ConfigError(f'project.seed: must be >= 0, got {seed}')

    snapshots = inp.get('snapshots')
    return RunConfig(
        geometry=geometry,
        sources=sources,
        estimator=estimator,
        metrics=metrics,
        snr_db=snr_db,
        n_runs=n_runs,
        seed=seed,
        t_max=t_max,
        output_dir=Path(_value(project, 'output_dir', str, 'outputs', 'project')),
        workers=workers,
        sensitivity=sensitivity,
        snapshots_path=None if snapshots is None else base_dir / str(snapshots),
        name=_value(project, 'name', str, 'scenario', 'project'),
    )


def load_run_config(path: Path) -> RunConfig:
    """
    Carica e valida un file di configurazione YAML.

    Args:
        path: Percorso del file (es. configs/moving.yaml)

    Returns:
        RunConfig
    """
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as exc:
        raise ConfigError(f'{path}: cannot read config ({exc.strerror})') from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, 'problem_mark', None)
        where = f'{path}:{mark.line + 1}' if mark is not None else str(path)
        raise ConfigError(f'{where}: malformed YAML ({getattr(exc, "problem", exc)})') from None
    try:
        return parse_run_config(raw, base_dir=path.parent)
    except ConfigError as exc:
        raise ConfigError(f'{path}: {exc}') from None


# ==================== SNAPSHOT CSV ====================

def snapshot_columns(m_sensors: int) -> List[str]:
    """Header t,re_0,im_0,...,re_{M-1},im_{M-1}."""
    cols = ['t']
    for m in range(m_sensors):
        cols += [f're_{m}', f'im_{m}']
    return cols


def _cell(value: Any, path: Path, line: int, col: str, cast: Callable):
    if value is None or (isinstance(value, float) and np.isnan(value)) or value == '':
        raise DataError(f'{path}:{line}: missing value in column {col} (ragged row)')
    try:
        out = cast(value)
    except (TypeError, ValueError):
        raise DataError(f'{path}:{line}: non-numeric value {value!r} in column {col}') from None
    if isinstance(out, float) and not np.isfinite(out):
        raise DataError(f'{path}:{line}: non-finite value {value!r} in column {col}')
    return out


def parse_snapshots(path: Path, m_sensors: Optional[int] = None) -> List[Snapshot]:
    """
    Legge un file di snapshot con controllo stretto dello schema.

    Args:
        path: File CSV
        m_sensors: Numero di sensori atteso (opzionale)

    Returns:
        Snapshot ordinati per t

    Raises:
        DataError: header errato, righe irregolari, celle non numeriche,
                   t non crescente o numero di sensori diverso da m_sensors
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except FileNotFoundError:
        raise DataError(f'{path}: file not found') from None
    except pd.errors.EmptyDataError:
        raise DataError(f'{path}: empty file') from None
    except pd.errors.ParserError as exc:
        raise DataError(f'{path}: malformed rows ({exc})') from None

    cols = list(frame.columns)
    n_sensors = (len(cols) - 1) // 2
    if n_sensors < 1 or cols != snapshot_columns(n_sensors):
        raise DataError(f'{path}:1: header must be {",".join(snapshot_columns(max(n_sensors, 1)))}')
    if m_sensors is not None and n_sensors != m_sensors:
        raise DataError(f'{path}: file has {n_sensors} sensors, geometry expects {m_sensors}')
    if frame.empty:
        raise DataError(f'{path}: no snapshot rows')

    snapshots = []
    last_t = 0
    for line, row in enumerate(frame.itertuples(index=False, name=None), start=2):
        t = _cell(row[0], path, line, 't', int)
        if t <= last_t:
            raise DataError(f'{path}:{line}: time index {t} is not increasing (previous {last_t})')
        values = [_cell(v, path, line, c, float) for v, c in zip(row[1:], cols[1:])]
        y = np.array(values[0::2]) + 1j * np.array(values[1::2])
        snapshots.append(Snapshot(t=t, y=y))
        last_t = t
    return snapshots


def snapshots_frame(snapshots: Sequence[Snapshot]) -> pd.DataFrame:
    """Tabella degli snapshot nello schema del file CSV."""
    m = snapshots[0].m_sensors if snapshots else 0
    rows = []
    for snap in snapshots:
        row = [snap.t]
        for v in snap.y:
            row += [float(v.real), float(v.imag)]
        rows.append(row)
    return pd.DataFrame(rows, columns=snapshot_columns(m))


def tracks_frame(records: Iterable[TrackRecord], run: int = 0) -> pd.DataFrame:
    """Tabella delle tracce: run,t,component_id,doa_deg,pa_rad,kappa,w_re,w_im, ordinata per (t, component_id)."""
    rows = [
        {
            'run': run,
            't': r.t,
            'component_id': r.component_id,
            'doa_deg': r.doa_deg,
            'pa_rad': r.pa_rad,
            'kappa': r.kappa,
            'w_re': r.weight.real,
            'w_im': r.weight.imag,
        }
        for r in records
    ]
    frame = pd.DataFrame(rows, columns=TRACK_COLUMNS)
    return frame.sort_values(['run', 't', 'component_id'], kind='mergesort').reset_index(drop=True)


def write_frame(frame: pd.DataFrame, out_path: Path) -> Path:
    """Scrive una tabella su CSV creando la cartella se necessario."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out_path, index=False)
    return out_path


def write_snapshots(out_path: Path, snapshots: Sequence[Snapshot]) -> Path:
    return write_frame(snapshots_frame(snapshots), out_path)


def write_truth(out_path: Path, truth: Truth) -> Path:
    return write_frame(truth.to_frame(), out_path)

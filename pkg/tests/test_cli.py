"""Test di configurazione, CSV, report e linea di comando."""

from pathlib import Path

import numpy as np
import pandas as pd
import pytest
import yaml
from numpy.testing import assert_allclose

from cli import main, noise_seed, run_trial, simulate_run, truth_seed
from loader import (
    TRACK_COLUMNS,
    ConfigError,
    DataError,
    load_run_config,
    parse_run_config,
    parse_snapshots,
    snapshot_columns,
    tracks_frame,
    write_snapshots,
)
from metrics import MetricConfig
from model import Snapshot
from report import METRIC_COLUMNS, build_summary, format_table, metric_rows, sort_metrics
from simkit import SourceSpec, build_truth
from tracker import TrackRecord

CONFIGS = Path(__file__).resolve().parent.parent / 'configs'


def _small_config(tmp_path, **extra):
    raw = {
        'project': {'t_max': 3, 'seed': 5, 'n_runs': 1, 'snr_db': [20.0], 'output_dir': str(tmp_path / 'out')},
        'array': {'m_sensors': 6, 'spacing_m': 3.75, 'sound_speed_mps': 1500.0, 'frequency_hz': 200.0},
        'estimator': {'l_components': 3, 'max_iter': 30},
        'sources': [
            {'initial_doa': -30.0, 'amplitude': {'model': 'fixed', 'value_re': 5.0}},
            {'initial_doa': 40.0, 'amplitude': {'model': 'gaussian', 'tau': 4.0}, 'window': [1, 2]},
        ],
    }
    raw.update(extra)
    path = tmp_path / 'run.yaml'
    path.write_text(yaml.safe_dump(raw), encoding='utf-8')
    return path


# ==================== CONFIGURAZIONE ====================

@pytest.mark.parametrize('name', ['moving', 'dropout', 'staggered', 'sensitivity', 'static', 'snr_sweep'])
def test_canned_configs_load(name):
    cfg = load_run_config(CONFIGS / f'{name}.yaml')
    assert cfg.geometry.m_sensors == 15
    assert cfg.geometry.pa_scale == pytest.approx(np.pi)
    assert cfg.estimator.l_components == 15
    assert cfg.t_max == 50


def test_canned_scenarios_content():
    dropout = load_run_config(CONFIGS / 'dropout.yaml')
    assert sorted(s.initial_doa for s in dropout.sources) == [-70, -55, -40, 35, 50, 65]
    assert {s.initial_doa for s in dropout.sources if s.window[1] == 25} == {-55.0, 50.0}
    static = load_run_config(CONFIGS / 'static.yaml')
    assert static.snr_db == [0.0, 10.0, 20.0, 30.0, 40.0]
    assert all(s.amplitude_model == 'fixed' and s.amplitude == 10 for s in static.sources)
    assert len(load_run_config(CONFIGS / 'sensitivity.yaml').sensitivity) >= 3


def test_parse_run_config_defaults():
    cfg = parse_run_config({'array': {'m_sensors': 8}})
    assert cfg.estimator.l_components == 8
    assert cfg.metrics == MetricConfig(10.0, 10.0)
    assert cfg.snr_db == [20.0]
    assert cfg.sources == []


@pytest.mark.parametrize('raw,key', [
    ({'estimator': {'p_act': 1.5}}, 'estimator'),
    ({'estimator': {'bogus': 1}}, 'estimator.bogus'),
    ({'project': {'seed': -1}}, 'project.seed'),
    ({'project': {'n_runs': 2.5}}, 'project.n_runs'),
    ({'array': {'spacing_m': 9.0}}, 'array'),
    ({'sources': [{'amplitude': {'model': 'fixed'}}]}, 'sources[0].initial_doa'),
    ({'sources': [{'initial_doa': 0, 'window': [4, 2]}]}, 'sources[0]'),
    ({'sensitivity': [{'p_deact': 0.0, 'p_act': 0.1}]}, 'sensitivity[0]'),
])
def test_parse_run_config_errors_name_the_key(raw, key):
    with pytest.raises(ConfigError, match=key.replace('[', r'\[').replace(']', r'\]')):
        parse_run_config(raw)


def test_load_run_config_reports_yaml_line(tmp_path):
    path = tmp_path / 'bad.yaml'
    path.write_text('project:\n  seed: 1\n  n_runs: [1\n', encoding='utf-8')
    with pytest.raises(ConfigError, match=r'bad\.yaml:\d+'):
        load_run_config(path)
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / 'missing.yaml')


# ==================== SNAPSHOT CSV ====================

def test_parse_handwritten_snapshots(tmp_path):
    path = tmp_path / 'snaps.csv'
    path.write_text('t,re_0,im_0,re_1,im_1\n1,1.0,0.0,0.5,-0.5\n2,0,1,2,0\n5,1e-3,0,0,3\n', encoding='utf-8')
    snaps = parse_snapshots(path, 2)
    assert [s.t for s in snaps] == [1, 2, 5]
    assert_allclose(snaps[0].y, [1.0, 0.5 - 0.5j])
    assert_allclose(snaps[2].y, [1e-3, 3j])


@pytest.mark.parametrize('text,needle', [
    ('t,re_0,im_0,re_1\n1,1,0,1\n', 'header'),
    ('t,re_0,im_0\n1,1,0\n2,abc,0\n', ':3'),
    ('t,re_0,im_0\n1,1\n', ':2'),
    ('t,re_0,im_0\n2,1,0\n2,1,0\n', 'not increasing'),
    ('t,re_0,im_0\n1,nan,0\n', 'non-finite'),
    ('', 'empty'),
])
def test_parse_snapshots_errors(tmp_path, text, needle):
    path = tmp_path / 'snaps.csv'
    path.write_text(text, encoding='utf-8')
    with pytest.raises(DataError, match=needle):
        parse_snapshots(path)


def test_parse_snapshots_sensor_mismatch(tmp_path):
    path = write_snapshots(tmp_path / 'snaps.csv', [Snapshot(1, [1.0, 2.0, 3.0])])
    with pytest.raises(DataError):
        parse_snapshots(path, 4)


def test_write_then_read_snapshots(tmp_path):
    rng = np.random.default_rng(0)
    snaps = [Snapshot(t, rng.standard_normal(4) + 1j * rng.standard_normal(4)) for t in (1, 2, 3)]
    path = write_snapshots(tmp_path / 'sub' / 'snaps.csv', snaps)
    assert path.read_text(encoding='utf-8').splitlines()[0] == ','.join(snapshot_columns(4))
    back = parse_snapshots(path, 4)
    for a, b in zip(snaps, back):
        assert a.t == b.t
        assert np.array_equal(a.y, b.y)


# ==================== REPORT ====================

def test_metric_rows_and_summary():
    truth = build_truth([SourceSpec(10.0, window=(1, 2))], 3, seed=0)
    records = [TrackRecord(1, 0, 11.0, 0.0, 50.0, 1.0), TrackRecord(2, 0, 10.0, 0.0, 50.0, 1.0),
               TrackRecord(3, 4, -60.0, 0.0, 50.0, 1.0)]
    rows = metric_rows(truth, records, run=0, method='svalse', snr_db=20.0, cfg=MetricConfig())
    frame = pd.DataFrame(rows, columns=METRIC_COLUMNS)
    assert list(frame['gospa_total']) == pytest.approx([1.0, 0.0, 5.0])
    assert frame['rmse'].iloc[:2].tolist() == pytest.approx([1.0, 0.0])
    assert np.isnan(frame['rmse'].iloc[2])

    summary = build_summary(frame)
    assert summary['gospa_total'].iloc[0] == pytest.approx(2.0)
    assert summary['rmse'].iloc[0] == pytest.approx(0.5)
    table = format_table(summary)
    assert 'svalse' in table and table.startswith('=' * 100)


def test_sorted_tables_ignore_computation_order():
    truth = build_truth([SourceSpec(10.0)], 3, seed=0)
    records = [TrackRecord(1, 0, 11.0, 0.0, 50.0, 1.0)]
    rows = []
    for method, snr, run in [('valse', 20.0, 1), ('svalse', 20.0, 1), ('valse', 0.0, 0), ('svalse', 20.0, 0)]:
        rows += metric_rows(truth, records, run=run, method=method, snr_db=snr, cfg=MetricConfig())
    frame = pd.DataFrame(rows, columns=METRIC_COLUMNS).sample(frac=1.0, random_state=3)
    ordered = sort_metrics(frame)
    keys = list(ordered[['method', 'snr_db', 'run', 't']].itertuples(index=False, name=None))
    assert keys == sorted(keys)
    block = ordered[(ordered['method'] == 'svalse') & (ordered['snr_db'] == 20.0)]
    assert list(zip(block['run'], block['t'])) == [(0, 1), (0, 2), (0, 3), (1, 1), (1, 2), (1, 3)]

    shuffled = [TrackRecord(2, 5, 1.0, 0.0, 9.0, 1.0), TrackRecord(1, 7, 2.0, 0.0, 9.0, 1.0),
                TrackRecord(2, 0, 3.0, 0.0, 9.0, 1.0), TrackRecord(1, 3, 4.0, 0.0, 9.0, 1.0)]
    tracks = tracks_frame(shuffled, run=4)
    assert list(zip(tracks['t'], tracks['component_id'])) == [(1, 3), (1, 7), (2, 0), (2, 5)]


def test_seed_derivation():
    assert truth_seed(3, 2) == [3, 0, 2]
    assert noise_seed(3, 0, 2) == [3, 1, 2]
    assert noise_seed(3, 1, 2) != noise_seed(3, 0, 2)


# ==================== LINEA DI COMANDO ====================

def test_simulate_is_byte_identical(tmp_path):
    config = _small_config(tmp_path)
    assert main(['--config', str(config), 'simulate']) == 0
    out = tmp_path / 'out'
    first = (out / 'snapshots.csv').read_bytes(), (out / 'truth.csv').read_bytes()
    assert main(['--config', str(config), 'simulate']) == 0
    assert ((out / 'snapshots.csv').read_bytes(), (out / 'truth.csv').read_bytes()) == first

    frame = pd.read_csv(out / 'snapshots.csv')
    assert len(frame) == 3 and len(frame.columns) == 1 + 2 * 6
    assert main(['--config', str(config), '--seed', '6', 'simulate']) == 0
    assert (out / 'snapshots.csv').read_bytes() != first[0]


def test_simulate_reports_noise_only_steps(tmp_path, capsys):
    sources = [{'initial_doa': -30.0, 'amplitude': {'model': 'fixed', 'value_re': 5.0}, 'window': [1, 2]}]
    config = _small_config(tmp_path, sources=sources)
    assert main(['--config', str(config), 'simulate']) == 0
    assert 'diagnostics: noise_only_step' in capsys.readouterr().out

    cfg = load_run_config(config)
    flags = set()
    simulate_run(cfg, 0, 0, flags)
    assert flags == {'noise_only_step'}
    _, _, trial_flags = run_trial((cfg, 0, 0, ('svalse',)))
    assert trial_flags == {'noise_only_step'}

    assert main(['--config', str(_small_config(tmp_path)), 'simulate']) == 0
    assert 'diagnostics' not in capsys.readouterr().out


def test_benchmark_counts_flagged_simulations(tmp_path, capsys):
    sources = [{'initial_doa': -30.0, 'amplitude': {'model': 'fixed', 'value_re': 5.0}, 'window': [1, 2]}]
    config = _small_config(tmp_path, sources=sources)
    assert main(['--config', str(config), 'benchmark', '--n-runs', '2', '--no-plots']) == 0
    assert 'diagnostics: noise_only_step in 2/2 simulations' in capsys.readouterr().out


def test_estimate_writes_tracks(tmp_path):
    config = _small_config(tmp_path)
    assert main(['--config', str(config), 'simulate']) == 0
    out = tmp_path / 'out'
    assert main(['--config', str(config), 'estimate', '--plot', '--truth', str(out / 'truth.csv')]) == 0
    tracks = pd.read_csv(out / 'tracks.csv')
    assert list(tracks.columns) == TRACK_COLUMNS
    assert (out / 'doa_tracks.svg').exists()
    first = tracks[tracks['t'] == 1]
    assert (first['doa_deg'] + 30.0).abs().min() < 2.0

    assert main(['--config', str(config), 'estimate', '--no-sequential']) == 0
    assert list(pd.read_csv(out / 'tracks.csv').columns) == TRACK_COLUMNS


def test_estimate_exit_codes(tmp_path):
    config = _small_config(tmp_path)
    empty = tmp_path / 'empty.csv'
    empty.write_text('', encoding='utf-8')
    assert main(['--config', str(config), 'estimate', '--snapshots', str(empty)]) == 3
    assert main(['--config', str(tmp_path / 'nope.yaml'), 'simulate']) == 2
    bad = tmp_path / 'bad.yaml'
    bad.write_text('estimator: {p_act: 2}\n', encoding='utf-8')
    assert main(['--config', str(bad), 'simulate']) == 2


def test_benchmark_outputs(tmp_path):
    config = _small_config(tmp_path)
    assert main(['--config', str(config), 'benchmark']) == 0
    out = tmp_path / 'out'
    metrics = pd.read_csv(out / 'metrics.csv')
    assert list(metrics.columns) == METRIC_COLUMNS
    assert len(metrics) == 3 * 2
    assert set(metrics['method']) == {'svalse', 'valse'}

    summary = pd.read_csv(out / 'summary.csv')
    means = metrics.groupby('method')['gospa_total'].mean()
    for row in summary.itertuples(index=False):
        assert row.gospa_total == pytest.approx(means[row.method])
    for name in ('summary.txt', 'tracks_snr0_svalse.csv', 'tracks_snr0_valse.csv',
                 'gospa_vs_snr.svg', 'rmse_vs_snr.svg', 'gospa_vs_time_snr0.svg', 'doa_tracks_snr0.svg'):
        assert (out / name).exists(), name


def test_benchmark_deterministic_across_workers(tmp_path):
    config = _small_config(tmp_path)
    out = tmp_path / 'out'
    args = ['--config', str(config), 'benchmark', '--n-runs', '2', '--snr', '10,30']
    assert main(args + ['--workers', '1']) == 0
    serial = (out / 'metrics.csv').read_bytes(), (out / 'gospa_vs_snr.svg').read_bytes()
    assert main(args + ['--workers', '2']) == 0
    assert ((out / 'metrics.csv').read_bytes(), (out / 'gospa_vs_snr.svg').read_bytes()) == serial
    assert len(pd.read_csv(out / 'metrics.csv')) == 2 * 2 * 3 * 2


def test_sensitivity(tmp_path):
    config = _small_config(tmp_path, sensitivity=[{'p_deact': 0.25, 'p_act': 0.1}, {'p_deact': 0.9, 'p_act': 0.01}])
    assert main(['--config', str(config), 'sensitivity', '--no-plots']) == 0
    frame = pd.read_csv(tmp_path / 'out' / 'sensitivity.csv')
    assert list(frame.columns) == ['p_deact', 'p_act', 'gospa_total', 'gospa_dist', 'gospa_miss', 'gospa_false', 'rmse']
    assert frame[['p_deact', 'p_act']].values.tolist() == [[0.25, 0.1], [0.9, 0.01]]

    plain = _small_config(tmp_path)
    assert main(['--config', str(plain), 'sensitivity']) == 2


def test_cli_override_validation(tmp_path):
    config = _small_config(tmp_path)
    assert main(['--config', str(config), 'benchmark', '--n-runs', '0']) == 2
    assert main(['--config', str(config), 'benchmark', '--snr', 'x']) == 2

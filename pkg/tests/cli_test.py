from __future__ import annotations

import io
import json
import math

import numpy as np
import pandas as pd
import pytest
import yaml
from sparsefair import cli
from sparsefair.cli import EXIT_CHECK_FAILED
from sparsefair.cli import EXIT_INPUT_ERROR
from sparsefair.cli import EXIT_OK
from sparsefair.cli import main
from sparsefair.cli import RunConfig
from sparsefair.cli import SURFACE_RESOLUTION
from sparsefair.cli import surface
from sparsefair.cli import sweep_population
from sparsefair.cli import sweep_sampled
from sparsefair.diagnostics import InvalidParamsError
from sparsefair.helpers import OUTPUT_DIR_ENV
from sparsefair.sparsity import SparsityMeasureSpec

PQ_75_25 = 1 - 1 / math.sqrt(1.25)


@pytest.fixture
def predictions(tmp_path) -> str:
    df = pd.DataFrame(
        {
            'y_true': [1, 0, 1, 0, 1, 0, 0, 1],
            'y_pred': [1, 1, 1, 0, 1, 0, 0, 0],
            'gender': ['F', 'F', 'F', 'F', 'M', 'M', 'M', 'M'],
            'race': ['a', 'a', 'b', 'b', 'a', 'a', 'b', 'b'],
            'age': [21, 35, 48, 62, 19, 33, 51, 70],
        }
    )
    fp = tmp_path / 'predictions.csv'
    df.to_csv(fp, index=False)
    return str(fp)


@pytest.fixture
def regression(tmp_path) -> str:
    df = pd.DataFrame({'y_true': [0.0] * 6, 'y_pred': [1, 2, 3, 2, 3, 4], 'group': ['A'] * 3 + ['B'] * 3})
    fp = tmp_path / 'regression.csv'
    df.to_csv(fp, index=False)
    return str(fp)


def read_json(path) -> dict:
    with open(path, encoding='utf-8') as f:
        return json.load(f)


# --- run configuration ----------------------------------------------------------------------------------------------


def test_run_config_defaults() -> None:
    cfg = RunConfig()
    assert cfg.groups == ['group']
    assert cfg.measure_spec() == SparsityMeasureSpec()
    assert cfg.metric_spec() is None


def test_run_config_compact_grouping() -> None:
    cfg = RunConfig(groups='gender,income,age:5', bins={'income': 3})
    assert cfg.groups == ['gender', 'income', 'age']
    assert cfg.bins == {'age': 5, 'income': 3}
    assert cfg.grouping_spec().continuous_bins == {'age': 5, 'income': 3}


def test_run_config_from_dict() -> None:
    cfg = RunConfig.from_dict({'task': 'Regression', 'criterion': 'SP-W', 'counts': '2,5', 'variance': '2'})
    assert cfg.task == 'regression'
    assert cfg.criterion == 'sp-w'
    assert cfg.variance == 2.0
    assert cfg.to_dict()['criterion'] == 'sp-w'


@pytest.mark.parametrize(
    'kwargs',
    [
        dict(task='ranking'),
        dict(criterion='dp'),
        dict(criterion='sp-weak'),
        dict(agg='median'),
        dict(measure='l0'),
        dict(p=2.0, q=1.0),
        dict(metric='mse'),
        dict(task='regression', metric='f1'),
        dict(task='regression', metric='log_likelihood'),
        dict(groups=''),
    ],
)
def test_run_config_invalid(kwargs) -> None:
    with pytest.raises(InvalidParamsError):
        RunConfig(**kwargs)


# --- evaluate -------------------------------------------------------------------------------------------------------


def test_evaluate(predictions, tmp_path) -> None:
    out = tmp_path / 'report.json'
    code = main(['evaluate', '-i', predictions, '--groups', 'gender', '--measure', 'mpd', '-o', str(out)])
    assert code == EXIT_OK
    payload = read_json(out)
    assert payload['value'] == pytest.approx(0.5)
    assert payload['report']['groups'] == ['F', 'M']
    assert payload['report']['vectors']['1'] == pytest.approx([0.75, 0.25])
    assert [g['population'] for g in payload['groups']] == [4, 4]
    assert payload['rejected_rows'] == 0
    assert payload['config']['measure'] == 'mpd'
    assert payload['schema_version'] == 1


def test_evaluate_stdout(predictions, capsys) -> None:
    assert main(['evaluate', '-i', predictions, '--groups', 'gender']) == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload['value'] == pytest.approx(PQ_75_25, abs=1e-12)


def test_evaluate_is_byte_stable(predictions, tmp_path) -> None:
    a, b = tmp_path / 'a.json', tmp_path / 'b.json'
    args = ['evaluate', '-i', predictions, '--groups', 'gender,race', '--criterion', 'eo', '--measure', 'gini']
    assert main(args + ['-o', str(a)]) == EXIT_OK
    assert main(args + ['-o', str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    assert 'output' not in read_json(a)['config']


def test_evaluate_missing_attribute_rows(tmp_path) -> None:
    fp = tmp_path / 'missing.csv'
    fp.write_text('y_true,y_pred,gender\n1,1,\n0,0,F\n0,0,F\n1,1,M\n1,1,M\n', encoding='utf-8')
    out = tmp_path / 'report.json'
    assert main(['evaluate', '-i', str(fp), '--groups', 'gender', '--measure', 'mpd', '-o', str(out)]) == EXIT_OK
    payload = read_json(out)
    assert payload['rejected_rows'] == 1
    assert payload['value'] == pytest.approx(1.0)
    assert payload['report']['vectors']['1'] == pytest.approx([0.0, 1.0])


def test_evaluate_equalized_odds(predictions, tmp_path) -> None:
    out = tmp_path / 'report.json'
    args = ['evaluate', '-i', predictions, '--groups', 'gender', '--criterion', 'eo', '--metric', 'accuracy']
    assert main(args + ['--measure', 'mpd', '-o', str(out)]) == EXIT_OK
    payload = read_json(out)
    # accuracies 3/4 and 3/4
    assert payload['value'] == pytest.approx(0.0)
    assert payload['report']['metric'] == {'kind': 'accuracy', 'per_class': True}


def test_evaluate_small_groups_warned(predictions, tmp_path) -> None:
    out = tmp_path / 'report.json'
    args = ['evaluate', '-i', predictions, '--groups', 'gender,race', '--min-group-size', '3', '-o', str(out)]
    assert main(args) == EXIT_OK
    payload = read_json(out)
    assert all(g['small'] for g in payload['groups'])
    assert any('minimum group size' in w for w in payload['warnings'])


def test_evaluate_binned_attribute(predictions, tmp_path) -> None:
    out = tmp_path / 'report.json'
    assert main(['evaluate', '-i', predictions, '--groups', 'age:2', '--measure', 'mpd', '-o', str(out)]) == EXIT_OK
    assert [g['attributes'] for g in read_json(out)['groups']] == [{'age': 'q0'}, {'age': 'q1'}]


def test_evaluate_regression(regression, tmp_path) -> None:
    out = tmp_path / 'report.json'
    args = ['evaluate', '-i', regression, '--task', 'regression', '--criterion', 'sp', '--measure', 'mpd']
    assert main(args + ['-o', str(out)]) == EXIT_OK
    assert read_json(out)['value'] == pytest.approx(1 / 3)
    args = ['evaluate', '-i', regression, '--task', 'regression', '--criterion', 'sp-w', '--measure', 'mpd']
    assert main(args + ['-o', str(out)]) == EXIT_OK
    assert read_json(out)['value'] == pytest.approx(1.0)


@pytest.mark.parametrize(
    'args',
    [
        ['evaluate', '--groups', 'gender'],
        ['evaluate', '-i', 'missing.csv', '--groups', 'gender'],
        ['evaluate', '-i', 'DATA', '--groups', 'income'],
        ['evaluate', '-i', 'DATA', '--groups', 'gender', '--criterion', 'sp-w'],
        ['evaluate', '-i', 'DATA', '--groups', 'gender', '--measure', 'pq', '-p', '2', '-q', '1'],
        ['evaluate', '-i', 'DATA', '--groups', 'gender', '--target-class', '7'],
    ],
)
def test_evaluate_input_errors(predictions, args) -> None:
    assert main([predictions if a == 'DATA' else a for a in args]) == EXIT_INPUT_ERROR


def test_invalid_choice_exits() -> None:
    with pytest.raises(SystemExit):
        main(['evaluate', '--measure', 'l0'])


def test_config_file(predictions, tmp_path) -> None:
    config = tmp_path / 'params.yaml'
    section = {'input': predictions, 'groups': 'gender', 'min-group-size': 2}
    p_dicts = {'DEFAULT': {'measure': 'mpd'}, 'evaluate': section}
    with open(config, 'w') as f:
        yaml.dump(p_dicts, f, sort_keys=False)
    out = tmp_path / 'report.json'
    assert main(['-c', str(config), 'evaluate', '-o', str(out)]) == EXIT_OK
    payload = read_json(out)
    assert payload['value'] == pytest.approx(0.5)
    assert payload['config']['min_group_size'] == 2
    # flags override the file
    assert main(['-c', str(config), 'evaluate', '--measure', 'pq', '-o', str(out)]) == EXIT_OK
    assert read_json(out)['value'] == pytest.approx(PQ_75_25, abs=1e-12)


def test_output_dir_env(predictions, tmp_path, monkeypatch) -> None:
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / 'out'))
    assert main(['evaluate', '-i', predictions, '--groups', 'gender', '-o', 'report.json']) == EXIT_OK
    assert (tmp_path / 'out' / 'report.json').is_file()


# --- check ----------------------------------------------------------------------------------------------------------


@pytest.mark.parametrize('measure', ['mpd', 'gini', 'pq'])
def test_check_axioms(measure, tmp_path) -> None:
    out = tmp_path / 'check.json'
    assert main(['check', '--measure', measure, '--trials', '300', '-o', str(out)]) == EXIT_OK
    payload = read_json(out)
    assert payload['all_match'] is True
    assert [r['property'] for r in payload['results']] == ['d1', 'd2', 'd3', 'd4', 'p1', 'p2']
    failing = {r['property'] for r in payload['results'] if r['observed'] == 'fail'}
    assert failing == ({'d1', 'd2', 'd3', 'p2'} if measure == 'mpd' else set())


def test_check_theorems(tmp_path) -> None:
    out = tmp_path / 'check.json'
    args = ['check', '--properties', 't31,t32,t33,t34,t35,t36', '--trials', '300', '-o', str(out)]
    assert main(args) == EXIT_OK
    assert all(r['match'] for r in read_json(out)['results'])


def test_check_mismatch(tmp_path, monkeypatch) -> None:
    monkeypatch.setattr(cli, 'expected_to_hold', lambda prop, spec: False)
    out = tmp_path / 'check.json'
    args = ['check', '--properties', 'd2', '--trials', '50', '--budget', '10', '-o', str(out)]
    assert main(args) == EXIT_CHECK_FAILED
    payload = read_json(out)
    assert payload['all_match'] is False
    assert payload['results'][0]['search']['trials'] == 10


@pytest.mark.parametrize('args', [['--dims', '2'], ['--properties', 'd9'], ['--trials', '0']])
def test_check_input_errors(args) -> None:
    assert main(['check'] + args) == EXIT_INPUT_ERROR


# --- sweeps, surfaces and grids -------------------------------------------------------------------------------------


def test_sweep_population(tmp_path, monkeypatch) -> None:
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path))
    assert main(['sweep', '--counts', '2,5', '--measures', 'mpd,pq', '-o', 'sweep.csv']) == EXIT_OK
    df = pd.read_csv(tmp_path / 'sweep.csv')
    assert list(df['group_count']) == [2, 2, 5, 5]
    assert list(df['measure']) == ['mpd', 'pq(1,2)', 'mpd', 'pq(1,2)']
    assert df['value'].tolist() == pytest.approx([0.4, 0.0384761, 0.4, 0.0198039], abs=1e-6)


def test_sweep_population_function() -> None:
    df = sweep_population([2, 5, 10, 20, 50], [SparsityMeasureSpec('pq')])
    assert df['value'].is_monotonic_decreasing
    assert df['value'].iloc[0] == pytest.approx(1 - 1.4 / math.sqrt(2.12), abs=1e-12)


def test_sweep_sampled(tmp_path) -> None:
    out = tmp_path / 'sweep.csv'
    args = ['sweep', '--mode', 'sampled', '--counts', '2,3', '--seeds', '0,1,2', '--n-per-group', '400']
    assert main(args + ['--measures', 'mpd', '-o', str(out)]) == EXIT_OK
    df = pd.read_csv(out)
    assert list(df['seeds']) == [3, 3]
    assert (df['stderr'] > 0).all()
    assert df['value'].tolist() == pytest.approx([0.4, 0.4], abs=0.1)


def test_sweep_sampled_pq_matches_population() -> None:
    counts = [2, 5, 10, 20, 50]
    measures = [SparsityMeasureSpec('pq')]
    sampled = sweep_sampled(counts, measures, n_per_group=100_000, seeds=[0])
    exp = sweep_population(counts, measures)
    assert (np.diff(sampled['value']) < 0).all()
    assert sampled['value'].tolist() == pytest.approx(exp['value'].tolist(), abs=0.005)


def test_sweep_groupings(predictions, tmp_path) -> None:
    out = tmp_path / 'sweep.csv'
    args = ['sweep', '--mode', 'grouping', '-i', predictions, '--groupings', 'gender;gender,race']
    assert main(args + ['--measures', 'mpd', '-o', str(out)]) == EXIT_OK
    df = pd.read_csv(out)
    assert list(df['group_count']) == [2, 4]
    assert list(df['grouping']) == ['gender', 'gender,race']
    assert df['value'].iloc[0] == pytest.approx(0.5)


@pytest.mark.parametrize('args', [['--counts', ''], ['--mode', 'grouping']])
def test_sweep_input_errors(args) -> None:
    assert main(['sweep'] + args) == EXIT_INPUT_ERROR


@pytest.mark.parametrize(
    'measure, one_hot',
    [
        ('pq', 1 - 1 / math.sqrt(3)),
        ('gini', 2 / 3),
    ],
)
def test_surface(measure, one_hot, tmp_path) -> None:
    out = tmp_path / 'surface.csv'
    assert main(['surface', '--resolution', '4', '--measure', measure, '-o', str(out)]) == EXIT_OK
    df = pd.read_csv(out)
    assert len(df) == 10
    assert (df[['w1', 'w2', 'w3']].sum(axis=1) - 1).abs().max() < 1e-12
    corner = df[(df['w1'] == 0) & (df['w2'] == 0)]
    assert corner['value'].iloc[0] == pytest.approx(one_hot, abs=1e-12)
    center = df[(df['w1'] - 1 / 3).abs() < 1e-12]
    center = center[(center['w2'] - 1 / 3).abs() < 1e-12]
    assert center['value'].iloc[0] == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize('resolution, measure', [(1, 'pq'), (5, 'mpd')])
def test_surface_invalid(resolution, measure) -> None:
    with pytest.raises(InvalidParamsError):
        surface(resolution, SparsityMeasureSpec(measure))


def test_surface_default_resolution(capsys) -> None:
    assert main(['surface', '--measure', 'pq']) == EXIT_OK
    df = pd.read_csv(io.StringIO(capsys.readouterr().out))
    assert len(df) == SURFACE_RESOLUTION * (SURFACE_RESOLUTION + 1) // 2
    center = df[((df['w1'] - 1 / 3).abs() < 1e-12) & ((df['w2'] - 1 / 3).abs() < 1e-12)]
    assert len(center) == 1
    assert center['value'].iloc[0] == pytest.approx(0.0, abs=1e-12)


def test_unwritable_output(tmp_path) -> None:
    blocker = tmp_path / 'blocker'
    blocker.write_text('')
    out = blocker / 'sub' / 'surface.csv'
    assert main(['surface', '--resolution', '4', '-o', str(out)]) == EXIT_INPUT_ERROR


def test_gen_deterministic(tmp_path) -> None:
    a, b = tmp_path / 'a.csv', tmp_path / 'b.csv'
    args = ['gen', '--scenario', 'twogroup_reg', '-n', '50', '--seed', '3']
    assert main(args + ['-o', str(a)]) == EXIT_OK
    assert main(args + ['-o', str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    assert list(pd.read_csv(a).columns) == ['x', 'y_true', 'y_pred', 'group']


def test_gen_noise_free(tmp_path) -> None:
    out = tmp_path / 'gen.csv'
    args = ['gen', '--scenario', 'twogroup_reg', '-n', '20', '--noise-variances', '0,0', '-o', str(out)]
    assert main(args) == EXIT_OK
    df = pd.read_csv(out)
    assert (df['y_true'] == df['y_pred']).all()


def test_gen_then_evaluate(tmp_path) -> None:
    data = tmp_path / 'gen.csv'
    out = tmp_path / 'report.json'
    assert main(['gen', '--scenario', 'multigroup_cls', '-n', '400', '--n-groups', '4', '-o', str(data)]) == EXIT_OK
    assert main(['evaluate', '-i', str(data), '--measure', 'mpd', '--target-class', '1', '-o', str(out)]) == EXIT_OK
    payload = read_json(out)
    assert len(payload['groups']) == 4
    assert payload['value'] == pytest.approx(0.4, abs=0.2)


def test_pq_grid(predictions, tmp_path) -> None:
    out = tmp_path / 'grid.csv'
    args = ['pq-grid', '-i', predictions, '--groups', 'gender', '--p-values', '0.5,1,2', '--q-values', '1.5,2']
    assert main(args + ['-o', str(out)]) == EXIT_OK
    df = pd.read_csv(out)
    assert list(zip(df['p'], df['q'])) == [(0.5, 1.5), (0.5, 2.0), (1.0, 1.5), (1.0, 2.0)]
    assert df['value'].iloc[3] == pytest.approx(PQ_75_25, abs=1e-12)
    assert (df['value'] >= 0).all()

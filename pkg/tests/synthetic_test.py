from __future__ import annotations

import numpy as np
import pytest
from sparsefair.diagnostics import DegenerateFitError
from sparsefair.diagnostics import InvalidParamsError
from sparsefair.groups import ClassificationData
from sparsefair.metrics import class_rate_matrix
from sparsefair.metrics import eo_regression
from sparsefair.sparsity import SparsityMeasureSpec
from sparsefair.synthetic import fit_simple_ols
from sparsefair.synthetic import gen_multigroup_cls
from sparsefair.synthetic import gen_twogroup_cls
from sparsefair.synthetic import gen_twogroup_reg
from sparsefair.synthetic import generate
from sparsefair.synthetic import group_sizes
from sparsefair.synthetic import multigroup_rates
from sparsefair.synthetic import Scenario
from sparsefair.synthetic import ScenarioSpec


@pytest.mark.parametrize(
    'k, exp',
    [
        (2, [0.5, 0.9]),
        (5, [0.5, 0.6, 0.7, 0.8, 0.9]),
        (3, [0.5, 0.7, 0.9]),
    ],
)
def test_multigroup_rates(k, exp) -> None:
    rates = multigroup_rates(k)
    np.testing.assert_allclose(rates.column(1), exp, atol=1e-15)
    np.testing.assert_allclose(rates.column(0), 1 - np.array(exp), atol=1e-15)
    assert rates.groups == tuple(range(k))


def test_multigroup_rates_invalid() -> None:
    with pytest.raises(InvalidParamsError):
        multigroup_rates(1)


@pytest.mark.parametrize('n, k, exp', [(101, 2, [51, 50]), (10, 3, [4, 3, 3]), (6, 6, [1] * 6)])
def test_group_sizes(n, k, exp) -> None:
    np.testing.assert_array_equal(group_sizes(n, k), exp)


@pytest.mark.parametrize('n, k', [(2, 3), (5, 0)])
def test_group_sizes_invalid(n, k) -> None:
    with pytest.raises(InvalidParamsError):
        group_sizes(n, k)


def test_multigroup_cls() -> None:
    data, rates = gen_multigroup_cls(101, 2, seed=4)
    assert isinstance(data, ClassificationData)
    assert len(data) == 101
    assert np.sum(data.group == 0) == 51
    np.testing.assert_array_equal(data.y_true, data.y_pred)
    assert data.classes == (0, 1)
    assert rates.column(1) == pytest.approx([0.5, 0.9])


def test_multigroup_cls_empirical_rates() -> None:
    data, rates = gen_multigroup_cls(100_000, 5, seed=1)
    np.testing.assert_allclose(class_rate_matrix(data).rates, rates.rates, atol=0.02)


def test_multigroup_cls_deterministic() -> None:
    a, _ = gen_multigroup_cls(500, 4, seed=9)
    b, _ = gen_multigroup_cls(500, 4, seed=9)
    c, _ = gen_multigroup_cls(500, 4, seed=10)
    np.testing.assert_array_equal(a.y_true, b.y_true)
    assert not np.array_equal(a.y_true, c.y_true)


def test_twogroup_cls() -> None:
    data = gen_twogroup_cls(40_000, seed=2)
    rates = class_rate_matrix(data)
    assert rates.groups == ('A', 'B')
    np.testing.assert_allclose(rates.column(1), [0.5, 0.8], atol=0.02)


def test_twogroup_reg() -> None:
    data, x = gen_twogroup_reg(20_000, seed=5)
    a, b = data.group == 'A', data.group == 'B'
    assert x[a].mean() == pytest.approx(30, abs=0.1)
    assert x[b].mean() == pytest.approx(10, abs=0.1)
    assert x[a].var() == pytest.approx(4, rel=0.1)
    np.testing.assert_array_equal(data.y_pred, x)
    report = eo_regression(data, measure=SparsityMeasureSpec('mpd'))
    assert report.vectors['mse'] == pytest.approx([10.0, 1.0], rel=0.1)


def test_twogroup_reg_noise_free() -> None:
    data, _ = gen_twogroup_reg(100, seed=0, noise_variances=(0.0, 0.0))
    np.testing.assert_array_equal(data.y_true, data.y_pred)
    assert eo_regression(data, measure=SparsityMeasureSpec('mpd')).value == 0.0


def test_twogroup_reg_deterministic() -> None:
    a, _ = gen_twogroup_reg(50, seed=3)
    b, _ = gen_twogroup_reg(50, seed=3)
    np.testing.assert_array_equal(a.y_true, b.y_true)


@pytest.mark.parametrize(
    'x, y, exp',
    [
        ([0, 1, 2], [1, 3, 5], (1.0, 2.0)),
        ([1, 2, 3, 4], [2, 2, 2, 2], (2.0, 0.0)),
        ([0, 0, 1, 1], [0, 2, 1, 3], (1.0, 1.0)),
    ],
)
def test_fit_simple_ols(x, y, exp) -> None:
    assert fit_simple_ols(x, y) == pytest.approx(exp, abs=1e-12)


@pytest.mark.parametrize('x, y', [([1.0], [2.0]), ([3, 3, 3], [1, 2, 3]), ([1, 2], [1, 2, 3])])
def test_fit_simple_ols_degenerate(x, y) -> None:
    with pytest.raises(DegenerateFitError):
        fit_simple_ols(x, y)


def test_fit_simple_ols_recovers_slope() -> None:
    data, x = gen_twogroup_reg(20_000, seed=6)
    b0, b1 = fit_simple_ols(x, data.y_true)
    assert b1 == pytest.approx(1.0, abs=0.02)
    assert b0 == pytest.approx(0.0, abs=0.5)


@pytest.mark.parametrize(
    'kwargs',
    [
        dict(scenario='unknown'),
        dict(scenario='multigroup_cls', n_groups=1),
        dict(scenario='multigroup_cls', n=3, n_groups=4),
        dict(scenario='twogroup_cls', n=1),
        dict(scenario='twogroup_reg', n=3),
        dict(scenario='twogroup_reg', noise_variances=(1.0, -1.0)),
        dict(scenario='twogroup_reg', noise_variances=(1.0,)),
        dict(n=10.5),
    ],
)
def test_scenario_spec_invalid(kwargs) -> None:
    with pytest.raises(InvalidParamsError):
        ScenarioSpec(**kwargs)


def test_scenario_spec_from_dict() -> None:
    spec = ScenarioSpec.from_dict({'scenario': 'TWOGROUP_REG', 'n': 10, 'measure': 'pq'})
    assert spec.scenario is Scenario.TWOGROUP_REG
    assert spec.n == 10
    assert spec.noise_variances == (10.0, 1.0)


@pytest.mark.parametrize('scenario', list(Scenario))
def test_generate_columns(scenario) -> None:
    df = generate(ScenarioSpec(scenario, n=30, n_groups=3, seed=1))
    assert len(df) == 30
    assert {'y_true', 'y_pred', 'group'} <= set(df.columns)
    assert ('x' in df.columns) is (scenario is Scenario.TWOGROUP_REG)


def test_generate_ols_predictor() -> None:
    spec = ScenarioSpec(Scenario.TWOGROUP_REG, n=200, seed=2)
    df = generate(spec, predictor='ols')
    b0, b1 = fit_simple_ols(df['x'], df['y_true'])
    np.testing.assert_allclose(df['y_pred'], b0 + b1 * df['x'])
    with pytest.raises(InvalidParamsError):
        generate(spec, predictor='knn')


def test_generate_deterministic() -> None:
    spec = ScenarioSpec(Scenario.MULTIGROUP_CLS, n=100, n_groups=4, seed=8)
    assert generate(spec).equals(generate(spec))

from __future__ import annotations

import numpy as np
import pytest
from sparsefair.diagnostics import InvalidParamsError
from sparsefair.sparsity import Measure
from sparsefair.sparsity import SparsityMeasureSpec
from sparsefair.sparsity import sparsity
from sparsefair.verifier import AXIOMS
from sparsefair.verifier import check_axiom
from sparsefair.verifier import check_theorem
from sparsefair.verifier import CheckReport
from sparsefair.verifier import counterexample_search
from sparsefair.verifier import expected_to_hold
from sparsefair.verifier import PropertyId
from sparsefair.verifier import THEOREMS
from sparsefair.verifier import trial_rng
from sparsefair.verifier import _trim
from sparsefair.verifier import _trim_pair

TRIALS = 2000
MPD_FAILS = (PropertyId.D1_ROBIN_HOOD, PropertyId.D2_SCALING, PropertyId.D3_RISING_TIDE, PropertyId.P2_BABIES)


@pytest.fixture
def pq() -> SparsityMeasureSpec:
    return SparsityMeasureSpec(Measure.PQ)


def test_property_ids() -> None:
    assert [p.value for p in AXIOMS] == ['d1', 'd2', 'd3', 'd4', 'p1', 'p2']
    assert [p.value for p in THEOREMS] == ['t31', 't32', 't33', 't34', 't35', 't36']


@pytest.mark.parametrize('measure', ['pq', 'gini'])
@pytest.mark.parametrize('prop', AXIOMS)
def test_expected_table_ideal_measures(prop, measure) -> None:
    assert expected_to_hold(prop, SparsityMeasureSpec(measure))


@pytest.mark.parametrize('prop', AXIOMS)
def test_expected_table_mpd(prop) -> None:
    exp = prop in (PropertyId.D4_CLONING, PropertyId.P1_BILL_GATES)
    assert expected_to_hold(prop, SparsityMeasureSpec('mpd')) is exp


@pytest.mark.parametrize('prop', THEOREMS)
def test_theorems_always_expected(prop) -> None:
    assert expected_to_hold(prop, SparsityMeasureSpec('mpd'))


@pytest.mark.parametrize('measure', [SparsityMeasureSpec('pq'), SparsityMeasureSpec('gini')])
@pytest.mark.parametrize('prop', AXIOMS)
def test_axioms_hold_for_ideal_measures(prop, measure) -> None:
    report = check_axiom(prop, measure, trials=TRIALS)
    assert report.trials == TRIALS
    assert report.passed, report.first_counterexample


@pytest.mark.parametrize('p, q', [(0.5, 1.5), (1, 3)])
@pytest.mark.parametrize('prop', AXIOMS)
def test_axioms_hold_for_other_pq_exponents(prop, p, q) -> None:
    assert check_axiom(prop, SparsityMeasureSpec('pq', p, q), trials=500).passed


@pytest.mark.parametrize('prop', [PropertyId.D4_CLONING, PropertyId.P1_BILL_GATES])
def test_mpd_satisfied_axioms(prop) -> None:
    assert check_axiom(prop, SparsityMeasureSpec('mpd'), trials=TRIALS).passed


@pytest.mark.parametrize('prop', MPD_FAILS)
def test_mpd_violated_axioms(prop) -> None:
    report = check_axiom(prop, SparsityMeasureSpec('mpd'), trials=TRIALS)
    assert not report.passed
    ce = report.first_counterexample
    assert ce is not None
    assert {'trial', 'inputs', 'observed', 'expected'} <= set(ce)


@pytest.mark.parametrize('prop', MPD_FAILS)
def test_counterexample_search_mpd(prop) -> None:
    report = counterexample_search(prop, SparsityMeasureSpec('mpd'), budget=100)
    assert report.failures == 1
    assert report.trials <= 100
    assert report.first_counterexample is not None


def test_counterexample_replays() -> None:
    report = counterexample_search(PropertyId.D1_ROBIN_HOOD, SparsityMeasureSpec('mpd'), budget=100)
    inputs = report.first_counterexample['inputs']
    w = np.array(inputs['w'])
    moved = w.copy()
    moved[inputs['from_index']] -= inputs['alpha']
    moved[inputs['to_index']] += inputs['alpha']
    spec = SparsityMeasureSpec('mpd')
    assert sparsity(moved, spec) >= sparsity(w, spec) - 1e-12


@pytest.mark.parametrize('prop', AXIOMS)
def test_counterexample_search_pq_finds_nothing(prop, pq) -> None:
    report = counterexample_search(prop, pq, budget=100)
    assert report.passed
    assert report.trials == 100


@pytest.mark.parametrize('prop', THEOREMS)
def test_theorems(prop) -> None:
    report = check_theorem(prop, trials=TRIALS)
    assert report.passed, report.first_counterexample


def test_theorems_custom_pairs() -> None:
    assert check_theorem(PropertyId.T31_MAX, trials=200, pq_pairs=[(0.3, 0.7)]).passed
    with pytest.raises(InvalidParamsError):
        check_theorem(PropertyId.T31_MAX, trials=10, pq_pairs=[(2.0, 1.0)])


def test_wrong_property_kind(pq) -> None:
    with pytest.raises(InvalidParamsError):
        check_axiom(PropertyId.T31_MAX, pq)
    with pytest.raises(InvalidParamsError):
        check_theorem(PropertyId.D1_ROBIN_HOOD)
    with pytest.raises(ValueError):
        check_axiom('d9', pq)


@pytest.mark.parametrize('trials, dims', [(0, (2, 64)), (10, (1, 5)), (10, (8, 4))])
def test_invalid_run_parameters(trials, dims, pq) -> None:
    with pytest.raises(InvalidParamsError):
        check_axiom(PropertyId.D2_SCALING, pq, trials=trials, dim_range=dims)


def test_invalid_budget(pq) -> None:
    with pytest.raises(InvalidParamsError):
        counterexample_search(PropertyId.D1_ROBIN_HOOD, pq, budget=0)


def test_determinism() -> None:
    spec = SparsityMeasureSpec('mpd')
    a = check_axiom(PropertyId.D3_RISING_TIDE, spec, trials=300, seed=7)
    b = check_axiom(PropertyId.D3_RISING_TIDE, spec, trials=300, seed=7)
    assert a.to_dict() == b.to_dict()


def test_trial_rng_streams() -> None:
    assert trial_rng(1, 2).random() == trial_rng(1, 2).random()
    assert trial_rng(1, 2).random() != trial_rng(1, 3).random()


def test_transform_ignored_by_axiom_checks() -> None:
    report = check_axiom(PropertyId.D2_SCALING, SparsityMeasureSpec('pq', transform='exp'), trials=200)
    assert report.passed
    assert report.measure.transform.value == 'none'


def test_check_report_invariants(pq) -> None:
    with pytest.raises(ValueError):
        CheckReport(PropertyId.D1_ROBIN_HOOD, pq, trials=1, failures=2, first_counterexample={'x': 1})
    with pytest.raises(ValueError):
        CheckReport(PropertyId.D1_ROBIN_HOOD, pq, trials=3, failures=1)
    with pytest.raises(ValueError):
        CheckReport(PropertyId.D1_ROBIN_HOOD, pq, trials=3, failures=0, first_counterexample={'x': 1})


def test_check_report_merge(pq) -> None:
    a = CheckReport(PropertyId.D1_ROBIN_HOOD, pq, trials=5)
    b = CheckReport(PropertyId.D1_ROBIN_HOOD, pq, trials=3, failures=1, first_counterexample={'trial': 6})
    c = CheckReport(PropertyId.D1_ROBIN_HOOD, pq, trials=2, failures=1, first_counterexample={'trial': 9})
    left, right = a.merge(b).merge(c), a.merge(b.merge(c))
    assert left.to_dict() == right.to_dict()
    assert left.trials == 10
    assert left.failures == 2
    assert left.first_counterexample == {'trial': 6}
    with pytest.raises(ValueError):
        a.merge(CheckReport(PropertyId.D2_SCALING, pq, trials=1))


def test_check_report_to_dict(pq) -> None:
    d = CheckReport(PropertyId.P2_BABIES, pq, trials=4, seed=3).to_dict()
    assert d['property'] == 'p2'
    assert d['passed'] is True
    assert d['measure'] == {'kind': 'pq', 'transform': 'none', 'p': 1.0, 'q': 2.0}
    assert d['seed'] == 3


@pytest.mark.parametrize('d', [4, 16, 64])
@pytest.mark.parametrize('q', [1.5, 2.0, 3.0])
def test_trim_pair_extremes(d, q) -> None:
    for t in range(50):
        rng = trial_rng(3, t)
        bottom = rng.uniform(0.01, 0.2)
        inner1, inner2, scale = _trim_pair(rng, d, q, bottom)
        assert inner1.size == inner2.size == d - 2
        assert bottom < inner1.min() and inner1.max() < 1.0
        assert scale * bottom < inner2.min() and inner2.max() < scale
        assert np.sum(inner2**q) == pytest.approx(scale**q * np.sum(inner1**q))


def test_trim_trials_report_inputs() -> None:
    for t in range(100):
        ok, details = _trim(trial_rng(0, t), 4 + t % 20, [(1.0, 2.0), (0.5, 1.5)])
        assert ok
        assert set(details) == {'inputs', 'observed', 'expected'}

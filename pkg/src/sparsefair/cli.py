from __future__ import annotations

import argparse
import dataclasses
import inspect
import logging
import sys
import warnings
from typing import Any
from typing import Callable
from typing import Sequence

import numpy as np
import pandas as pd
from sparsefair import dataio
from sparsefair.diagnostics import DataWarning
from sparsefair.diagnostics import InvalidParamsError
from sparsefair.groups import EvalData
from sparsefair.groups import GroupingSpec
from sparsefair.groups import GroupTable
from sparsefair.groups import Partition
from sparsefair.groups import partition
from sparsefair.helpers import listcast
from sparsefair.helpers import load_parameters
from sparsefair.helpers import output_path
from sparsefair.helpers import parse_grouping
from sparsefair.helpers import split_list
from sparsefair.helpers import stderr
from sparsefair.metrics import Aggregation
from sparsefair.metrics import Criterion
from sparsefair.metrics import MetricReport
from sparsefair.metrics import PerfMetricSpec
from sparsefair.metrics import evaluate
from sparsefair.metrics import sp_classification
from sparsefair.sparsity import Measure
from sparsefair.sparsity import SparsityMeasureSpec
from sparsefair.sparsity import sparsity_rows
from sparsefair.synthetic import Scenario
from sparsefair.synthetic import ScenarioSpec
from sparsefair.synthetic import gen_multigroup_cls
from sparsefair.synthetic import generate
from sparsefair.synthetic import multigroup_rates
from sparsefair.verifier import AXIOMS
from sparsefair.verifier import PropertyId
from sparsefair.verifier import check_axiom
from sparsefair.verifier import check_theorem
from sparsefair.verifier import counterexample_search
from sparsefair.verifier import expected_to_hold

logger = logging.getLogger('sparsefair')

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INPUT_ERROR = 0, 1, 2
REGRESSION_ONLY = (Criterion.SP_WEAK.value, Criterion.SP_W.value)
P_GRID = tuple(round(0.1 * i, 10) for i in range(1, 10))
Q_GRID = tuple(round(1.0 + 0.1 * i, 10) for i in range(1, 16))
FILE_OPTIONS = ('input', 'output')
SURFACE_RESOLUTION = 61


@dataclasses.dataclass
class RunConfig:
    """Resolved options of an evaluation run."""

    task: str = 'classification'  #: Task, ``classification`` or ``regression``.
    criterion: str = 'sp'  #: Fairness criterion.
    measure: str = 'pq'  #: Sparsity measure.
    p: float = 1.0  #: Inner norm exponent of the PQ Index.
    q: float = 2.0  #: Outer norm exponent of the PQ Index.
    transform: str = 'none'  #: Positivity transform.
    metric: str | None = None  #: Per-group performance metric of the ``eo`` criterion.
    variance: float | None = None  #: Residual variance of the Gaussian log-likelihood.
    per_class: bool = True  #: Flag to evaluate classification metrics one-vs-rest per class.
    agg: str = 'max'  #: Aggregation over the classes.
    label: str = 'y_true'  #: True label column.
    prediction: str = 'y_pred'  #: Prediction column.
    groups: Any = ('group',)  #: Sensitive attribute columns, a list or the compact ``'a,b,c:5'`` form.
    bins: dict[str, int] = dataclasses.field(default_factory=dict)  #: Quantile bins of continuous attributes.
    classes: Any = None  #: Explicit class set.
    min_group_size: int = 1  #: Groups with fewer rows are flagged.
    drop_small_groups: bool = False  #: Flag to drop small groups and groups with undefined cells.
    target_class: Any = None  #: Restrict the classification criteria to one class.
    seed: int = 0  #: Seed, recorded for reproducibility.
    input: str | None = None  #: Input CSV file.
    output: str | None = None  #: Output file, standard output if not given.

    def __post_init__(self) -> None:
        self.task = str(self.task).lower()
        if self.task not in ('classification', 'regression'):
            raise InvalidParamsError(f'Task can be only classification or regression. Given {self.task}.')
        try:
            self.criterion = Criterion(str(self.criterion).lower()).value
        except ValueError:
            raise InvalidParamsError(f'Unknown criterion {self.criterion}. Valid criteria are sp, eo, sp-weak, sp-w.')
        if self.task == 'classification' and self.criterion in REGRESSION_ONLY:
            raise InvalidParamsError(f'Criterion {self.criterion} is defined only for regression.')
        try:
            self.agg = Aggregation(str(self.agg).lower()).value
        except ValueError:
            raise InvalidParamsError(f'Aggregation can be only max, mean or sum. Given {self.agg}.')

        attrs, bins = parse_grouping(self.groups)
        self.groups = attrs
        self.bins = {**bins, **{str(k): int(v) for k, v in dict(self.bins or {}).items()}}
        if self.classes is not None:
            self.classes = split_list(self.classes)
        if self.variance is not None:
            self.variance = float(self.variance)

        # validation of the measure and metric specs
        self.measure_spec()
        metric = self.metric_spec()
        if metric is not None and metric.kind.is_regression != (self.task == 'regression'):
            raise InvalidParamsError(f'Metric {metric.kind.value} is not defined for {self.task}.')

    @classmethod
    def from_dict(cls, param: dict[str, Any]) -> RunConfig:
        return cls(**{k: v for k, v in param.items() if k in inspect.signature(cls).parameters})

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def measure_spec(self) -> SparsityMeasureSpec:
        return SparsityMeasureSpec(self.measure, self.p, self.q, self.transform)

    def metric_spec(self) -> PerfMetricSpec | None:
        if self.metric is None:
            return None
        return PerfMetricSpec(self.metric, self.per_class, self.variance)

    def grouping_spec(self) -> GroupingSpec:
        return GroupingSpec(self.groups, self.bins, self.min_group_size, self.drop_small_groups)


def _unique(messages: Sequence[str]) -> list[str]:
    return list(dict.fromkeys(messages))


def _labelled(data: EvalData, table: GroupTable) -> Partition:
    return {table.groups[int(gid)].label: idx for gid, idx in partition(data).items()}


def _load(cfg: RunConfig, grouping: GroupingSpec | None = None) -> tuple[EvalData, GroupTable, Partition]:
    if cfg.input is None:
        raise InvalidParamsError('An input CSV file is required.')
    df = dataio.read_table(cfg.input)
    grouping = grouping or cfg.grouping_spec()
    data, table = dataio.load_data(df, cfg.task, grouping, cfg.label, cfg.prediction, cfg.classes)
    return data, table, _labelled(data, table)


def _evaluate(cfg: RunConfig, data: EvalData, part: Partition, measure: SparsityMeasureSpec) -> MetricReport:
    return evaluate(
        data,
        cfg.criterion,
        measure,
        cfg.metric_spec(),
        cfg.agg,
        part,
        cfg.drop_small_groups,
        cfg.target_class,
    )


def _emit_json(payload: dict[str, Any], output: str | None) -> None:
    if output is None:
        sys.stdout.write(dataio.dumps(payload))
        return
    p = dataio.write_json(output_path(output), payload)
    logger.info(f'Report written to {p}.')


def _emit_csv(df: pd.DataFrame, output: str | None) -> None:
    if output is None:
        sys.stdout.write(df.to_csv(index=False, lineterminator='\n', float_format='%.17g'))
        return
    p = dataio.write_csv(output_path(output), df)
    logger.info(f'Table written to {p}.')


# -------------------------------------------------------------------------------------------------------------------
# commands


def cmd_evaluate(params: dict[str, Any]) -> int:
    """Evaluate one fairness criterion on a CSV file of predictions and write the JSON report."""
    cfg = RunConfig.from_dict(params)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter('always')
        data, table, part = _load(cfg)
        report = _evaluate(cfg, data, part, cfg.measure_spec())
    messages = _unique([str(w.message) for w in caught if issubclass(w.category, DataWarning)])
    for m in messages:
        logger.warning(m)

    payload = {
        'config': {k: v for k, v in cfg.to_dict().items() if k not in FILE_OPTIONS},
        'groups': table.to_records(),
        'rejected_rows': table.rejected_rows,
        'report': report.to_dict(),
        'value': report.value,
        'warnings': messages,
    }
    _emit_json(payload, cfg.output)
    return EXIT_OK


def cmd_check(params: dict[str, Any]) -> int:
    """Check sparsity properties and theorems, exit code 1 if the outcome differs from the expected one."""
    props = [PropertyId(str(p).lower()) for p in split_list(params.get('properties') or [p.value for p in AXIOMS])]
    spec = SparsityMeasureSpec(params.get('measure', 'pq'), params.get('p', 1.0), params.get('q', 2.0))
    trials = int(params.get('trials', 10_000))
    dims = tuple(split_list(params.get('dims', (2, 64)), int))
    seed = int(params.get('seed', 0))
    budget = int(params.get('budget', 100))
    if len(dims) != 2:
        raise InvalidParamsError(f'Dimension range needs two values. Given {dims}.')

    results, ok = [], True
    for prop in props:
        expected = expected_to_hold(prop, spec)
        if prop.is_axiom:
            report = check_axiom(prop, spec, trials, dims, seed)
        else:
            report = check_theorem(prop, trials, dims, seed)
        row = {'expected': 'pass' if expected else 'fail', 'observed': 'pass' if report.passed else 'fail'}
        if not expected and report.passed:
            search = counterexample_search(prop, spec, budget, seed)
            row['search'] = search.to_dict()
            row['observed'] = 'pass' if search.passed else 'fail'
        row['match'] = row['observed'] == row['expected']
        ok &= row['match']
        results.append({**report.to_dict(), **row})
        logger.info(f'{prop.value} {spec}: expected {row["expected"]}, observed {row["observed"]}.')

    payload = {
        'measure': spec.to_dict(),
        'trials': trials,
        'dims': list(dims),
        'seed': seed,
        'results': results,
        'all_match': ok,
    }
    _emit_json(payload, params.get('output'))
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def _measures(params: dict[str, Any]) -> list[SparsityMeasureSpec]:
    p, q = params.get('p', 1.0), params.get('q', 2.0)
    transform = params.get('transform', 'none')
    return [SparsityMeasureSpec(m, p, q, transform) for m in split_list(params.get('measures', 'mpd,pq'))]


def _row(
    group_count: int, criterion: str, measure: str, value: float, err: float = 0.0, seeds: int = 0, grouping: str = ''
) -> dict[str, Any]:
    return {
        'grouping': grouping,
        'group_count': group_count,
        'criterion': criterion,
        'measure': measure,
        'value': value,
        'stderr': err,
        'seeds': seeds,
    }


def sweep_population(
    counts: Sequence[int], measures: Sequence[SparsityMeasureSpec], agg: str = 'max', target_class: Any = 1
) -> pd.DataFrame:
    """Statistical parity of the population class rates of the multigroup scenario, for every group count."""
    rows = []
    for k in counts:
        rates = multigroup_rates(int(k))
        for spec in measures:
            value = sp_classification(rates, spec, agg, target_class).value
            rows.append(_row(int(k), 'sp', str(spec), value))
    return pd.DataFrame(rows)


def sweep_sampled(
    counts: Sequence[int],
    measures: Sequence[SparsityMeasureSpec],
    n_per_group: int,
    seeds: Sequence[int],
    agg: str = 'max',
    target_class: Any = 1,
) -> pd.DataFrame:
    """Statistical parity of sampled multigroup labels, mean and standard error over the seeds."""
    rows = []
    for k in counts:
        values: dict[str, list[float]] = {str(spec): [] for spec in measures}
        for seed in seeds:
            data, _ = gen_multigroup_cls(int(k) * n_per_group, int(k), int(seed))
            for spec in measures:
                values[str(spec)].append(evaluate(data, Criterion.SP, spec, agg=agg, target_class=target_class).value)
        for name, v in values.items():
            rows.append(_row(int(k), 'sp', name, float(np.mean(v)), stderr(v), len(v)))
    return pd.DataFrame(rows)


def sweep_groupings(cfg: RunConfig, groupings: Sequence[str], measures: Sequence[SparsityMeasureSpec]) -> pd.DataFrame:
    """Evaluate a criterion on a CSV file at several grouping granularities."""
    rows = []
    for text in groupings:
        attrs, bins = parse_grouping(text)
        grouping = GroupingSpec(attrs, bins, cfg.min_group_size, cfg.drop_small_groups)
        data, table, part = _load(cfg, grouping)
        for spec in measures:
            report = _evaluate(cfg, data, part, spec)
            rows.append(_row(len(part), cfg.criterion, str(spec), report.value, grouping=text))
    return pd.DataFrame(rows)


def cmd_sweep(params: dict[str, Any]) -> int:
    """Fairness values as the number of groups grows, as a plot-ready CSV table."""
    mode = params.get('mode', 'population')
    measures = _measures(params)
    agg = params.get('agg', 'max')
    target = params.get('target_class', 1)
    if mode == 'grouping':
        groupings = [g.strip() for g in str(params.get('groupings', '')).split(';') if g.strip()]
        if not groupings:
            raise InvalidParamsError('Grouping sweep needs at least one grouping, e.g. "gender;gender,race".')
        cfg = RunConfig.from_dict({k: v for k, v in params.items() if k not in ('measure', 'output')})
        df = sweep_groupings(cfg, groupings, measures)
    else:
        counts = split_list(params.get('counts', '2,5,10,20,50'), int)
        if not counts:
            raise InvalidParamsError('Sweep needs at least one group count.')
        if mode == 'population':
            df = sweep_population(counts, measures, agg, target)
        elif mode == 'sampled':
            seeds = split_list(params.get('seeds', '0'), int)
            df = sweep_sampled(counts, measures, int(params.get('n_per_group', 1000)), seeds, agg, target)
        else:
            raise InvalidParamsError(f'Sweep mode can be only population, sampled or grouping. Given {mode}.')
    _emit_csv(df, params.get('output'))
    return EXIT_OK


def surface(resolution: int, spec: SparsityMeasureSpec) -> pd.DataFrame:
    """Sparsity of the 3-component vectors of the probability simplex, on a regular grid.

    The grid points are ``(i, j, r - 1 - i - j) / (r - 1)`` with ``r`` the resolution.
    """
    if resolution < 2:
        raise InvalidParamsError(f'Resolution must be at least 2. Given {resolution}.')
    if spec.kind is Measure.MPD:
        raise InvalidParamsError('Surface grids are available for the gini and pq measures only.')
    m = resolution - 1
    ij = np.array([(i, j) for i in range(resolution) for j in range(resolution - i)], dtype=np.float64)
    w = np.column_stack([ij[:, 0] / m, ij[:, 1] / m, (m - ij[:, 0] - ij[:, 1]) / m])
    return pd.DataFrame({'w1': w[:, 0], 'w2': w[:, 1], 'w3': w[:, 2], 'value': sparsity_rows(w, spec)})


def cmd_surface(params: dict[str, Any]) -> int:
    """Sparsity surface over the 3-component simplex, as a CSV grid."""
    spec = SparsityMeasureSpec(params.get('measure', 'pq'), params.get('p', 1.0), params.get('q', 2.0))
    _emit_csv(surface(int(params.get('resolution', SURFACE_RESOLUTION)), spec), params.get('output'))
    return EXIT_OK


def cmd_gen(params: dict[str, Any]) -> int:
    """Sample a simulated scenario into a CSV file."""
    param = dict(params)
    if 'noise_variances' in param:
        param['noise_variances'] = tuple(split_list(param['noise_variances'], float))
    spec = ScenarioSpec.from_dict(param)
    _emit_csv(generate(spec, params.get('predictor', 'true')), params.get('output'))
    return EXIT_OK


def pq_grid(
    cfg: RunConfig, p_values: Sequence[float] = P_GRID, q_values: Sequence[float] = Q_GRID
) -> pd.DataFrame:
    """Evaluate a criterion with the PQ Index over a grid of exponents, pairs with ``p >= q`` are skipped."""
    data, _, part = _load(cfg)
    rows = []
    for p in p_values:
        for q in q_values:
            if p >= q:
                continue
            spec = SparsityMeasureSpec(Measure.PQ, p, q, cfg.transform)
            rows.append({'p': float(p), 'q': float(q), 'value': _evaluate(cfg, data, part, spec).value})
    return pd.DataFrame(rows, columns=['p', 'q', 'value'])


def cmd_pq_grid(params: dict[str, Any]) -> int:
    """Criterion values over a grid of PQ Index exponents, as a CSV table."""
    cfg = RunConfig.from_dict({**params, 'measure': 'pq'})
    p_values = split_list(params.get('p_values', P_GRID), float)
    q_values = split_list(params.get('q_values', Q_GRID), float)
    _emit_csv(pq_grid(cfg, p_values, q_values), cfg.output)
    return EXIT_OK


COMMANDS: dict[str, Callable[[dict[str, Any]], int]] = {
    'evaluate': cmd_evaluate,
    'check': cmd_check,
    'sweep': cmd_sweep,
    'surface': cmd_surface,
    'gen': cmd_gen,
    'pq-grid': cmd_pq_grid,
}


# -------------------------------------------------------------------------------------------------------------------
# parser


def _data_options(sp: argparse.ArgumentParser) -> None:
    sp.add_argument('-i', '--input', help='input CSV file')
    sp.add_argument('--task', choices=['classification', 'regression'])
    sp.add_argument('--criterion', choices=[c.value for c in Criterion])
    sp.add_argument('--metric', help='per-group performance metric of the eo criterion')
    sp.add_argument('--variance', type=float, help='residual variance of the log_likelihood metric')
    sp.add_argument('--no-per-class', dest='per_class', action='store_false', help='class-independent metric')
    sp.add_argument('--agg', choices=[a.value for a in Aggregation])
    sp.add_argument('--transform', choices=['none', 'exp'])
    sp.add_argument('--label', help='true label column')
    sp.add_argument('--prediction', help='prediction column')
    sp.add_argument('--groups', help='sensitive attributes, e.g. "gender,race,age:5"')
    sp.add_argument('--classes', help='explicit class set, comma-separated')
    sp.add_argument('--min-group-size', type=int)
    sp.add_argument('--drop-small-groups', action='store_true')
    sp.add_argument('--target-class', help='restrict the classification criteria to one class')


def _pq_options(sp: argparse.ArgumentParser) -> None:
    sp.add_argument('-p', type=float, help='inner norm exponent of the PQ Index')
    sp.add_argument('-q', type=float, help='outer norm exponent of the PQ Index')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='sparsefair', description='Sparsity-based group fairness metrics.')
    parser.add_argument('-c', '--config', help='YAML parameter file, DEFAULT section plus one section per command')
    parser.add_argument('-v', '--verbose', action='count', default=0, help='-v for info, -vv for debug messages')
    sub = parser.add_subparsers(dest='command', required=True)
    common = dict(argument_default=argparse.SUPPRESS)

    sp = sub.add_parser('evaluate', help='evaluate a fairness criterion on a CSV file', **common)
    _data_options(sp)
    sp.add_argument('--measure', choices=[m.value for m in Measure])
    _pq_options(sp)
    sp.add_argument('-o', '--output', help='JSON report file')

    sp = sub.add_parser('check', help='check sparsity properties and PQ Index theorems', **common)
    sp.add_argument('--properties', help=f'comma-separated ids among {",".join(p.value for p in PropertyId)}')
    sp.add_argument('--measure', choices=[m.value for m in Measure])
    _pq_options(sp)
    sp.add_argument('--trials', type=int)
    sp.add_argument('--dims', help='inclusive dimension range, e.g. "2,64"')
    sp.add_argument('--seed', type=int)
    sp.add_argument('--budget', type=int, help='counterexample search budget')
    sp.add_argument('-o', '--output', help='JSON report file')

    sp = sub.add_parser('sweep', help='fairness values as the number of groups grows', **common)
    sp.add_argument('--mode', choices=['population', 'sampled', 'grouping'])
    sp.add_argument('--counts', help='comma-separated group counts')
    sp.add_argument('--measures', help='comma-separated measures')
    sp.add_argument('--n-per-group', type=int, help='samples per group of the sampled mode')
    sp.add_argument('--seeds', help='comma-separated seeds of the sampled mode')
    sp.add_argument('--groupings', help='semicolon-separated groupings of the grouping mode')
    _data_options(sp)
    _pq_options(sp)
    sp.add_argument('-o', '--output', help='CSV file')

    sp = sub.add_parser('surface', help='sparsity surface over the 3-component simplex', **common)
    sp.add_argument('--resolution', type=int)
    sp.add_argument('--measure', choices=[Measure.GINI.value, Measure.PQ.value])
    _pq_options(sp)
    sp.add_argument('-o', '--output', help='CSV file')

    sp = sub.add_parser('gen', help='sample a simulated scenario', **common)
    sp.add_argument('--scenario', choices=[s.value for s in Scenario])
    sp.add_argument('-n', type=int, help='number of samples')
    sp.add_argument('--n-groups', type=int)
    sp.add_argument('--seed', type=int)
    sp.add_argument('--noise-variances', help='residual variances of the regression groups, e.g. "10,1"')
    sp.add_argument('--predictor', choices=['true', 'ols'])
    sp.add_argument('-o', '--output', help='CSV file')

    sp = sub.add_parser('pq-grid', help='criterion values over a grid of PQ Index exponents', **common)
    _data_options(sp)
    sp.add_argument('--p-values', help='comma-separated p values')
    sp.add_argument('--q-values', help='comma-separated q values')
    sp.add_argument('-o', '--output', help='CSV file')
    return parser


def resolve_params(args: argparse.Namespace) -> dict[str, Any]:
    """Parameters of a command: file values (DEFAULT merged with the command section) overridden by the flags."""
    given = {k: v for k, v in vars(args).items() if k not in ('config', 'verbose', 'command')}
    file_params = load_parameters(args.config, args.command) if args.config else {}
    return {**{k.replace('-', '_'): v for k, v in file_params.items()}, **given}


def setup_logging(verbose: int) -> None:
    level = logging.WARNING if verbose <= 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s', stream=sys.stderr, force=True)
    logging.captureWarnings(True)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(listcast(argv) if argv is not None else None)
    setup_logging(args.verbose)
    try:
        return COMMANDS[args.command](resolve_params(args))
    except (OSError, ValueError) as err:
        logger.error(f'{type(err).__name__}: {err}')
        return EXIT_INPUT_ERROR


if __name__ == '__main__':
    sys.exit(main())

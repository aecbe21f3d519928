from __future__ import annotations

import contextlib
import dataclasses
import enum
import logging
import math
import warnings
from typing import Any
from typing import Callable
from typing import Hashable
from typing import Iterator
from typing import Sequence

import numpy as np
import numpy.typing as npt
from scipy import stats
from sparsefair.diagnostics import ConditionCellEmptyError
from sparsefair.diagnostics import DataWarning
from sparsefair.diagnostics import DroppedCellWarning
from sparsefair.diagnostics import InvalidInputError
from sparsefair.diagnostics import InvalidParamsError
from sparsefair.diagnostics import NegativeInputError
from sparsefair.diagnostics import UndefinedCellError
from sparsefair.groups import ClassificationData
from sparsefair.groups import EvalData
from sparsefair.groups import Partition
from sparsefair.groups import RegressionData
from sparsefair.groups import partition as make_partition
from sparsefair.sparsity import Measure
from sparsefair.sparsity import SparsityMeasureSpec
from sparsefair.sparsity import Transform
from sparsefair.sparsity import sparsity
from sparsefair.sparsity import sparsity_rows

logger = logging.getLogger(__name__)

PROB_CLIP = 1e-12  #: Probabilities are clipped to ``[PROB_CLIP, 1 - PROB_CLIP]`` before the logarithm.


class Criterion(str, enum.Enum):
    """Fairness criteria."""

    SP = 'sp'
    EO = 'eo'
    SP_WEAK = 'sp-weak'
    SP_W = 'sp-w'


class Aggregation(str, enum.Enum):
    """Reduction of the per-class values to a single number."""

    MAX = 'max'
    MEAN = 'mean'
    SUM = 'sum'


class PerfMetric(str, enum.Enum):
    """Per-group performance metrics fed to the equalized odds criteria."""

    ACCURACY = 'accuracy'
    TPR_FPR_AVG = 'tpr_fpr_avg'
    F1 = 'f1'
    AUROC = 'auroc'
    CROSS_ENTROPY = 'cross_entropy'
    MSE = 'mse'
    MAE = 'mae'
    RMSE = 'rmse'
    R2 = 'r2'
    LOG_LIKELIHOOD = 'log_likelihood'

    @property
    def is_regression(self) -> bool:
        return self in _REGRESSION_METRICS

    @property
    def needs_scores(self) -> bool:
        return self in (PerfMetric.AUROC, PerfMetric.CROSS_ENTROPY)

    @property
    def can_be_negative(self) -> bool:
        return self in (PerfMetric.R2, PerfMetric.LOG_LIKELIHOOD)


_REGRESSION_METRICS = frozenset(
    {PerfMetric.MSE, PerfMetric.MAE, PerfMetric.RMSE, PerfMetric.R2, PerfMetric.LOG_LIKELIHOOD}
)


@dataclasses.dataclass(frozen=True)
class PerfMetricSpec:
    """Performance metric ``g`` of the equalized odds criteria."""

    kind: PerfMetric = PerfMetric.TPR_FPR_AVG  #: Metric.
    per_class: bool = True  #: Flag to evaluate classification metrics one-vs-rest per class.
    variance: float | None = None  #: Residual variance of the Gaussian log-likelihood.

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, 'kind', PerfMetric(str(getattr(self.kind, 'value', self.kind)).lower()))
        except ValueError:
            raise InvalidParamsError(
                f'Unknown performance metric {self.kind}. Valid metrics are {[m.value for m in PerfMetric]}.'
            )
        if self.kind is PerfMetric.LOG_LIKELIHOOD:
            if self.variance is None or not self.variance > 0 or not math.isfinite(self.variance):
                raise InvalidParamsError(f'Gaussian log-likelihood needs a positive variance. Given {self.variance}.')
        elif self.variance is not None:
            raise InvalidParamsError(f'Variance is used only by the log_likelihood metric. Given {self.kind.value}.')

    @property
    def class_dependent(self) -> bool:
        return self.per_class and self.kind is not PerfMetric.ACCURACY and not self.kind.is_regression

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {'kind': self.kind.value, 'per_class': self.per_class}
        if self.variance is not None:
            d['variance'] = self.variance
        return d


@dataclasses.dataclass
class RateMatrix:
    """Fraction of every group predicted as every class, one row per group."""

    groups: tuple[Hashable, ...]
    classes: tuple[Any, ...]
    rates: npt.NDArray[np.float64]

    def __post_init__(self) -> None:
        self.groups = tuple(self.groups)
        self.classes = tuple(self.classes)
        self.rates = np.asarray(self.rates, dtype=np.float64)
        if self.rates.shape != (len(self.groups), len(self.classes)):
            raise InvalidInputError(
                f'Rate matrix must have shape ({len(self.groups)}, {len(self.classes)}). Given {self.rates.shape}.'
            )
        if not len(self.groups):
            raise InvalidInputError('Rate matrix needs at least one group.')
        if np.any(np.abs(self.rates.sum(axis=1) - 1) > 1e-9) or np.any(self.rates < 0):
            raise InvalidInputError('Rows of a rate matrix must be probability vectors.')

    def column(self, label: Any) -> npt.NDArray[np.float64]:
        if label not in self.classes:
            raise InvalidInputError(f'Label {label!r} is not in the class set {self.classes}.')
        return self.rates[:, self.classes.index(label)]


@dataclasses.dataclass
class MetricReport:
    """Outcome of a fairness criterion.

    ``vectors`` holds the per-group vectors the measure was applied to (one entry per class, per conditioning cell
    or, for the regression criteria, at the threshold attaining the value) and ``values`` the resulting per-entry
    sparsities. ``value`` is the aggregation of ``values``.
    """

    criterion: str
    measure: SparsityMeasureSpec
    aggregation: str
    groups: list[Any]
    vectors: dict[str, list[float]]
    values: dict[str, float]
    value: float
    warnings: list[str] = dataclasses.field(default_factory=list)
    metric: PerfMetricSpec | None = None

    def __post_init__(self) -> None:
        for key, vec in self.vectors.items():
            if len(vec) != len(self.groups):
                raise ValueError(f'Vector {key!r} has {len(vec)} entries for {len(self.groups)} groups.')

    def to_dict(self) -> dict[str, Any]:
        return {
            'criterion': self.criterion,
            'measure': self.measure.to_dict(),
            'metric': self.metric.to_dict() if self.metric is not None else None,
            'aggregation': self.aggregation,
            'groups': [_plain(g) for g in self.groups],
            'vectors': self.vectors,
            'values': self.values,
            'value': self.value,
            'warnings': list(self.warnings),
        }


@dataclasses.dataclass(frozen=True, eq=False)
class ECDF:
    """Right-continuous empirical cumulative distribution function."""

    support: npt.NDArray[np.float64]  #: Sorted sample.

    def __call__(self, t: npt.ArrayLike) -> npt.NDArray[np.float64]:
        return np.searchsorted(self.support, np.asarray(t, dtype=np.float64), side='right') / self.support.size


def _plain(x: Any) -> Any:
    return x.item() if isinstance(x, np.generic) else x


def _key(label: Any) -> str:
    return str(_plain(label))


def _tkey(t: float) -> str:
    return f't={float(t)!r}'


@contextlib.contextmanager
def _collect_warnings() -> Iterator[list[str]]:
    # data warnings are copied into the report and re-issued to the caller
    messages: list[str] = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter('always')
        yield messages
    for w in caught:
        if issubclass(w.category, DataWarning) and str(w.message) not in messages:
            messages.append(str(w.message))
        warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)


def _resolve(data: EvalData, part: Partition | None) -> Partition:
    part = make_partition(data) if part is None else part
    if not part:
        raise InvalidInputError('No group left to compare.')
    for label, idx in part.items():
        if len(idx) == 0:
            raise InvalidInputError(f'Group {label!r} is empty.')
    return part


def _cls_data(data: Any) -> ClassificationData:
    if not isinstance(data, ClassificationData):
        raise InvalidParamsError('This criterion needs classification data.')
    return data


def _reg_data(data: Any) -> RegressionData:
    if not isinstance(data, RegressionData):
        raise InvalidParamsError('This criterion needs regression data.')
    return data


def aggregate(values: Sequence[float] | npt.ArrayLike, agg: Aggregation | str = Aggregation.MAX) -> float:
    """Reduce the per-class values with MAX, MEAN or SUM."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise InvalidInputError('Cannot aggregate an empty list of values.')
    op = Aggregation(getattr(agg, 'value', agg))
    if op is Aggregation.MAX:
        return float(arr.max())
    if op is Aggregation.MEAN:
        return float(arr.mean())
    return float(arr.sum())


def _classes_used(classes: Sequence[Any], target_class: Any | None) -> list[Any]:
    if target_class is None:
        return list(classes)
    for c in classes:
        if c == target_class or str(c) == str(target_class):
            return [c]
    raise InvalidParamsError(f'Target class {target_class!r} is not in the class set {tuple(classes)}.')


# -------------------------------------------------------------------------------------------------------------------
# statistical parity, classification


def class_rate_matrix(data: ClassificationData, part: Partition | None = None) -> RateMatrix:
    """Fraction of the rows of every group predicted as every class.

    Parameters
    ----------
    data : ClassificationData
        Evaluation data.
    part : dict, optional
        Partition of the rows. The default is the partition induced by ``data.group``.

    Returns
    -------
    RateMatrix
        ``R[a][y]`` is the fraction of group ``a`` predicted as class ``y``.
    """
    data = _cls_data(data)
    part = _resolve(data, part)
    classes = tuple(data.classes or ())
    codes = np.searchsorted(np.asarray(classes), data.y_pred) if _sortable(classes) else None
    rates = np.empty((len(part), len(classes)))
    for i, idx in enumerate(part.values()):
        if codes is not None:
            rates[i] = np.bincount(codes[idx], minlength=len(classes)) / len(idx)
        else:
            rates[i] = [np.mean(data.y_pred[idx] == c) for c in classes]
    return RateMatrix(tuple(part), classes, rates)


def _sortable(classes: Sequence[Any]) -> bool:
    try:
        return list(classes) == sorted(classes)
    except TypeError:
        return False


def sp_classification(
    rates: RateMatrix,
    measure: SparsityMeasureSpec | None = None,
    agg: Aggregation | str = Aggregation.MAX,
    target_class: Any | None = None,
) -> MetricReport:
    """Sparsity-based statistical parity of a classifier.

    For every class the measure is applied to the column of the rate matrix, then the per-class values are
    aggregated. With the MPD measure and MAX aggregation it is the usual statistical parity gap.

    Parameters
    ----------
    rates : RateMatrix
        Per-group class rates, see :func:`class_rate_matrix`.
    measure : SparsityMeasureSpec, optional
        Group comparison operator. The default is the PQ Index with ``p=1``, ``q=2``.
    agg : Aggregation
        Reduction over the classes.
    target_class : optional
        Restrict the criterion to a single class column.

    Returns
    -------
    MetricReport
        Per-class rate vectors and sparsities, and their aggregation.

    See Also
    --------
    class_rate_matrix : Per-group class rates.
    """
    measure = measure or SparsityMeasureSpec()
    agg = Aggregation(getattr(agg, 'value', agg))
    vectors, values = {}, {}
    with _collect_warnings() as caught:
        for c in _classes_used(rates.classes, target_class):
            col = rates.column(c)
            vectors[_key(c)] = col.tolist()
            values[_key(c)] = sparsity(col, measure)
    return MetricReport(
        Criterion.SP.value,
        measure,
        agg.value,
        list(rates.groups),
        vectors,
        values,
        aggregate(list(values.values()), agg),
        caught,
    )


# -------------------------------------------------------------------------------------------------------------------
# equalized odds, classification


def _drop_groups(part: Partition, bad: dict[Hashable, str]) -> Partition:
    for label, why in bad.items():
        warnings.warn(f'Group {label!r} dropped: {why}.', DroppedCellWarning, stacklevel=3)
    kept = {k: v for k, v in part.items() if k not in bad}
    if not kept:
        raise InvalidInputError('Every group was dropped, nothing left to compare.')
    return kept


def eo_classification_mpd(
    data: ClassificationData, part: Partition | None = None, drop: bool = False, target_class: Any | None = None
) -> MetricReport:
    """Equalized odds gap of a classifier.

    Largest difference across groups of ``P(f(X) = y | Y = y', A = a)``, over every predicted class ``y`` and every
    true class ``y'`` observed in the data. Base-rate differences across groups do not contribute.

    Parameters
    ----------
    data : ClassificationData
        Evaluation data.
    part : dict, optional
        Partition of the rows.
    drop : bool
        Flag to drop the groups with an empty ``(group, y')`` cell instead of raising.
    target_class : optional
        Restrict the predicted class ``y`` to a single class. The conditions ``y'`` still range over every class.

    Returns
    -------
    MetricReport
        Conditional rate vectors keyed ``'y=<y>|y_true=<y'>'`` and their gaps.

    Raises
    ------
    ConditionCellEmptyError
        A group has no sample of a true class, and `drop` is not set.
    """
    data = _cls_data(data)
    part = _resolve(data, part)
    measure = SparsityMeasureSpec(Measure.MPD)
    classes = list(data.classes or ())
    predicted = _classes_used(classes, target_class)
    with _collect_warnings() as caught:
        rows = np.concatenate(list(part.values()))
        conditions = [c for c in classes if np.any(data.y_true[rows] == c)]

        bad: dict[Hashable, str] = {}
        for label, idx in part.items():
            for c in conditions:
                if not np.any(data.y_true[idx] == c):
                    if not drop:
                        raise ConditionCellEmptyError(label, c)
                    bad.setdefault(label, f'no samples with y_true={c!r}')
        part = _drop_groups(part, bad) if bad else part

        vectors, values = {}, {}
        for cond in conditions:
            cells = [data.y_pred[idx][data.y_true[idx] == cond] for idx in part.values()]
            for c in predicted:
                vec = np.array([np.mean(cell == c) for cell in cells])
                key = f'y={_key(c)}|y_true={_key(cond)}'
                vectors[key] = vec.tolist()
                values[key] = sparsity(vec, measure)
    return MetricReport(
        Criterion.EO.value,
        measure,
        Aggregation.MAX.value,
        list(part),
        vectors,
        values,
        aggregate(list(values.values()), Aggregation.MAX) if values else 0.0,
        caught,
    )


def _binary_ce(pos: npt.NDArray[np.bool_], p: npt.NDArray[np.float64]) -> float:
    p = np.clip(p, PROB_CLIP, 1 - PROB_CLIP)
    return float(-np.mean(np.where(pos, np.log(p), np.log1p(-p))))


def _auroc(pos: npt.NDArray[np.bool_], s: npt.NDArray[np.float64]) -> float:
    n1 = int(pos.sum())
    n0 = pos.size - n1
    ranks = stats.rankdata(s)
    return float((ranks[pos].sum() - n1 * (n1 + 1) / 2) / (n1 * n0))


def _one_vs_rest(
    metric: PerfMetric, yt: npt.NDArray[Any], yp: npt.NDArray[Any], s: npt.NDArray[np.float64] | None, label: Any
) -> float:
    pos = yt == label
    hit = yp == label
    if metric is PerfMetric.TPR_FPR_AVG:
        if not pos.any() or pos.all():
            which = 'positives' if not pos.any() else 'negatives'
            raise UndefinedCellError(f'TPR/FPR undefined for class {label!r}: no {which}.', label=label)
        return float((hit[pos].mean() + hit[~pos].mean()) / 2)
    if metric is PerfMetric.F1:
        tp = int(np.sum(hit & pos))
        den = 2 * tp + int(np.sum(hit & ~pos)) + int(np.sum(~hit & pos))
        if den == 0:
            raise UndefinedCellError(f'F1 undefined for class {label!r}: never true nor predicted.', label=label)
        return 2 * tp / den
    assert s is not None
    if metric is PerfMetric.AUROC:
        if not pos.any() or pos.all():
            raise UndefinedCellError(f'AUROC undefined for class {label!r}: a single class is present.', label=label)
        return _auroc(pos, s)
    return _binary_ce(pos, s)


def _g_value(data: ClassificationData, idx: npt.NDArray[np.intp], metric: PerfMetricSpec, label: Any) -> float:
    kind = metric.kind
    yt, yp = data.y_true[idx], data.y_pred[idx]
    scores = data.scores[idx] if data.scores is not None else None
    classes = list(data.classes or ())
    if kind is PerfMetric.ACCURACY:
        return float(np.mean(yt == yp))
    if not metric.per_class and kind is PerfMetric.CROSS_ENTROPY:
        assert scores is not None
        col = np.searchsorted(np.asarray(classes), yt) if _sortable(classes) else [data.class_index(y) for y in yt]
        p = np.clip(scores[np.arange(len(idx)), col], PROB_CLIP, 1 - PROB_CLIP)
        return float(-np.mean(np.log(p)))

    def one(c: Any) -> float:
        s = scores[:, data.class_index(c)] if scores is not None else None
        return _one_vs_rest(kind, yt, yp, s, c)

    if metric.per_class:
        return one(label)
    return float(np.mean([one(c) for c in classes]))


def _check_metric(data: ClassificationData, metric: PerfMetricSpec) -> None:
    if metric.kind.is_regression:
        raise InvalidParamsError(f'Metric {metric.kind.value} is defined only for regression.')
    if metric.kind.needs_scores and data.scores is None:
        raise InvalidParamsError(f'Metric {metric.kind.value} needs class probability scores.')


def g_per_group(
    data: ClassificationData, part: Partition | None = None, metric: PerfMetricSpec | None = None, label: Any = None
) -> npt.NDArray[np.float64]:
    """Performance metric of every group, one-vs-rest with respect to class `label`.

    Parameters
    ----------
    data : ClassificationData
        Evaluation data.
    part : dict, optional
        Partition of the rows.
    metric : PerfMetricSpec, optional
        Metric, the default is the average of true and false positive rates.
    label : optional
        Positive class, required by class-dependent metrics.

    Returns
    -------
    numpy.ndarray
        Metric value of each group, in partition order.

    Raises
    ------
    UndefinedCellError
        The metric is undefined for a group, for example a group without positives of `label`.
    """
    data = _cls_data(data)
    part = _resolve(data, part)
    metric = metric or PerfMetricSpec()
    _check_metric(data, metric)
    if metric.class_dependent and label is None:
        raise InvalidParamsError(f'Metric {metric.kind.value} needs a positive class.')
    out = []
    for g, idx in part.items():
        try:
            out.append(_g_value(data, idx, metric, label))
        except UndefinedCellError as err:
            raise UndefinedCellError(f'Group {g!r}: {err}', group=g, label=err.label)
    return np.array(out)


def s_eo_classification(
    data: ClassificationData,
    part: Partition | None = None,
    measure: SparsityMeasureSpec | None = None,
    metric: PerfMetricSpec | None = None,
    agg: Aggregation | str = Aggregation.MAX,
    drop: bool = False,
    target_class: Any | None = None,
) -> MetricReport:
    """Sparsity-based equalized odds of a classifier.

    The measure is applied, for every class, to the vector of per-group metric values ``g``, then the per-class
    values are aggregated. A class-independent metric is evaluated once.

    Parameters
    ----------
    data : ClassificationData
        Evaluation data.
    part : dict, optional
        Partition of the rows.
    measure : SparsityMeasureSpec, optional
        Group comparison operator, with its positivity transform.
    metric : PerfMetricSpec, optional
        Per-group performance metric.
    agg : Aggregation
        Reduction over the classes.
    drop : bool
        Flag to drop the groups whose metric is undefined for some class instead of raising.
    target_class : optional
        Restrict the criterion to a single class.

    Returns
    -------
    MetricReport
        Per-class metric vectors and sparsities, and their aggregation.
    """
    data = _cls_data(data)
    part = _resolve(data, part)
    measure = measure or SparsityMeasureSpec()
    metric = metric or PerfMetricSpec()
    agg = Aggregation(getattr(agg, 'value', agg))
    _check_metric(data, metric)
    labels = _classes_used(data.classes or (), target_class) if metric.class_dependent else [None]

    with _collect_warnings() as caught:
        table: dict[Hashable, list[float]] = {}
        bad: dict[Hashable, str] = {}
        for g, idx in part.items():
            row = []
            for c in labels:
                try:
                    row.append(_g_value(data, idx, metric, c))
                except UndefinedCellError as err:
                    if not drop:
                        raise UndefinedCellError(f'Group {g!r}: {err}', group=g, label=err.label)
                    bad[g] = str(err).rstrip('.')
                    break
            table[g] = row
        part = _drop_groups(part, bad) if bad else part

        vectors, values = {}, {}
        for j, c in enumerate(labels):
            key = 'all' if c is None else _key(c)
            vec = np.array([table[g][j] for g in part])
            vectors[key] = vec.tolist()
            values[key] = sparsity(vec, measure)
    return MetricReport(
        Criterion.EO.value,
        measure,
        agg.value,
        list(part),
        vectors,
        values,
        aggregate(list(values.values()), agg),
        caught,
        metric,
    )


# -------------------------------------------------------------------------------------------------------------------
# regression


def ecdf(values: npt.ArrayLike) -> ECDF:
    """Empirical CDF of a sample.

    Examples
    --------
    >>> float(ecdf([2, 2, 4])(2))
    0.6666666666666666
    """
    arr = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if arr.size == 0:
        raise InvalidInputError('ECDF needs at least one value.')
    return ECDF(arr)


def _cdf_grid(
    data: RegressionData, part: Partition
) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.float64]]:
    # rows: pooled unique thresholds, columns: groups
    t = np.unique(np.concatenate([data.y_pred[idx] for idx in part.values()]))
    grid = np.column_stack([ecdf(data.y_pred[idx])(t) for idx in part.values()])
    return t, grid


def sp_regression_ks(
    data: RegressionData, part: Partition | None = None, measure: SparsityMeasureSpec | None = None
) -> MetricReport:
    """Sparsity-based statistical parity of a regressor, Kolmogorov-Smirnov form.

    The measure is applied to the vector of group CDFs at every pooled prediction value and the largest value is
    returned. With the MPD measure and two groups it is the two-sample Kolmogorov-Smirnov statistic.

    Parameters
    ----------
    data : RegressionData
        Evaluation data.
    part : dict, optional
        Partition of the rows.
    measure : SparsityMeasureSpec, optional
        Group comparison operator.

    Returns
    -------
    MetricReport
        Per-threshold sparsities, and the CDF vector at the threshold attaining the maximum.
    """
    data = _reg_data(data)
    part = _resolve(data, part)
    measure = measure or SparsityMeasureSpec()
    with _collect_warnings() as caught:
        t, grid = _cdf_grid(data, part)
        keep = np.any(grid > 0, axis=1)
        t, grid = t[keep], grid[keep]
        s = sparsity_rows(grid, measure)
        best = int(np.argmax(s))
    logger.debug('KS parity over %d thresholds, max at t=%g', t.size, t[best])
    return MetricReport(
        Criterion.SP.value,
        measure,
        Aggregation.MAX.value,
        list(part),
        {_tkey(t[best]): grid[best].tolist()},
        {_tkey(x): float(v) for x, v in zip(t, s)},
        float(s[best]),
        caught,
    )


def sp_regression_wasserstein(
    data: RegressionData, part: Partition | None = None, measure: SparsityMeasureSpec | None = None
) -> MetricReport:
    """Sparsity-based statistical parity of a regressor, Wasserstein form.

    Integral over the pooled support of the measure of the group CDF vector. The CDFs are step functions, so the
    integral is the exact sum of plateau values times interval widths. With the MPD measure and two groups it is the
    1-Wasserstein distance between the two empirical distributions.

    Parameters
    ----------
    data : RegressionData
        Evaluation data.
    part : dict, optional
        Partition of the rows.
    measure : SparsityMeasureSpec, optional
        Group comparison operator.

    Returns
    -------
    MetricReport
        Per-interval contributions, and the CDF vector of the widest-contributing interval.
    """
    data = _reg_data(data)
    part = _resolve(data, part)
    measure = measure or SparsityMeasureSpec()
    with _collect_warnings() as caught:
        t, grid = _cdf_grid(data, part)
        if t.size < 2:
            contrib = np.zeros(0)
        else:
            contrib = sparsity_rows(grid[:-1], measure) * np.diff(t)
    if contrib.size:
        best = int(np.argmax(contrib))
        vectors = {_tkey(t[best]): grid[best].tolist()}
    else:
        vectors = {_tkey(t[0]): grid[0].tolist()}
    return MetricReport(
        Criterion.SP_W.value,
        measure,
        'integral',
        list(part),
        vectors,
        {_tkey(x): float(v) for x, v in zip(t[:-1], contrib)},
        float(contrib.sum()),
        caught,
    )


def weak_sp_regression(
    data: RegressionData, part: Partition | None = None, measure: SparsityMeasureSpec | None = None
) -> MetricReport:
    """Sparsity of the per-group mean predictions."""
    data = _reg_data(data)
    part = _resolve(data, part)
    measure = measure or SparsityMeasureSpec()
    with _collect_warnings() as caught:
        means = np.array([data.y_pred[idx].mean() for idx in part.values()])
        value = sparsity(means, measure)
    return MetricReport(
        Criterion.SP_WEAK.value,
        measure,
        Aggregation.MAX.value,
        list(part),
        {'mean': means.tolist()},
        {'mean': value},
        value,
        caught,
    )


def _regression_metric(metric: PerfMetricSpec) -> Callable[[npt.NDArray[np.float64], npt.NDArray[np.float64]], float]:
    kind = metric.kind

    def f(y: npt.NDArray[np.float64], yhat: npt.NDArray[np.float64]) -> float:
        r = y - yhat
        if kind is PerfMetric.MSE:
            return float(np.mean(r**2))
        if kind is PerfMetric.RMSE:
            return float(np.sqrt(np.mean(r**2)))
        if kind is PerfMetric.MAE:
            return float(np.mean(np.abs(r)))
        if kind is PerfMetric.R2:
            ss_tot = float(np.sum((y - y.mean()) ** 2))
            if ss_tot == 0:
                raise UndefinedCellError('R2 undefined: constant target.')
            return 1.0 - float(np.sum(r**2)) / ss_tot
        assert metric.variance is not None
        return float(-0.5 * np.log(2 * np.pi * metric.variance) - np.mean(r**2) / (2 * metric.variance))

    return f


def eo_regression(
    data: RegressionData,
    part: Partition | None = None,
    metric: PerfMetricSpec | None = None,
    measure: SparsityMeasureSpec | None = None,
    drop: bool = False,
) -> MetricReport:
    """Sparsity-based equalized odds of a regressor.

    The measure is applied to the vector of per-group performance metrics. Metrics that can be negative (R2 and the
    Gaussian log-likelihood) need the exp transform with the Gini and PQ measures.

    Parameters
    ----------
    data : RegressionData
        Evaluation data.
    part : dict, optional
        Partition of the rows.
    metric : PerfMetricSpec, optional
        Per-group performance metric, the default is the mean squared error.
    measure : SparsityMeasureSpec, optional
        Group comparison operator, with its positivity transform.
    drop : bool
        Flag to drop the groups whose metric is undefined instead of raising.

    Returns
    -------
    MetricReport
        Per-group metric vector and its sparsity.

    Raises
    ------
    NegativeInputError
        Metric that can be negative, with Gini or PQ and no transform.
    """
    data = _reg_data(data)
    part = _resolve(data, part)
    metric = metric or PerfMetricSpec(PerfMetric.MSE)
    measure = measure or SparsityMeasureSpec()
    if not metric.kind.is_regression:
        raise InvalidParamsError(f'Metric {metric.kind.value} is defined only for classification.')
    if metric.kind.can_be_negative and measure.kind is not Measure.MPD and measure.transform is Transform.NONE:
        raise NegativeInputError(
            message=f'Metric {metric.kind.value} can be negative, the {measure.kind.value} measure needs the exp '
            'transform.'
        )
    g = _regression_metric(metric)

    with _collect_warnings() as caught:
        vals: dict[Hashable, float] = {}
        bad: dict[Hashable, str] = {}
        for label, idx in part.items():
            try:
                vals[label] = g(data.y_true[idx], data.y_pred[idx])
            except UndefinedCellError as err:
                if not drop:
                    raise UndefinedCellError(f'Group {label!r}: {err}', group=label)
                bad[label] = str(err).rstrip('.')
        part = _drop_groups(part, bad) if bad else part
        vec = np.array([vals[label] for label in part])
        value = sparsity(vec, measure)
    return MetricReport(
        Criterion.EO.value,
        measure,
        Aggregation.MAX.value,
        list(part),
        {metric.kind.value: vec.tolist()},
        {metric.kind.value: value},
        value,
        caught,
        metric,
    )


def evaluate(
    data: EvalData,
    criterion: Criterion | str = Criterion.SP,
    measure: SparsityMeasureSpec | None = None,
    metric: PerfMetricSpec | None = None,
    agg: Aggregation | str = Aggregation.MAX,
    part: Partition | None = None,
    drop: bool = False,
    target_class: Any | None = None,
) -> MetricReport:
    """Evaluate a fairness criterion on classification or regression data.

    Classification supports ``sp`` and ``eo``, regression supports ``sp`` (Kolmogorov-Smirnov form), ``sp-w``
    (Wasserstein form), ``sp-weak`` and ``eo``. Classification ``eo`` with the MPD measure is the equalized odds gap
    over conditional rates. With the other measures it is the sparsity of the per-group metric.

    Parameters
    ----------
    data : ClassificationData or RegressionData
        Evaluation data.
    criterion : Criterion
        Fairness criterion.
    measure : SparsityMeasureSpec, optional
        Group comparison operator.
    metric : PerfMetricSpec, optional
        Per-group performance metric of the ``eo`` criteria.
    agg : Aggregation
        Reduction over the classes.
    part : dict, optional
        Partition of the rows.
    drop : bool
        Flag to drop the groups with undefined cells.
    target_class : optional
        Restrict the classification criteria to a single class.

    Returns
    -------
    MetricReport
        Criterion report.
    """
    crit = Criterion(getattr(criterion, 'value', criterion))
    measure = measure or SparsityMeasureSpec()
    logger.info('Evaluating %s with %s on %d rows', crit.value, measure, len(data))
    if isinstance(data, ClassificationData):
        if crit is Criterion.SP:
            return sp_classification(class_rate_matrix(data, part), measure, agg, target_class)
        if crit is Criterion.EO:
            if measure.kind is Measure.MPD and measure.transform is Transform.NONE and metric is None:
                return eo_classification_mpd(data, part, drop, target_class)
            return s_eo_classification(data, part, measure, metric, agg, drop, target_class)
        raise InvalidParamsError(f'Criterion {crit.value} is defined only for regression.')

    if metric is not None and not metric.kind.is_regression:
        raise InvalidParamsError(f'Metric {metric.kind.value} is defined only for classification.')
    if crit is Criterion.SP:
        return sp_regression_ks(data, part, measure)
    if crit is Criterion.SP_W:
        return sp_regression_wasserstein(data, part, measure)
    if crit is Criterion.SP_WEAK:
        return weak_sp_regression(data, part, measure)
    return eo_regression(data, part, metric, measure, drop)


def main() -> None:
    data = RegressionData(y_true=[1, 2, 3, 2, 3, 4], y_pred=[1, 2, 3, 2, 3, 4], group=['A'] * 3 + ['B'] * 3)
    for crit in (Criterion.SP, Criterion.SP_W, Criterion.SP_WEAK):
        report = evaluate(data, crit, SparsityMeasureSpec(Measure.MPD))
        print(f'{crit.value}: {report.value:.7f}')


if __name__ == '__main__':
    main()

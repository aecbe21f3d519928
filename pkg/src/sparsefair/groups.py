from __future__ import annotations

import dataclasses
import math
import warnings
from typing import Any
from typing import Dict
from typing import Hashable
from typing import Mapping
from typing import Optional
from typing import Sequence
from typing import Union

import numpy as np
import numpy.typing as npt
import pandas as pd
from sparsefair.diagnostics import DegenerateBinsWarning
from sparsefair.diagnostics import ExcludedRowsWarning
from sparsefair.diagnostics import InvalidInputError
from sparsefair.diagnostics import InvalidParamsError
from sparsefair.diagnostics import MissingValueWarning
from sparsefair.diagnostics import SmallGroupWarning

EXCLUDED = -1  #: Group id of the rows left out of every group.

Partition = Dict[Hashable, npt.NDArray[np.intp]]


def _same_length(**arrays: Any) -> int:
    sizes = {k: len(v) for k, v in arrays.items() if v is not None}
    if len(set(sizes.values())) > 1:
        raise InvalidInputError(f'Input arrays must have equal lengths. Given {sizes}.')
    n = next(iter(sizes.values()))
    if n < 1:
        raise InvalidInputError('Input arrays must have at least one element.')
    return n


@dataclasses.dataclass
class ClassificationData:
    """Evaluation triples of a classification task: true labels, predicted labels and sensitive groups.

    The class set is inferred as the sorted union of the observed ``y_true`` and ``y_pred`` labels unless it is
    given explicitly. Class probabilities, if present, are an ``(n, |classes|)`` matrix whose columns follow the
    order of ``classes``.
    """

    y_true: npt.NDArray[Any]
    y_pred: npt.NDArray[Any]
    group: npt.NDArray[Any]
    scores: Optional[npt.NDArray[np.float64]] = None
    classes: Optional[Sequence[Any]] = None

    def __post_init__(self) -> None:
        self.y_true = np.asarray(self.y_true)
        self.y_pred = np.asarray(self.y_pred)
        self.group = np.asarray(self.group)
        n = _same_length(y_true=self.y_true, y_pred=self.y_pred, group=self.group)

        observed = np.unique(np.concatenate([self.y_true, self.y_pred]))
        if self.classes is None:
            self.classes = tuple(observed.tolist())
        else:
            self.classes = tuple(self.classes)
            if len(set(self.classes)) != len(self.classes):
                raise InvalidInputError(f'Class set has duplicated labels. Given {self.classes}.')
            for name, col in (('y_true', self.y_true), ('y_pred', self.y_pred)):
                unknown = np.flatnonzero(~np.isin(col, np.asarray(self.classes, dtype=col.dtype)))
                if unknown.size:
                    r = int(unknown[0])
                    raise InvalidInputError(
                        f'Label {col[r]!r} in column {name} (row {r}) is outside the class set {self.classes}.',
                        row=r,
                        column=name,
                    )

        if self.scores is not None:
            self.scores = np.asarray(self.scores, dtype=np.float64)
            if self.scores.shape != (n, len(self.classes)):
                raise InvalidInputError(
                    f'Scores must be a ({n}, {len(self.classes)}) matrix. Given shape {self.scores.shape}.'
                )
            bad = np.argwhere(~np.isfinite(self.scores) | (self.scores < 0) | (self.scores > 1))
            if bad.size:
                r, c = (int(x) for x in bad[0])
                raise InvalidInputError(
                    f'Score {self.scores[r, c]} of class {self.classes[c]!r} (row {r}) is outside [0, 1].', row=r
                )
            off = np.flatnonzero(np.abs(self.scores.sum(axis=1) - 1) > 1e-6)
            if off.size:
                r = int(off[0])
                raise InvalidInputError(f'Scores of row {r} sum to {self.scores[r].sum()}, expected 1.', row=r)

    def __len__(self) -> int:
        return int(self.y_true.size)

    def class_index(self, label: Any) -> int:
        assert self.classes is not None
        try:
            return list(self.classes).index(label)
        except ValueError:
            raise InvalidInputError(f'Label {label!r} is not in the class set {self.classes}.')


@dataclasses.dataclass
class RegressionData:
    """Evaluation triples of a regression task: true targets, predictions and sensitive groups."""

    y_true: npt.NDArray[np.float64]
    y_pred: npt.NDArray[np.float64]
    group: npt.NDArray[Any]

    def __post_init__(self) -> None:
        self.group = np.asarray(self.group)
        for name in ('y_true', 'y_pred'):
            try:
                col = np.asarray(getattr(self, name), dtype=np.float64)
            except (TypeError, ValueError):
                raise InvalidInputError(f'Column {name} must be numeric.', column=name)
            bad = np.flatnonzero(~np.isfinite(col))
            if bad.size:
                r = int(bad[0])
                raise InvalidInputError(f'Non-finite value {col[r]} in column {name} (row {r}).', row=r, column=name)
            setattr(self, name, col)
        _same_length(y_true=self.y_true, y_pred=self.y_pred, group=self.group)

    def __len__(self) -> int:
        return int(self.y_true.size)


EvalData = Union[ClassificationData, RegressionData]


@dataclasses.dataclass
class GroupingSpec:
    """How sensitive groups are built from attribute columns."""

    attributes: Sequence[str] = ()  #: Sensitive attribute columns, crossed in the given order.
    continuous_bins: Mapping[str, int] = dataclasses.field(default_factory=dict)  #: Quantile bins per column.
    min_group_size: int = 1  #: Groups with fewer rows are flagged.
    drop_small_groups: bool = False  #: Flag to drop the flagged groups instead of only warning.

    def __post_init__(self) -> None:
        self.attributes = tuple(self.attributes)
        self.continuous_bins = dict(self.continuous_bins)
        if not self.attributes:
            raise InvalidParamsError('At least one sensitive attribute is required.')
        unknown = set(self.continuous_bins) - set(self.attributes)
        if unknown:
            raise InvalidParamsError(f'Binned columns {sorted(unknown)} are not sensitive attributes.')
        for col, k in self.continuous_bins.items():
            if int(k) != k or k < 2:
                raise InvalidParamsError(f'Number of bins of column {col!r} must be an integer >= 2. Given {k}.')
        if self.min_group_size < 1:
            raise InvalidParamsError(f'Minimum group size must be at least 1. Given {self.min_group_size}.')


@dataclasses.dataclass(frozen=True)
class GroupInfo:
    """Row of the group table."""

    gid: int
    key: tuple[Any, ...]
    size: int
    small: bool = False
    dropped: bool = False

    @property
    def label(self) -> str:
        return ' x '.join(str(k) for k in self.key)


@dataclasses.dataclass
class GroupTable:
    """Groups produced by :func:`build_groups`, ordered by attribute tuple."""

    attributes: tuple[str, ...]
    groups: list[GroupInfo]
    rejected_rows: int = 0

    @property
    def retained(self) -> list[GroupInfo]:
        return [g for g in self.groups if not g.dropped]

    def __len__(self) -> int:
        return len(self.retained)

    def to_records(self) -> list[dict[str, Any]]:
        return [
            {
                'id': g.gid,
                'attributes': dict(zip(self.attributes, (_plain(k) for k in g.key))),
                'population': g.size,
                'small': g.small,
                'dropped': g.dropped,
            }
            for g in self.groups
        ]


def _plain(x: Any) -> Any:
    return x.item() if isinstance(x, np.generic) else x


def quantile_bins(values: npt.ArrayLike, k: int) -> npt.NDArray[np.int64]:
    """Discretize a continuous column into quantile bins of approximately equal population.

    The ``j/k`` edges are the nearest-rank quantiles of the sorted sample. Values equal to an edge go to the lower
    bin, duplicated edges are merged and the bin ids are compacted, so the number of bins can be lower than `k`.

    Parameters
    ----------
    values : array_like
        Continuous values.
    k : int
        Requested number of bins, at least 2.

    Returns
    -------
    numpy.ndarray
        Order-respecting bin id of every value, in ``[0, k')`` with ``k' <= k``.

    Examples
    --------
    >>> quantile_bins(np.arange(1, 10), 3)
    array([0, 0, 0, 1, 1, 1, 2, 2, 2])
    """
    x = np.asarray(values, dtype=np.float64)
    n = x.size
    if int(k) != k or k < 2:
        raise InvalidParamsError(f'Number of bins must be an integer >= 2. Given {k}.')
    if n < k:
        raise InvalidParamsError(f'Cannot split {n} values in {k} bins.')
    if not np.all(np.isfinite(x)):
        raise InvalidInputError('Binned values must be finite.')

    xs = np.sort(x)
    ranks = [math.ceil(j * n / k) - 1 for j in range(1, int(k))]
    edges = np.unique(xs[ranks])
    _, bins = np.unique(np.searchsorted(edges, x, side='left'), return_inverse=True)
    n_bins = int(bins.max()) + 1
    if n_bins < k:
        warnings.warn(
            f'Quantile binning produced {n_bins} bin(s) instead of {k}: duplicated edges were merged.',
            DegenerateBinsWarning,
            stacklevel=2,
        )
    return bins.astype(np.int64).ravel()


def build_groups(
    columns: Mapping[str, npt.ArrayLike] | pd.DataFrame, spec: GroupingSpec
) -> tuple[npt.NDArray[np.int64], GroupTable]:
    """Build (possibly intersectional) sensitive groups.

    The group of a row is the tuple of its (binned) attribute values. Ids are assigned in lexicographic order of the
    tuples, so they do not depend on the row order. Rows with a missing attribute are rejected and rows of dropped
    groups get the id ``EXCLUDED``.

    Parameters
    ----------
    columns : pandas.DataFrame or dict
        Raw attribute columns.
    spec : GroupingSpec
        Attributes to cross, binning rules and minimum group size policy.

    Returns
    -------
    tuple(numpy.ndarray, GroupTable)
        Group id of every row and table of the non-empty groups.
    """
    df = pd.DataFrame({a: pd.Series(columns[a]).reset_index(drop=True) for a in _present(columns, spec.attributes)})
    missing = df.isna().any(axis=1).to_numpy()
    if missing.any():
        warnings.warn(
            f'{int(missing.sum())} row(s) with missing sensitive attributes rejected.',
            MissingValueWarning,
            stacklevel=2,
        )
    ids = np.full(len(df), EXCLUDED, dtype=np.int64)
    keep = df[~missing].copy()
    if keep.empty:
        return ids, GroupTable(tuple(spec.attributes), [], int(missing.sum()))

    for col, k in spec.continuous_bins.items():
        try:
            keep[col] = quantile_bins(keep[col].to_numpy(dtype=np.float64), k)
        except (TypeError, ValueError) as err:
            if isinstance(err, InvalidParamsError):
                raise
            raise InvalidInputError(f'Column {col!r} cannot be binned, it must be numeric.', column=col)
        width = len(str(int(k) - 1))
        keep[col] = [f'q{b:0{width}d}' for b in keep[col]]

    attrs = list(spec.attributes)
    gid = keep.groupby(attrs, sort=True).ngroup().to_numpy()
    keys = keep.groupby(attrs, sort=True).size()

    groups = []
    small_rows = np.zeros(len(keep), dtype=bool)
    for i, (key, size) in enumerate(keys.items()):
        key = key if isinstance(key, tuple) else (key,)
        small = int(size) < spec.min_group_size
        if small:
            small_rows |= gid == i
            action = 'dropped' if spec.drop_small_groups else 'kept'
            warnings.warn(
                f'Group {" x ".join(map(str, key))} has {size} row(s), less than the minimum group size '
                f'{spec.min_group_size} ({action}).',
                SmallGroupWarning,
                stacklevel=2,
            )
        groups.append(GroupInfo(i, tuple(_plain(k) for k in key), int(size), small, small and spec.drop_small_groups))

    if spec.drop_small_groups:
        gid = np.where(small_rows, EXCLUDED, gid)
    ids[~missing] = gid
    return ids, GroupTable(tuple(spec.attributes), groups, int(missing.sum()))


def _present(columns: Mapping[str, Any] | pd.DataFrame, attributes: Sequence[str]) -> Sequence[str]:
    for a in attributes:
        if a not in columns:
            raise InvalidInputError(f'Missing sensitive attribute column {a!r}.', column=a)
    return attributes


def partition(data: EvalData | None = None, group: npt.ArrayLike | None = None) -> Partition:
    """Split row indices by group.

    Parameters
    ----------
    data : ClassificationData or RegressionData, optional
        Evaluation data, its ``group`` column is used when `group` is not given.
    group : array_like, optional
        Group id of every row. Rows with id ``EXCLUDED`` (or a missing id) are left out with a warning.

    Returns
    -------
    dict
        Map from group id to the sorted index array of its rows, ordered by group id.
    """
    if group is None:
        if data is None:
            raise InvalidInputError('Either data or group ids must be given.')
        group = data.group
    g = pd.Series(np.asarray(group))
    if data is not None and len(g) != len(data):
        raise InvalidInputError(f'Got {len(g)} group ids for {len(data)} rows.')

    excluded = g.isna().to_numpy() | (g == EXCLUDED).to_numpy()
    if excluded.any():
        warnings.warn(f'{int(excluded.sum())} row(s) excluded from the partition.', ExcludedRowsWarning, stacklevel=2)
    kept = g[~excluded]
    rows = np.flatnonzero(~excluded)
    return {_plain(k): rows[v].astype(np.intp) for k, v in kept.groupby(kept, sort=True).indices.items()}

from __future__ import annotations

import json
import logging
import pathlib
from typing import Any
from typing import Sequence

import numpy as np
import pandas as pd
from sparsefair.diagnostics import InvalidInputError
from sparsefair.groups import ClassificationData
from sparsefair.groups import EvalData
from sparsefair.groups import GroupingSpec
from sparsefair.groups import GroupTable
from sparsefair.groups import RegressionData
from sparsefair.groups import build_groups
from sparsefair.helpers import atomic_write

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1  #: Version of the JSON report layout.
SCORE_PREFIX = 'score_'  #: Prefix of the class probability columns.


def read_table(path: str | pathlib.Path) -> pd.DataFrame:
    """Read a UTF-8 CSV file with a header row."""
    try:
        df = pd.read_csv(path, encoding='utf-8')
    except FileNotFoundError:
        raise InvalidInputError(f'Input file {path} not found.')
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as err:
        raise InvalidInputError(f'Cannot parse {path} as CSV. {err}')
    logger.info('Read %d rows and %d columns from %s', len(df), df.shape[1], path)
    return df


def _require(df: pd.DataFrame, columns: Sequence[str]) -> None:
    for c in columns:
        if c not in df.columns:
            raise InvalidInputError(f'Missing column {c!r}. Available columns are {list(df.columns)}.', column=c)


def _no_missing(df: pd.DataFrame, column: str) -> None:
    bad = np.flatnonzero(df[column].isna().to_numpy())
    if bad.size:
        r = int(bad[0])
        raise InvalidInputError(f'Missing value in column {column!r} (row {r}).', row=r, column=column)


def _numeric(df: pd.DataFrame, column: str) -> np.ndarray:
    _no_missing(df, column)
    values = pd.to_numeric(df[column], errors='coerce')
    bad = np.flatnonzero(values.isna().to_numpy())
    if bad.size:
        r = int(bad[0])
        raise InvalidInputError(
            f'Non-numeric value {df[column].iloc[r]!r} in column {column!r} (row {r}).', row=r, column=column
        )
    return values.to_numpy(dtype=np.float64)


def _cast_classes(classes: Sequence[Any], like: pd.Series) -> list[Any]:
    if pd.api.types.is_numeric_dtype(like):
        try:
            return [np.asarray(pd.to_numeric(c)).item() if isinstance(c, str) else c for c in classes]
        except ValueError:
            raise InvalidInputError(f'Class set {list(classes)} does not match numeric labels.')
    return [str(c) for c in classes]


def _labels(df: pd.DataFrame, column: str) -> np.ndarray:
    _no_missing(df, column)
    return df[column].to_numpy()


def to_classification(
    df: pd.DataFrame,
    group: np.ndarray,
    label: str = 'y_true',
    prediction: str = 'y_pred',
    classes: Sequence[Any] | None = None,
    score_prefix: str = SCORE_PREFIX,
) -> ClassificationData:
    """Build classification data from a table.

    Probability scores are read from the ``<score_prefix><class>`` columns when at least one is present, in which
    case every class must have one.
    """
    _require(df, [label, prediction])
    y_true, y_pred = _labels(df, label), _labels(df, prediction)
    if classes is not None:
        classes = _cast_classes(classes, df[label])

    score_cols = [c for c in df.columns if str(c).startswith(score_prefix)]
    scores = None
    if score_cols:
        cls = classes if classes is not None else np.unique(np.concatenate([y_true, y_pred])).tolist()
        wanted = [f'{score_prefix}{c}' for c in cls]
        _require(df, wanted)
        scores = np.column_stack([_numeric(df, c) for c in wanted])
    return ClassificationData(y_true=y_true, y_pred=y_pred, group=group, scores=scores, classes=classes)


def to_regression(
    df: pd.DataFrame, group: np.ndarray, label: str = 'y_true', prediction: str = 'y_pred'
) -> RegressionData:
    """Build regression data from a table."""
    _require(df, [label, prediction])
    return RegressionData(y_true=_numeric(df, label), y_pred=_numeric(df, prediction), group=group)


def load_data(
    df: pd.DataFrame,
    task: str,
    grouping: GroupingSpec,
    label: str = 'y_true',
    prediction: str = 'y_pred',
    classes: Sequence[Any] | None = None,
) -> tuple[EvalData, GroupTable]:
    """Build evaluation data and sensitive groups from a table.

    Parameters
    ----------
    df : pandas.DataFrame
        Table with label, prediction, optional score and sensitive attribute columns.
    task : str
        ``'classification'`` or ``'regression'``.
    grouping : GroupingSpec
        How groups are built from the attribute columns.
    label : str
        Name of the true label column.
    prediction : str
        Name of the prediction column.
    classes : sequence, optional
        Explicit class set, classification only.

    Returns
    -------
    tuple(ClassificationData or RegressionData, GroupTable)
        Data whose ``group`` column holds group ids, and the group table.
    """
    _require(df, list(grouping.attributes))
    ids, table = build_groups(df, grouping)
    if task == 'classification':
        return to_classification(df, ids, label, prediction, classes), table
    if task == 'regression':
        return to_regression(df, ids, label, prediction), table
    raise InvalidInputError(f'Task can be only classification or regression. Given {task}.')


def _default(o: Any) -> Any:
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (set, frozenset, tuple)):
        return list(o)
    if isinstance(o, pathlib.Path):
        return str(o)
    raise TypeError(f'Object of type {type(o).__name__} is not JSON serializable.')


def dumps(payload: dict[str, Any]) -> str:
    """Serialize a report with sorted keys, so equal payloads give identical bytes."""
    return json.dumps({'schema_version': SCHEMA_VERSION, **payload}, sort_keys=True, indent=2, default=_default) + '\n'


def write_json(path: str | pathlib.Path, payload: dict[str, Any]) -> pathlib.Path:
    return atomic_write(path, dumps(payload))


def write_csv(path: str | pathlib.Path, df: pd.DataFrame) -> pathlib.Path:
    return atomic_write(path, df.to_csv(index=False, lineterminator='\n', float_format='%.17g'))

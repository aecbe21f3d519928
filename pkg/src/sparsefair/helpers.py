from __future__ import annotations

import os
import pathlib
import tempfile
from typing import Any
from typing import Sequence

import numpy as np
import yaml
from sparsefair.diagnostics import InvalidParamsError

OUTPUT_DIR_ENV = 'SPARSEFAIR_OUTPUT_DIR'  #: Environment variable with the default directory of relative outputs.


def listcast(x: Any) -> list[Any]:
    """
    Cast any input object to a list.
    If `x` is a Python dictionary, the output will be the list of all the dict-keys.

    Code example

    >>> listcast('gender')
    ['gender']
    >>> listcast((2, 5))
    [2, 5]

    :param x: input object
    :return: list
    """
    if isinstance(x, list):
        return x
    elif isinstance(x, str):
        return [x]
    try:
        return list(x)
    except TypeError:
        return [x]


def split_list(x: Any, cast: type = str) -> list[Any]:
    """Split a comma-separated string (or cast a sequence) into a list of `cast` values.

    >>> split_list('2, 5,10', int)
    [2, 5, 10]
    """
    items = [s.strip() for s in x.split(',')] if isinstance(x, str) else listcast(x)
    try:
        return [cast(s) for s in items if s != '']
    except (TypeError, ValueError):
        raise InvalidParamsError(f'Cannot read {x!r} as a list of {cast.__name__}.')


def load_parameters(param_file: str | pathlib.Path, section: str | None = None) -> dict[str, Any]:
    """
    Load a YAML parameter file.

    The `DEFAULT` mapping of the file is merged into every other section, the values of the section taking
    precedence. With `section` given, the merged parameters of that section (or the bare defaults if the section is
    missing) are returned, otherwise the ``DEFAULT`` mapping itself.

    Parameters
    ----------
    param_file: str, pathlib.Path
        Path to the YAML parameter file.
    section: str, optional
        Name of the section to read, usually a command name.

    Returns
    -------
    Dictionary of parameters.
    """
    fp = pathlib.Path(param_file)
    if not fp.is_file():
        raise InvalidParamsError(f'Parameter file {fp} not found.')
    with open(fp, encoding='utf-8') as f:
        try:
            config = yaml.safe_load(f)
        except yaml.YAMLError as err:
            raise InvalidParamsError(f'Parameter file {fp} is not valid YAML. {err}')

    if not config:
        return {}
    if not isinstance(config, dict):
        raise InvalidParamsError(f'Parameter file {fp} must contain a mapping. Given {type(config).__name__}.')

    # remove the DEFAULT dictionary and merge it to the requested section
    default_dict = dict(config.pop('DEFAULT', None) or {})
    if section is None:
        return default_dict
    return {**default_dict, **dict(config.get(section) or {})}


def parse_grouping(text: str | Sequence[str]) -> tuple[list[str], dict[str, int]]:
    """Read a grouping from its compact form, ``'gender,race,age:5'``.

    A ``column:k`` item asks for `k` quantile bins of a continuous column.

    Returns
    -------
    tuple(list, dict)
        Attribute columns, in order, and number of bins of the continuous ones.
    """
    attributes, bins = [], {}
    for item in split_list(text):
        name, _, k = item.partition(':')
        name = name.strip()
        if not name:
            raise InvalidParamsError(f'Empty attribute name in grouping {text!r}.')
        attributes.append(name)
        if k:
            try:
                bins[name] = int(k)
            except ValueError:
                raise InvalidParamsError(f'Number of bins of {name!r} must be an integer. Given {k!r}.')
    if not attributes:
        raise InvalidParamsError('Grouping needs at least one attribute.')
    return attributes, bins


def stderr(values: Sequence[float]) -> float:
    """Sample standard error of the mean, 0 for a single value."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size < 2:
        return 0.0
    return float(np.std(arr, ddof=1) / np.sqrt(arr.size))


def output_path(path: str | pathlib.Path) -> pathlib.Path:
    """Resolve an output path, relative paths going under ``$SPARSEFAIR_OUTPUT_DIR`` when it is set."""
    p = pathlib.Path(path)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not p.is_absolute():
        p = pathlib.Path(base) / p
    return p


def atomic_write(path: str | pathlib.Path, text: str) -> pathlib.Path:
    """Write a text file through a temporary sibling, so that readers never see a partial file."""
    p = pathlib.Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=p.parent, prefix=f'.{p.name}.', suffix='.tmp')
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
        os.replace(tmp, p)
    except BaseException:
        pathlib.Path(tmp).unlink(missing_ok=True)
        raise
    return p

from __future__ import annotations

import dataclasses
import enum
import inspect
import logging
from typing import Any
from typing import Sequence

import numpy as np
import numpy.typing as npt
import pandas as pd
from scipy import stats
from sparsefair.diagnostics import DegenerateFitError
from sparsefair.diagnostics import InvalidParamsError
from sparsefair.groups import ClassificationData
from sparsefair.groups import RegressionData
from sparsefair.metrics import RateMatrix

logger = logging.getLogger(__name__)

BASE_RATE = 0.5  #: Class-1 probability of the first group of the multigroup scenario.
MAX_GAP = 0.4  #: Class-1 probability difference between the first and the last group.
TWOGROUP_RATES = (0.5, 0.8)  #: Class-1 probabilities of the two-group classification scenario.
FEATURE_MEANS = (30.0, 10.0)  #: Feature means of the two-group regression scenario.
FEATURE_VARIANCE = 4.0  #: Feature variance of both regression groups.
NOISE_VARIANCES = (10.0, 1.0)  #: Residual variances of the two regression groups.
BETA = 1.0  #: Regression coefficient shared by both groups, the intercept is zero.


class Scenario(str, enum.Enum):
    """Simulated datasets."""

    MULTIGROUP_CLS = 'multigroup_cls'
    TWOGROUP_CLS = 'twogroup_cls'
    TWOGROUP_REG = 'twogroup_reg'


@dataclasses.dataclass
class ScenarioSpec:
    """Class representing a simulated dataset."""

    scenario: Scenario = Scenario.MULTIGROUP_CLS  #: Scenario.
    n: int = 1000  #: Number of samples.
    n_groups: int = 2  #: Number of groups, multigroup scenario only.
    seed: int = 0  #: Seed of the random generator.
    noise_variances: tuple[float, float] = NOISE_VARIANCES  #: Residual variances, regression scenario only.

    def __post_init__(self) -> None:
        try:
            self.scenario = Scenario(str(getattr(self.scenario, 'value', self.scenario)).lower())
        except ValueError:
            valid = [s.value for s in Scenario]
            raise InvalidParamsError(f'Unknown scenario {self.scenario}. Valid scenarios are {valid}.')
        self.noise_variances = tuple(float(v) for v in self.noise_variances)  # type: ignore[assignment]
        if int(self.n) != self.n or int(self.seed) != self.seed:
            raise InvalidParamsError(f'Sample count and seed must be integers. Given n={self.n}, seed={self.seed}.')
        if self.scenario is Scenario.MULTIGROUP_CLS:
            if self.n_groups < 2:
                raise InvalidParamsError(f'Number of groups must be at least 2. Given {self.n_groups}.')
            if self.n < self.n_groups:
                raise InvalidParamsError(f'Cannot split {self.n} samples in {self.n_groups} groups.')
        elif self.scenario is Scenario.TWOGROUP_CLS and self.n < 2:
            raise InvalidParamsError(f'Two-group scenario needs at least 2 samples. Given {self.n}.')
        elif self.scenario is Scenario.TWOGROUP_REG:
            if self.n < 4:
                raise InvalidParamsError(f'Regression scenario needs at least 4 samples. Given {self.n}.')
            if len(self.noise_variances) != 2 or min(self.noise_variances) < 0:
                raise InvalidParamsError(f'Expected two non-negative noise variances. Given {self.noise_variances}.')

    @classmethod
    def from_dict(cls, param: dict[str, Any]) -> ScenarioSpec:
        return cls(**{k: v for k, v in param.items() if k in inspect.signature(cls).parameters})


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator seeded with a 64-bit integer."""
    return np.random.Generator(np.random.PCG64(seed))


def group_sizes(n: int, n_groups: int) -> npt.NDArray[np.int64]:
    """Split `n` samples in `n_groups` groups, the remainder going to the lowest-index groups.

    Examples
    --------
    >>> group_sizes(101, 2)
    array([51, 50])
    """
    if n_groups < 1 or n < n_groups:
        raise InvalidParamsError(f'Cannot split {n} samples in {n_groups} groups.')
    sizes = np.full(n_groups, n // n_groups, dtype=np.int64)
    sizes[: n % n_groups] += 1
    return sizes


def multigroup_rates(n_groups: int) -> RateMatrix:
    """Population class rates of the multigroup scenario.

    Group ``g`` predicts class 1 with probability ``0.5 + 0.4 g / (n_groups - 1)``, so the largest class-1 rate
    difference stays 0.4 whatever the number of groups.

    Parameters
    ----------
    n_groups : int
        Number of groups, at least 2.

    Returns
    -------
    RateMatrix
        Rows ``[1 - p_g, p_g]`` for classes ``(0, 1)``.
    """
    if n_groups < 2:
        raise InvalidParamsError(f'Number of groups must be at least 2. Given {n_groups}.')
    p1 = BASE_RATE + MAX_GAP * np.arange(n_groups) / (n_groups - 1)
    return RateMatrix(tuple(range(n_groups)), (0, 1), np.column_stack([1 - p1, p1]))


def _bernoulli_groups(
    rng: np.random.Generator, sizes: Sequence[int], p1: Sequence[float], labels: Sequence[Any]
) -> ClassificationData:
    y = np.concatenate([(rng.random(int(s)) < p).astype(np.int64) for s, p in zip(sizes, p1)])
    group = np.repeat(np.asarray(labels), sizes)
    return ClassificationData(y_true=y, y_pred=y.copy(), group=group, classes=(0, 1))


def gen_multigroup_cls(n: int, n_groups: int, seed: int = 0) -> tuple[ClassificationData, RateMatrix]:
    """Simulated multigroup classification labels.

    Only labels are drawn, ``y_pred`` is a copy of ``y_true`` so the data can be evaluated as-is or replaced by the
    output of a model.

    Parameters
    ----------
    n : int
        Number of samples.
    n_groups : int
        Number of groups.
    seed : int
        Seed of the random generator.

    Returns
    -------
    tuple(ClassificationData, RateMatrix)
        Sampled data and the population class rates.
    """
    ScenarioSpec(Scenario.MULTIGROUP_CLS, n, n_groups, seed)
    rates = multigroup_rates(n_groups)
    data = _bernoulli_groups(make_rng(seed), group_sizes(n, n_groups), rates.column(1), range(n_groups))
    logger.debug('Sampled multigroup scenario with %d groups and %d rows', n_groups, n)
    return data, rates


def gen_twogroup_cls(n: int, seed: int = 0) -> ClassificationData:
    """Simulated two-group classification labels, class-1 rates 0.5 (group A) and 0.8 (group B)."""
    ScenarioSpec(Scenario.TWOGROUP_CLS, n, 2, seed)
    return _bernoulli_groups(make_rng(seed), group_sizes(n, 2), TWOGROUP_RATES, ('A', 'B'))


def gen_twogroup_reg(
    n: int, seed: int = 0, noise_variances: Sequence[float] = NOISE_VARIANCES
) -> tuple[RegressionData, npt.NDArray[np.float64]]:
    """Simulated two-group regression data.

    Features are normal with means 30 (group A) and 10 (group B) and variance 4. Targets follow ``y = x + e`` with
    the same coefficient for both groups and a group-dependent noise variance. The predictions are those of the true
    linear model.

    Parameters
    ----------
    n : int
        Number of samples.
    seed : int
        Seed of the random generator.
    noise_variances : tuple(float, float)
        Residual variances of groups A and B.

    Returns
    -------
    tuple(RegressionData, numpy.ndarray)
        Data with the true-model predictions, and the feature of every row.
    """
    spec = ScenarioSpec(Scenario.TWOGROUP_REG, n, 2, seed, tuple(noise_variances))  # type: ignore[arg-type]
    rng = make_rng(seed)
    sizes = group_sizes(n, 2)
    x = np.concatenate([rng.normal(m, np.sqrt(FEATURE_VARIANCE), int(s)) for m, s in zip(FEATURE_MEANS, sizes)])
    eps = np.concatenate([rng.normal(0.0, np.sqrt(v), int(s)) for v, s in zip(spec.noise_variances, sizes)])
    group = np.repeat(np.array(['A', 'B']), sizes)
    return RegressionData(y_true=BETA * x + eps, y_pred=BETA * x, group=group), x


def fit_simple_ols(x: npt.ArrayLike, y: npt.ArrayLike) -> tuple[float, float]:
    """Least-squares line through the points ``(x, y)``.

    Parameters
    ----------
    x : array_like
        Regressor, not constant.
    y : array_like
        Target, same length as `x`.

    Returns
    -------
    tuple(float, float)
        Intercept and slope.

    Raises
    ------
    DegenerateFitError
        Less than two points or constant regressor.
    """
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise DegenerateFitError(f'x and y must be 1D arrays of the same length. Given {xa.shape} and {ya.shape}.')
    if xa.size < 2:
        raise DegenerateFitError(f'Least squares needs at least 2 points. Given {xa.size}.')
    if np.all(xa == xa[0]):
        raise DegenerateFitError(f'Regressor is constant (x={xa[0]}), the slope is not identifiable.')
    res = stats.linregress(xa, ya)
    return float(res.intercept), float(res.slope)


def generate(spec: ScenarioSpec, predictor: str = 'true') -> pd.DataFrame:
    """Sample a scenario as a table with the ``y_true``, ``y_pred`` and ``group`` columns.

    Parameters
    ----------
    spec : ScenarioSpec
        Scenario to sample.
    predictor : str
        Regression predictions: ``'true'`` for the true model, ``'ols'`` for a least-squares line fitted on the
        whole sample. Ignored by the classification scenarios.

    Returns
    -------
    pandas.DataFrame
        One row per sample. The regression scenario also has the feature column ``x``.
    """
    if spec.scenario is Scenario.MULTIGROUP_CLS:
        data, _ = gen_multigroup_cls(spec.n, spec.n_groups, spec.seed)
        return pd.DataFrame({'y_true': data.y_true, 'y_pred': data.y_pred, 'group': data.group})
    if spec.scenario is Scenario.TWOGROUP_CLS:
        data = gen_twogroup_cls(spec.n, spec.seed)
        return pd.DataFrame({'y_true': data.y_true, 'y_pred': data.y_pred, 'group': data.group})

    reg, x = gen_twogroup_reg(spec.n, spec.seed, spec.noise_variances)
    if predictor == 'ols':
        b0, b1 = fit_simple_ols(x, reg.y_true)
        y_pred = b0 + b1 * x
    elif predictor == 'true':
        y_pred = reg.y_pred
    else:
        raise InvalidParamsError(f'Predictor can be only true or ols. Given {predictor}.')
    return pd.DataFrame({'x': x, 'y_true': reg.y_true, 'y_pred': y_pred, 'group': reg.group})


def main() -> None:
    for k in (2, 5, 10):
        print(k, multigroup_rates(k).column(1))
    print(generate(ScenarioSpec(Scenario.TWOGROUP_REG, n=8, seed=1)))


if __name__ == '__main__':
    main()

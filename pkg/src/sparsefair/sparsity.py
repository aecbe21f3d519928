from __future__ import annotations

import dataclasses
import enum
import warnings
from typing import Any
from typing import Sequence
from typing import Union

import numpy as np
import numpy.typing as npt
from sparsefair.diagnostics import InvalidInputError
from sparsefair.diagnostics import InvalidParamsError
from sparsefair.diagnostics import NegativeInputError
from sparsefair.diagnostics import ZeroVectorWarning

VectorLike = Union[Sequence[float], npt.NDArray[np.floating]]

# rows of the pairwise-difference block evaluated at once in the Gini double sum
_GINI_BLOCK = 1024


class Measure(str, enum.Enum):
    """Sparsity measures available as the group comparison operator."""

    MPD = 'mpd'
    GINI = 'gini'
    PQ = 'pq'


class Transform(str, enum.Enum):
    """Positivity transform applied to raw values before the measure."""

    NONE = 'none'
    EXP = 'exp'


@dataclasses.dataclass(frozen=True)
class SparsityMeasureSpec:
    """Which sparsity measure to use, with its parameters and positivity transform."""

    kind: Measure = Measure.PQ  #: Sparsity measure.
    p: float = 1.0  #: Inner norm exponent of the PQ Index.
    q: float = 2.0  #: Outer norm exponent of the PQ Index.
    transform: Transform = Transform.NONE  #: Transform applied to the raw values.

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, 'kind', Measure(str(getattr(self.kind, 'value', self.kind)).lower()))
        except ValueError:
            raise InvalidParamsError(f'Measure can be only mpd, gini or pq. Given {self.kind}.')
        try:
            object.__setattr__(
                self, 'transform', Transform(str(getattr(self.transform, 'value', self.transform)).lower())
            )
        except ValueError:
            raise InvalidParamsError(f'Transform can be only none or exp. Given {self.transform}.')
        object.__setattr__(self, 'p', float(self.p))
        object.__setattr__(self, 'q', float(self.q))
        if self.kind is Measure.PQ:
            check_pq(self.p, self.q)

    def __str__(self) -> str:
        name = f'pq({self.p:g},{self.q:g})' if self.kind is Measure.PQ else self.kind.value
        return name if self.transform is Transform.NONE else f'{name}[{self.transform.value}]'

    def raw(self) -> SparsityMeasureSpec:
        """Same measure without positivity transform."""
        return dataclasses.replace(self, transform=Transform.NONE)

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {'kind': self.kind.value, 'transform': self.transform.value}
        if self.kind is Measure.PQ:
            d.update(p=self.p, q=self.q)
        return d


def check_pq(p: float, q: float) -> None:
    """Validate the exponents of the PQ Index.

    Parameters
    ----------
    p : float
        Inner norm exponent.
    q : float
        Outer norm exponent.

    Raises
    ------
    InvalidParamsError
        If ``0 < p < q`` does not hold (``p == q`` included, the index is identically zero there).
    """
    if not (np.isfinite(p) and np.isfinite(q)) or not 0 < p < q:
        raise InvalidParamsError(f'PQ Index needs 0 < p < q. Given p={p}, q={q}.')


def as_vector(w: VectorLike) -> npt.NDArray[np.float64]:
    """Cast the input to a 1D float array with at least one finite component.

    Parameters
    ----------
    w : array_like
        Vector components.

    Returns
    -------
    numpy.ndarray
        Float64 copy of the components.

    Raises
    ------
    InvalidInputError
        If the input is empty, not one-dimensional or has non-finite components.
    """
    try:
        arr = np.array(w, dtype=np.float64)
    except (TypeError, ValueError) as err:
        raise InvalidInputError(f'Vector components must be real numbers. {err}')
    if arr.ndim != 1:
        raise InvalidInputError(f'Vector must be one-dimensional. Given shape {arr.shape}.')
    if arr.size == 0:
        raise InvalidInputError('Vector must have at least one component.')
    bad = np.flatnonzero(~np.isfinite(arr))
    if bad.size:
        raise InvalidInputError(f'Non-finite component {arr[bad[0]]} at index {bad[0]}.')
    return arr


def _nonneg(w: VectorLike) -> npt.NDArray[np.float64]:
    arr = as_vector(w)
    neg = np.flatnonzero(arr < 0)
    if neg.size:
        raise NegativeInputError(int(neg[0]), float(arr[neg[0]]))
    return arr


def _zero_vector(name: str) -> float:
    warnings.warn(f'{name} of the all-zero vector is undefined, returning 0.', ZeroVectorWarning, stacklevel=3)
    return 0.0


def lp_norm(w: VectorLike, p: float) -> float:
    """Compute the l_p norm of a vector.

    The components are rescaled by their largest absolute value before being raised to the power `p`, so that large
    exponents do not overflow.

    Parameters
    ----------
    w : array_like
        Vector components.
    p : float
        Norm exponent, strictly positive.

    Returns
    -------
    float
        ``(sum_i |w_i|^p)^(1/p)``.
    """
    if not np.isfinite(p) or p <= 0:
        raise InvalidParamsError(f'Norm exponent must be positive. Given {p}.')
    a = np.abs(as_vector(w))
    m = a.max()
    if m == 0:
        return 0.0
    return float(m * np.sum((a / m) ** p) ** (1.0 / p))


def mpd(w: VectorLike) -> float:
    """Maximum Pairwise Difference, ``max(w) - min(w)``.

    The MPD is a difference of components, so it is also defined for negative values.
    """
    arr = as_vector(w)
    return float(arr.max() - arr.min())


def gini(w: VectorLike) -> float:
    """Gini Index of a non-negative vector.

    Evaluated from its definition as the normalized double sum of absolute pairwise differences
    ``sum_i sum_j |w_i - w_j| / (2 d sum_i w_i)``. The all-zero vector returns 0 with a ``ZeroVectorWarning``.

    Parameters
    ----------
    w : array_like
        Non-negative vector components.

    Returns
    -------
    float
        Gini Index in ``[0, 1)``.
    """
    arr = _nonneg(w)
    total = np.sum(arr)
    if total == 0:
        return _zero_vector('Gini Index')
    d = arr.size
    diff = 0.0
    for start in range(0, d, _GINI_BLOCK):
        diff += float(np.sum(np.abs(arr[start : start + _GINI_BLOCK, None] - arr[None, :])))
    return max(diff / (2 * d * total), 0.0)


def gini_sorted_form(w: VectorLike) -> float:
    """Gini Index through its sorted-linear form.

    The vector is normalized to unit l_1 norm and sorted in decreasing order, then
    ``Gini(w) = 1/d sum_i (d + 1 - 2i) w_i``. On the simplex this makes the Gini Index a piece-wise linear function,
    linear inside each region with a fixed ordering of the components.
    """
    arr = _nonneg(w)
    total = np.sum(arr)
    if total == 0:
        return _zero_vector('Gini Index')
    d = arr.size
    ws = np.sort(arr / total)[::-1]
    coeff = d + 1 - 2 * np.arange(1, d + 1, dtype=np.float64)
    return max(float(np.dot(coeff, ws)) / d, 0.0)


def pq_index(w: VectorLike, p: float = 1.0, q: float = 2.0) -> float:
    """PQ Index of a non-negative vector.

    ``I_pq(w) = 1 - d^(1/q - 1/p) ||w||_p / ||w||_q``, for ``0 < p < q``.
    The index is 0 if and only if all components are equal and it reaches its maximum ``1 - d^(1/q - 1/p)`` on
    vectors with a single nonzero component.

    Parameters
    ----------
    w : array_like
        Non-negative vector components.
    p : float, optional
        Inner norm exponent. The default value is 1.
    q : float, optional
        Outer norm exponent. The default value is 2.

    Returns
    -------
    float
        PQ Index value.
    """
    check_pq(p, q)
    arr = _nonneg(w)
    if not np.any(arr):
        return _zero_vector('PQ Index')
    d = arr.size
    ratio = lp_norm(arr, p) / lp_norm(arr, q)
    return max(1.0 - d ** (1.0 / q - 1.0 / p) * ratio, 0.0)


def apply_transform(w: VectorLike, transform: Transform | str = Transform.NONE) -> npt.NDArray[np.float64]:
    """Enforce the positivity of the raw values.

    Parameters
    ----------
    w : array_like
        Raw values, possibly negative.
    transform : Transform
        ``EXP`` maps every component ``x`` to ``e^x``. ``NONE`` passes the values through, provided they are all
        non-negative.

    Returns
    -------
    numpy.ndarray
        Non-negative vector.

    Raises
    ------
    NegativeInputError
        ``NONE`` transform with a negative component. The error names the offending index.
    """
    tr = Transform(getattr(transform, 'value', transform))
    if tr is Transform.EXP:
        arr = as_vector(w)
        with np.errstate(over='ignore'):
            out = np.exp(arr)
        if not np.all(np.isfinite(out)):
            raise InvalidInputError(f'Exponential transform overflows. Max input value {arr.max()}.')
        return out
    return _nonneg(w)


def sparsity(w: VectorLike, spec: SparsityMeasureSpec | None = None) -> float:
    """Evaluate a sparsity measure, after its positivity transform.

    Single entry point used by the fairness criteria.

    Parameters
    ----------
    w : array_like
        Raw vector of per-group values.
    spec : SparsityMeasureSpec, optional
        Measure specification. The default is the PQ Index with ``p=1``, ``q=2`` and no transform.

    Returns
    -------
    float
        Sparsity of the vector.
    """
    spec = spec or SparsityMeasureSpec()
    if spec.kind is Measure.MPD and spec.transform is Transform.NONE:
        return mpd(w)
    arr = apply_transform(w, spec.transform)
    if spec.kind is Measure.MPD:
        return mpd(arr)
    if spec.kind is Measure.GINI:
        return gini(arr)
    return pq_index(arr, spec.p, spec.q)


def sparsity_rows(matrix: npt.ArrayLike, spec: SparsityMeasureSpec | None = None) -> npt.NDArray[np.float64]:
    """Evaluate a sparsity measure on every row of a matrix.

    Same semantics as :func:`sparsity`, vectorised over rows. All-zero rows score 0 and raise a single
    ``ZeroVectorWarning`` reporting how many rows were affected.

    Parameters
    ----------
    matrix : array_like
        2D array, one vector per row.
    spec : SparsityMeasureSpec, optional
        Measure specification. The default is the PQ Index with ``p=1``, ``q=2`` and no transform.

    Returns
    -------
    numpy.ndarray
        Sparsity of each row.
    """
    spec = spec or SparsityMeasureSpec()
    m = np.array(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[1] == 0:
        raise InvalidInputError(f'Expected a 2D matrix with at least one column. Given shape {m.shape}.')
    if not np.all(np.isfinite(m)):
        raise InvalidInputError('Matrix has non-finite entries.')
    if m.shape[0] == 0:
        return np.zeros(0)

    if spec.kind is Measure.MPD and spec.transform is Transform.NONE:
        return m.max(axis=1) - m.min(axis=1)
    if spec.transform is Transform.EXP:
        with np.errstate(over='ignore'):
            m = np.exp(m)
        if not np.all(np.isfinite(m)):
            raise InvalidInputError('Exponential transform overflows.')
    else:
        neg = np.argwhere(m < 0)
        if neg.size:
            raise NegativeInputError(int(neg[0][1]), float(m[tuple(neg[0])]))
    if spec.kind is Measure.MPD:
        return m.max(axis=1) - m.min(axis=1)

    d = m.shape[1]
    out = np.zeros(m.shape[0])
    zero = ~np.any(m > 0, axis=1)
    if np.any(zero):
        warnings.warn(
            f'{int(zero.sum())} all-zero vector(s) scored 0 by {spec}.',
            ZeroVectorWarning,
            stacklevel=2,
        )
    mz = m[~zero]
    if spec.kind is Measure.GINI:
        # sum_i sum_j |w_i - w_j| = 2 sum_k (2k - d - 1) w_(k), components sorted increasingly
        coeff = 2 * np.arange(1, d + 1, dtype=np.float64) - d - 1
        num = 2 * np.sort(mz, axis=1) @ coeff
        out[~zero] = np.maximum(num / (2 * d * mz.sum(axis=1)), 0.0)
    else:
        scale = mz.max(axis=1, keepdims=True)
        r = mz / scale
        norm_p = np.sum(r**spec.p, axis=1) ** (1.0 / spec.p)
        norm_q = np.sum(r**spec.q, axis=1) ** (1.0 / spec.q)
        out[~zero] = np.maximum(1.0 - d ** (1.0 / spec.q - 1.0 / spec.p) * norm_p / norm_q, 0.0)
    return out


def main() -> None:
    w = [0.7, 0.4]
    for spec in (SparsityMeasureSpec(Measure.MPD), SparsityMeasureSpec(Measure.GINI), SparsityMeasureSpec()):
        print(f'{spec}: {sparsity(w, spec):.7f}')


if __name__ == '__main__':
    main()

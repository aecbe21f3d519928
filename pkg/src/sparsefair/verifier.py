from __future__ import annotations

import dataclasses
import enum
import logging
from typing import Any
from typing import Callable
from typing import Dict
from typing import Optional
from typing import Sequence
from typing import Tuple

import numpy as np
import numpy.typing as npt
from sparsefair.diagnostics import InvalidParamsError
from sparsefair.sparsity import gini
from sparsefair.sparsity import lp_norm
from sparsefair.sparsity import Measure
from sparsefair.sparsity import mpd
from sparsefair.sparsity import pq_index
from sparsefair.sparsity import sparsity
from sparsefair.sparsity import SparsityMeasureSpec

logger = logging.getLogger(__name__)

TOL = 1e-9  #: Tolerance of the equality checks.
MARGIN = 1e-12  #: Margin required by the strict inequality checks.
LOW, HIGH = 0.01, 1.0  #: Support of the uniform component sampler.
MIN_GAP = 0.05  #: Minimum spread forced on sampled vectors where a strict change is expected.
PQ_PAIRS: tuple[tuple[float, float], ...] = ((1.0, 2.0), (0.5, 1.5), (1.0, 3.0))

Trial = Tuple[bool, Dict[str, Any]]


class PropertyId(str, enum.Enum):
    """Ideal sparsity properties and the PQ Index theorems that can be checked numerically."""

    D1_ROBIN_HOOD = 'd1'
    D2_SCALING = 'd2'
    D3_RISING_TIDE = 'd3'
    D4_CLONING = 'd4'
    P1_BILL_GATES = 'p1'
    P2_BABIES = 'p2'
    T31_MAX = 't31'
    T32_MIN = 't32'
    T33_L2DIST = 't33'
    T34_TRANSFER = 't34'
    T35_BOUNDS = 't35'
    T36_TRIM = 't36'

    @property
    def is_axiom(self) -> bool:
        return self.value[0] in 'dp'


AXIOMS = tuple(p for p in PropertyId if p.is_axiom)
THEOREMS = tuple(p for p in PropertyId if not p.is_axiom)

# axioms satisfied by each measure
SATISFIED: dict[Measure, frozenset[PropertyId]] = {
    Measure.PQ: frozenset(AXIOMS),
    Measure.GINI: frozenset(AXIOMS),
    Measure.MPD: frozenset({PropertyId.D4_CLONING, PropertyId.P1_BILL_GATES}),
}


def expected_to_hold(prop: PropertyId | str, measure: SparsityMeasureSpec | None = None) -> bool:
    """Whether a property is known to hold for a measure. Theorems always hold."""
    prop = PropertyId(prop)
    if not prop.is_axiom:
        return True
    kind = (measure or SparsityMeasureSpec()).kind
    return prop in SATISFIED[kind]


@dataclasses.dataclass
class CheckReport:
    """Outcome of a randomized property check."""

    property: PropertyId
    measure: SparsityMeasureSpec
    trials: int = 0
    failures: int = 0
    first_counterexample: Optional[Dict[str, Any]] = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.failures > self.trials:
            raise ValueError(f'Failures ({self.failures}) cannot exceed trials ({self.trials}).')
        if (self.first_counterexample is not None) != (self.failures > 0):
            raise ValueError('A counterexample must be stored if and only if some trial failed.')

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def merge(self, other: CheckReport) -> CheckReport:
        """Combine the reports of two batches of trials of the same property, ``self`` coming first."""
        if other.property is not self.property:
            raise ValueError(f'Cannot merge reports of {self.property.value} and {other.property.value}.')
        return CheckReport(
            property=self.property,
            measure=self.measure,
            trials=self.trials + other.trials,
            failures=self.failures + other.failures,
            first_counterexample=self.first_counterexample or other.first_counterexample,
            seed=self.seed,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            'property': self.property.value,
            'measure': self.measure.to_dict(),
            'trials': self.trials,
            'failures': self.failures,
            'passed': self.passed,
            'first_counterexample': self.first_counterexample,
            'seed': self.seed,
        }


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent random stream of a single trial, derived deterministically from the master seed."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, trial])))


def _check_dims(trials: int, dim_range: Sequence[int]) -> tuple[int, int]:
    if trials < 1:
        raise InvalidParamsError(f'Number of trials must be at least 1. Given {trials}.')
    d_min, d_max = (int(d) for d in dim_range)
    if not 2 <= d_min <= d_max:
        raise InvalidParamsError(f'Dimension range must satisfy 2 <= d_min <= d_max. Given [{d_min}, {d_max}].')
    return d_min, d_max


def _sample(rng: np.random.Generator, d: int) -> npt.NDArray[np.float64]:
    return rng.uniform(LOW, HIGH, size=d)


def _sample_spread(rng: np.random.Generator, d: int) -> npt.NDArray[np.float64]:
    w = _sample(rng, d)
    if w.max() - w.min() < MIN_GAP:
        w[int(np.argmax(w))] = w.min() + MIN_GAP + rng.uniform(0.0, 0.5)
    return w


def _vec(w: npt.NDArray[np.float64]) -> list[float]:
    return [float(x) for x in w]


def _strictly_less(a: float, b: float) -> bool:
    return a < b - MARGIN


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= TOL * max(1.0, abs(b))


# Axioms
def _robin_hood(
    spec: SparsityMeasureSpec, rng: np.random.Generator, d: int, interior: bool = False
) -> Trial:
    w = _sample(rng, d)
    if interior:
        # transfer between components that are neither the largest nor the smallest one
        for _ in range(100):
            order = np.argsort(w)
            hi_rank, lo_rank = sorted(rng.choice(np.arange(1, d - 1), size=2, replace=False), reverse=True)
            i, j = int(order[hi_rank]), int(order[lo_rank])
            if w[i] - w[j] >= MIN_GAP:
                break
            w = _sample(rng, d)
    else:
        i, j = (int(k) for k in rng.choice(d, size=2, replace=False))
        if w[i] < w[j]:
            i, j = j, i
        if w[i] - w[j] < MIN_GAP:
            w[i] = w[j] + MIN_GAP + rng.uniform(0.0, 0.5)
    alpha = rng.uniform(0.05, 0.95) * (w[i] - w[j]) / 2
    moved = w.copy()
    moved[i] -= alpha
    moved[j] += alpha
    before, after = sparsity(w, spec), sparsity(moved, spec)
    return _strictly_less(after, before), {
        'inputs': {'w': _vec(w), 'from_index': i, 'to_index': j, 'alpha': float(alpha)},
        'observed': {'S(w)': before, 'S(transferred)': after},
        'expected': 'S(transferred) < S(w)',
    }


def _scaling(spec: SparsityMeasureSpec, rng: np.random.Generator, d: int) -> Trial:
    w = _sample(rng, d)
    alpha = float(np.exp(rng.uniform(np.log(0.1), np.log(10.0))))
    before, after = sparsity(w, spec), sparsity(alpha * w, spec)
    return _close(after, before), {
        'inputs': {'w': _vec(w), 'alpha': alpha},
        'observed': {'S(w)': before, 'S(alpha w)': after},
        'expected': 'S(alpha w) == S(w)',
    }


def _rising_tide(spec: SparsityMeasureSpec, rng: np.random.Generator, d: int) -> Trial:
    w = _sample_spread(rng, d)
    alpha = rng.uniform(0.01, 1.0)
    before, after = sparsity(w, spec), sparsity(w + alpha, spec)
    return _strictly_less(after, before), {
        'inputs': {'w': _vec(w), 'alpha': float(alpha)},
        'observed': {'S(w)': before, 'S(w + alpha)': after},
        'expected': 'S(w + alpha) < S(w)',
    }


def _cloning(spec: SparsityMeasureSpec, rng: np.random.Generator, d: int) -> Trial:
    w = _sample(rng, d)
    before, after = sparsity(w, spec), sparsity(np.concatenate([w, w]), spec)
    return _close(after, before), {
        'inputs': {'w': _vec(w)},
        'observed': {'S(w)': before, 'S([w, w])': after},
        'expected': 'S([w, w]) == S(w)',
    }


def _bill_gates(spec: SparsityMeasureSpec, rng: np.random.Generator, d: int) -> Trial:
    w = _sample(rng, d)
    i = int(rng.integers(d))
    beta = (w.max() - w[i]) + 1.0
    alpha = rng.uniform(0.01, 1.0)
    base = w.copy()
    base[i] += beta
    boosted = base.copy()
    boosted[i] += alpha
    before, after = sparsity(base, spec), sparsity(boosted, spec)
    return _strictly_less(before, after), {
        'inputs': {'w': _vec(w), 'index': i, 'beta': float(beta), 'alpha': float(alpha)},
        'observed': {'S(w + beta e_i)': before, 'S(w + (beta + alpha) e_i)': after},
        'expected': 'S(w + (beta + alpha) e_i) > S(w + beta e_i)',
    }


def _babies(spec: SparsityMeasureSpec, rng: np.random.Generator, d: int, zero: bool | None = None) -> Trial:
    w = _sample(rng, d)
    if zero is None:
        zero = bool(rng.integers(2))
    if zero:
        w[int(rng.integers(d))] = 0.0
    before, after = sparsity(w, spec), sparsity(np.append(w, 0.0), spec)
    return _strictly_less(before, after), {
        'inputs': {'w': _vec(w)},
        'observed': {'S(w)': before, 'S([w, 0])': after},
        'expected': 'S([w, 0]) > S(w)',
    }


# Theorems
def _pq_pair(rng: np.random.Generator, pairs: Sequence[tuple[float, float]]) -> tuple[float, float]:
    return pairs[int(rng.integers(len(pairs)))]


def _pq_max(rng: np.random.Generator, d: int, pairs: Sequence[tuple[float, float]]) -> Trial:
    p, q = _pq_pair(rng, pairs)
    w = np.zeros(d)
    k = int(rng.integers(d))
    w[k] = rng.uniform(0.01, 10.0)
    observed = pq_index(w, p, q)
    expected = 1.0 - d ** (1.0 / q - 1.0 / p)
    return abs(observed - expected) <= MARGIN, {
        'inputs': {'w': _vec(w), 'p': p, 'q': q},
        'observed': {'pq': observed},
        'expected': f'pq == 1 - d^(1/q - 1/p) = {expected!r}',
    }


def _pq_min(rng: np.random.Generator, d: int, pairs: Sequence[tuple[float, float]]) -> Trial:
    p, q = _pq_pair(rng, pairs)
    c = rng.uniform(0.01, 10.0)
    w = _sample_spread(rng, d)
    constant, other = pq_index(np.full(d, c), p, q), pq_index(w, p, q)
    return constant < MARGIN and other > 0, {
        'inputs': {'c': float(c), 'w': _vec(w), 'p': p, 'q': q},
        'observed': {'pq(c 1_d)': constant, 'pq(w)': other},
        'expected': 'pq(c 1_d) == 0 < pq(w)',
    }


def _pq_l2_distance(rng: np.random.Generator, d: int) -> Trial:
    w = _sample_spread(rng, d)
    lhs = float(np.linalg.norm(w / np.linalg.norm(w) - d**-0.5 * np.ones(d)))
    rhs = float(np.sqrt(2 * pq_index(w, 1, 2)))
    return abs(lhs - rhs) <= TOL, {
        'inputs': {'w': _vec(w)},
        'observed': {'distance': lhs, 'sqrt(2 pq)': rhs},
        'expected': '|| w / ||w||_2 - d^(-1/2) 1_d ||_2 == sqrt(2 pq(w))',
    }


def _pq_transfer(rng: np.random.Generator, d: int) -> Trial:
    w = _sample(rng, d)
    k = int(np.argmax(w))
    w[[0, k]] = w[[k, 0]]
    second = w[1:].max()
    w[0] = second + rng.uniform(MIN_GAP, 1.0)
    # largest transfer that keeps the first component the maximum after the transfer
    bound = min(w[0], (w[0] - second) * (d - 1) / d)
    c = rng.uniform(0.05, 0.95) * bound
    moved = w.copy()
    moved[0] -= c
    moved[1:] += c / (d - 1)
    before, after = pq_index(w, 1, 2), pq_index(moved, 1, 2)
    return _strictly_less(after, before), {
        'inputs': {'w': _vec(w), 'c': float(c)},
        'observed': {'pq(w)': before, 'pq(transferred)': after},
        'expected': 'pq(transferred) < pq(w)',
    }


def _bounds(rng: np.random.Generator, d: int) -> Trial:
    w = _sample(rng, d)
    l2 = lp_norm(w, 2)
    g, m, pq = gini(w), mpd(w), pq_index(w, 1, 2)
    slack = (
        d * m / (2 * l2) - g,
        2 * l2 * np.sqrt(2 * pq) - m,
        g - pq,
    )
    return min(slack) >= -MARGIN, {
        'inputs': {'w': _vec(w)},
        'observed': {'gini': g, 'mpd': m, 'pq': pq, 'slack': [float(s) for s in slack]},
        'expected': 'gini <= d mpd / (2 ||w||_2); mpd <= 2 ||w||_2 sqrt(2 pq); pq <= gini',
    }


def _trim_pair(
    rng: np.random.Generator, d: int, q: float, bottom: float
) -> tuple[npt.NDArray[np.float64], npt.NDArray[np.float64], float]:
    top = 1.0
    lo, hi = bottom + 0.25 * (top - bottom), top - 0.25 * (top - bottom)
    # inner parts are redrawn together when no second part fits the first one
    while True:
        inner1 = rng.uniform(lo, hi, size=d - 2)
        for _ in range(1000):
            inner2 = rng.uniform(lo, hi, size=d - 2)
            # rescaling of the second extremes giving both vectors the same normalized max and min
            t = (np.sum(inner2**q) / np.sum(inner1**q)) ** (1.0 / q)
            if t * bottom < inner2.min() and inner2.max() < t * top:
                return inner1, inner2, float(t)


def _trim(rng: np.random.Generator, d: int, pairs: Sequence[tuple[float, float]]) -> Trial:
    p, q = _pq_pair(rng, pairs)
    d = max(d, 4)
    top, bottom = 1.0, rng.uniform(0.01, 0.2)
    inner1, inner2, t = _trim_pair(rng, d, q, bottom)
    w1 = np.concatenate([[top], inner1, [bottom]])
    w2 = np.concatenate([[t * top], inner2, [t * bottom]])
    full = pq_index(w1, p, q), pq_index(w2, p, q)
    trimmed = pq_index(inner1, p, q), pq_index(inner2, p, q)
    ok = abs(full[0] - full[1]) <= MARGIN or np.sign(full[0] - full[1]) == np.sign(trimmed[0] - trimmed[1])
    return bool(ok), {
        'inputs': {'w1': _vec(w1), 'w2': _vec(w2), 'p': p, 'q': q},
        'observed': {'pq(w1)': full[0], 'pq(w2)': full[1], 'pq(trimmed w1)': trimmed[0], 'pq(trimmed w2)': trimmed[1]},
        'expected': 'pq(w1) < pq(w2) implies pq(trimmed w1) < pq(trimmed w2)',
    }


_AXIOM_TRIALS: dict[PropertyId, Callable[[SparsityMeasureSpec, np.random.Generator, int], Trial]] = {
    PropertyId.D1_ROBIN_HOOD: _robin_hood,
    PropertyId.D2_SCALING: _scaling,
    PropertyId.D3_RISING_TIDE: _rising_tide,
    PropertyId.D4_CLONING: _cloning,
    PropertyId.P1_BILL_GATES: _bill_gates,
    PropertyId.P2_BABIES: _babies,
}


def _theorem_trial(
    prop: PropertyId, pairs: Sequence[tuple[float, float]]
) -> Callable[[np.random.Generator, int], Trial]:
    table: dict[PropertyId, Callable[[np.random.Generator, int], Trial]] = {
        PropertyId.T31_MAX: lambda rng, d: _pq_max(rng, d, pairs),
        PropertyId.T32_MIN: lambda rng, d: _pq_min(rng, d, pairs),
        PropertyId.T33_L2DIST: _pq_l2_distance,
        PropertyId.T34_TRANSFER: _pq_transfer,
        PropertyId.T35_BOUNDS: _bounds,
        PropertyId.T36_TRIM: lambda rng, d: _trim(rng, d, pairs),
    }
    return table[prop]


def _run(
    prop: PropertyId,
    spec: SparsityMeasureSpec,
    trial: Callable[[np.random.Generator, int], Trial],
    trials: int,
    dim_range: Sequence[int],
    seed: int,
    stop_at_first: bool = False,
) -> CheckReport:
    d_min, d_max = _check_dims(trials, dim_range)
    report = CheckReport(property=prop, measure=spec, seed=seed)
    for t in range(trials):
        rng = trial_rng(seed, t)
        d = int(rng.integers(d_min, d_max + 1))
        ok, details = trial(rng, d)
        report = report.merge(
            CheckReport(
                property=prop,
                measure=spec,
                trials=1,
                failures=int(not ok),
                first_counterexample=None if ok else {'trial': t, **details},
                seed=seed,
            )
        )
        if stop_at_first and not ok:
            break
    logger.debug(f'{prop.value} with {spec}: {report.failures}/{report.trials} failures.')
    return report


def check_axiom(
    prop: PropertyId | str,
    measure: SparsityMeasureSpec | None = None,
    trials: int = 10_000,
    dim_range: Sequence[int] = (2, 64),
    seed: int = 0,
) -> CheckReport:
    """Randomized check of one of the six ideal sparsity properties.

    Every trial draws a dimension in `dim_range`, a random vector with components uniform in ``(0.01, 1)`` and the
    random parameters of the property (scaling factor, transfer amount, tide level, Bill Gates boost, ...), then
    evaluates the property with a tolerance of 1e-9 for equalities and a margin of 1e-12 for strict inequalities.

    Parameters
    ----------
    prop : PropertyId
        One of the axioms D1-D4, P1, P2.
    measure : SparsityMeasureSpec, optional
        Measure under test. Its positivity transform is ignored. The default is the PQ Index with ``p=1``, ``q=2``.
    trials : int, optional
        Number of random trials. The default value is 10000.
    dim_range : tuple(int, int), optional
        Inclusive range of the sampled dimensions. The default value is ``(2, 64)``.
    seed : int, optional
        Master seed. The default value is 0.

    Returns
    -------
    CheckReport
        Trials, failures and the first counterexample found.
    """
    prop = PropertyId(prop)
    if not prop.is_axiom:
        raise InvalidParamsError(f'{prop.value} is a theorem, use check_theorem.')
    spec = (measure or SparsityMeasureSpec()).raw()
    axiom = _AXIOM_TRIALS[prop]
    return _run(prop, spec, lambda rng, d: axiom(spec, rng, d), trials, dim_range, seed)


def check_theorem(
    prop: PropertyId | str,
    trials: int = 10_000,
    dim_range: Sequence[int] = (2, 64),
    seed: int = 0,
    pq_pairs: Sequence[tuple[float, float]] = PQ_PAIRS,
) -> CheckReport:
    """Randomized check of one of the PQ Index theorems.

    T31, T32 and T36 draw ``(p, q)`` for every trial from `pq_pairs`. T33, T34 and T35 are stated for ``p=1``,
    ``q=2``. The T34 sampler keeps the transferred-from component the largest one and the T36 sampler builds pairs of
    vectors sharing their normalized largest and smallest components.

    Parameters
    ----------
    prop : PropertyId
        One of the theorems T31-T36.
    trials : int, optional
        Number of random trials. The default value is 10000.
    dim_range : tuple(int, int), optional
        Inclusive range of the sampled dimensions. The default value is ``(2, 64)``.
    seed : int, optional
        Master seed. The default value is 0.
    pq_pairs : list(tuple(float, float)), optional
        ``(p, q)`` pairs sampled by the theorems that hold for any exponents.

    Returns
    -------
    CheckReport
        Trials, failures and the first counterexample found.
    """
    prop = PropertyId(prop)
    if prop.is_axiom:
        raise InvalidParamsError(f'{prop.value} is an axiom, use check_axiom.')
    for p, q in pq_pairs:
        SparsityMeasureSpec(Measure.PQ, p, q)
    return _run(prop, SparsityMeasureSpec(), _theorem_trial(prop, pq_pairs), trials, dim_range, seed)


def counterexample_search(
    prop: PropertyId | str,
    measure: SparsityMeasureSpec | None = None,
    budget: int = 100,
    seed: int = 0,
) -> CheckReport:
    """Directed search of a counterexample to a property.

    Unlike :func:`check_axiom`, the samplers aim at the configurations that break the Maximum Pairwise Difference:
    Robin Hood transfers between interior components, scaling factors far from 1, vectors already containing a zero
    for the Babies property. The search stops at the first failure.

    Parameters
    ----------
    prop : PropertyId
        Property to falsify.
    measure : SparsityMeasureSpec, optional
        Measure under test, ignored for theorems. The default is the PQ Index with ``p=1``, ``q=2``.
    budget : int, optional
        Maximum number of search steps. The default value is 100.
    seed : int, optional
        Master seed. The default value is 0.

    Returns
    -------
    CheckReport
        Report with ``trials`` equal to the number of steps used.
    """
    prop = PropertyId(prop)
    if budget < 1:
        raise InvalidParamsError(f'Search budget must be at least 1. Given {budget}.')
    spec = (measure or SparsityMeasureSpec()).raw()
    trial: Callable[[np.random.Generator, int], Trial]
    dims: tuple[int, int] = (2, 8)
    if prop is PropertyId.D1_ROBIN_HOOD:
        trial, dims = (lambda rng, d: _robin_hood(spec, rng, d, interior=True)), (4, 8)
    elif prop is PropertyId.P2_BABIES:
        trial = lambda rng, d: _babies(spec, rng, d, zero=True)  # noqa: E731
    elif prop.is_axiom:
        axiom = _AXIOM_TRIALS[prop]
        trial = lambda rng, d: axiom(spec, rng, d)  # noqa: E731
    else:
        spec = SparsityMeasureSpec()
        trial = _theorem_trial(prop, PQ_PAIRS)
    return _run(prop, spec, trial, budget, dims, seed, stop_at_first=True)


def main() -> None:
    for measure in ('pq', 'gini', 'mpd'):
        spec = SparsityMeasureSpec(measure)
        row = [f'{p.value}:{"ok" if check_axiom(p, spec, trials=500).passed else "--"}' for p in AXIOMS]
        print(f'{str(spec):>10}  ' + '  '.join(row))


if __name__ == '__main__':
    main()

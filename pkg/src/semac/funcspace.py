"""Input alphabets, target functions and the pairwise separation constraints.

A node holds one of ``Q`` input values.  A *combination* fixes the inputs of
all ``K`` nodes; the receiver must tell apart any two combinations whose
function outputs differ.  :func:`build_constraint_set` lists those pairs
together with the squared distance they require.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

__all__ = [
    "InputDomain",
    "TargetFunction",
    "Combination",
    "CombinationSet",
    "ConstraintSet",
    "CombinatorialOverflowError",
    "EmptyConstraintSetError",
    "FULL",
    "SYMMETRIC_SHARED",
    "SYMMETRIC_KINDS",
    "DEFAULT_COMBINATION_CAP",
    "enumerate_combinations",
    "selector_vector",
    "build_constraint_set",
    "default_epsilon",
]

FULL = "full"
SYMMETRIC_SHARED = "symmetric-shared"
SYMMETRIC_KINDS = ("sum", "product", "max")
DEFAULT_COMBINATION_CAP = 10**6
DEFAULT_PAIR_CAP = 2 * 10**7


class CombinatorialOverflowError(ValueError):
    """Raised when an enumeration would exceed its configured cap."""


class EmptyConstraintSetError(ValueError):
    """Raised when the function is constant, so no pair needs separating."""


@dataclass(frozen=True)
class InputDomain:
    """Alphabet of ``Q = 2**b`` real input values shared by ``K`` nodes."""

    K: int
    values: tuple

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", values)
        Q = len(values)
        if Q < 2 or Q & (Q - 1):
            raise ValueError(f"alphabet size must be a power of two >= 2, got {Q}")
        if len(set(values)) != Q:
            raise ValueError("input values must be distinct")
        if self.K < 1:
            raise ValueError(f"node count must be >= 1, got {self.K}")

    @property
    def Q(self) -> int:
        return len(self.values)

    @property
    def b(self) -> int:
        return self.Q.bit_length() - 1

    @property
    def N(self) -> int:
        return self.Q * self.K

    @property
    def value_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


def _all_index_tuples(Q: int, K: int) -> np.ndarray:
    """All ``Q**K`` index tuples in lexicographic order, shape ``(Q**K, K)``."""
    grids = np.indices((Q,) * K, dtype=np.int64)
    return grids.reshape(K, -1).T.copy()


def _histograms(Q: int, K: int) -> np.ndarray:
    """Histograms of length ``Q`` summing to ``K``, in the order of sorted index tuples."""
    rows = []
    for combo in itertools.combinations_with_replacement(range(Q), K):
        rows.append(np.bincount(combo, minlength=Q))
    return np.asarray(rows, dtype=np.int64).reshape(-1, Q)


class TargetFunction:
    """Function of the node inputs, evaluated on index tuples.

    Parameters
    ----------
    kind : str
        ``"sum"``, ``"product"``, ``"max"`` or ``"custom"``.
    domain : InputDomain
    func : callable, optional
        For ``kind="custom"``: maps an ``(n, K)`` array of input *values* to
        ``n`` outputs.
    table : sequence of float, optional
        For ``kind="custom"``: outputs of all ``Q**K`` tuples in lexicographic
        index order.  Alternative to ``func``.
    """

    def __init__(self, kind: str, domain: InputDomain,
                 func: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                 table: Optional[Sequence[float]] = None,
                 combination_cap: int = DEFAULT_COMBINATION_CAP):
        if kind not in SYMMETRIC_KINDS + ("custom",):
            raise ValueError(f"unknown function kind {kind!r}")
        if kind == "custom" and func is None and table is None:
            raise ValueError("custom functions need either func or table")
        self.kind = kind
        self.domain = domain
        self._func = func
        self._table = None
        if table is not None:
            table = np.asarray(table, dtype=float)
            if table.shape != (domain.Q ** domain.K,):
                raise ValueError(
                    f"custom table must have {domain.Q ** domain.K} entries, got {table.size}")
            self._table = table

        outputs = self._range_outputs(combination_cap)
        unique = np.unique(outputs)
        self.M = int(unique.size)
        self.f_max = float(unique[-1])
        self.f_min = float(unique[0])
        self.range_values = unique

    @property
    def symmetric(self) -> bool:
        return self.kind in SYMMETRIC_KINDS

    def _range_outputs(self, cap: int) -> np.ndarray:
        Q, K = self.domain.Q, self.domain.K
        if self.symmetric:
            count = math.comb(K + Q - 1, Q - 1)
            if count > cap:
                raise CombinatorialOverflowError(
                    f"{count} histograms exceed the cap of {cap}")
            return self.of_histograms(_histograms(Q, K))
        if self._table is not None:
            return self._table
        if Q ** K > cap:
            raise CombinatorialOverflowError(f"{Q ** K} tuples exceed the cap of {cap}")
        return self.of_indices(_all_index_tuples(Q, K))

    def of_values(self, values: np.ndarray) -> np.ndarray:
        """Outputs for an ``(n, K)`` array of input values."""
        values = np.asarray(values, dtype=float)
        if self.kind == "sum":
            return values.sum(axis=1)
        if self.kind == "product":
            return values.prod(axis=1)
        if self.kind == "max":
            return values.max(axis=1)
        return np.asarray(self._func(values), dtype=float).reshape(-1)

    def of_indices(self, indices: np.ndarray) -> np.ndarray:
        """Outputs for an ``(n, K)`` array of alphabet indices."""
        indices = np.atleast_2d(np.asarray(indices, dtype=np.int64))
        if self._table is not None:
            flat = np.ravel_multi_index(indices.T, (self.domain.Q,) * self.domain.K)
            return self._table[flat]
        return self.of_values(self.domain.value_array[indices])

    def of_histograms(self, histograms: np.ndarray) -> np.ndarray:
        """Outputs of a symmetric function for an ``(n, Q)`` array of histograms."""
        if not self.symmetric:
            raise ValueError(f"{self.kind!r} is not a symmetric function")
        hist = np.atleast_2d(np.asarray(histograms))
        v = self.domain.value_array
        if self.kind == "sum":
            return hist @ v
        if self.kind == "product":
            return np.prod(np.power(v[None, :], hist), axis=1)
        present = hist > 0
        return np.where(present, v[None, :], -np.inf).max(axis=1)

    def __repr__(self):
        return (f"TargetFunction(kind={self.kind!r}, Q={self.domain.Q}, K={self.domain.K}, "
                f"M={self.M})")


@dataclass(frozen=True)
class Combination:
    """One input combination with its selector vector and function output."""

    indices: tuple
    histogram: tuple
    selector: np.ndarray = field(repr=False, compare=False)
    output: float = 0.0


def selector_vector(indices: Sequence[int], Q: int) -> np.ndarray:
    """Binary vector of ``K`` one-hot blocks of length ``Q``.

    >>> selector_vector((1, 0), 2).tolist()
    [0, 1, 1, 0]
    """
    indices = np.asarray(indices, dtype=np.int64)
    if indices.ndim != 1 or np.any(indices < 0) or np.any(indices >= Q):
        raise ValueError(f"indices must lie in [0, {Q}), got {indices.tolist()}")
    a = np.zeros(indices.size * Q, dtype=np.int64)
    a[np.arange(indices.size) * Q + indices] = 1
    return a


class CombinationSet(Sequence):
    """Array-backed sequence of :class:`Combination` objects.

    ``indices`` holds one alphabet-index tuple per row, ``histograms`` the
    per-value counts and ``outputs`` the function values.  In symmetric-shared
    mode each row is one canonical (sorted) representative of a histogram.
    """

    def __init__(self, domain: InputDomain, mode: str, indices: np.ndarray,
                 outputs: np.ndarray):
        self.domain = domain
        self.mode = mode
        self.indices = indices
        self.outputs = np.asarray(outputs, dtype=float)
        Q = domain.Q
        self.histograms = _bincount_rows(indices, Q)

    def __len__(self):
        return self.indices.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        row = self.indices[i]
        return Combination(tuple(int(q) for q in row),
                           tuple(int(c) for c in self.histograms[i]),
                           selector_vector(row, self.domain.Q),
                           float(self.outputs[i]))

    def __iter__(self) -> Iterator[Combination]:
        for i in range(len(self)):
            yield self[i]

    def selector_matrix(self) -> np.ndarray:
        """Stacked selectors, shape ``(n, N)``."""
        n, K = self.indices.shape
        Q = self.domain.Q
        A = np.zeros((n, K * Q), dtype=np.int8)
        A[np.arange(n)[:, None], np.arange(K) * Q + self.indices] = 1
        return A

    def design_vectors(self) -> np.ndarray:
        """Per-combination vectors the modulation design constrains.

        Full mode: the selectors ``a_i``.  Symmetric-shared mode: the input
        histograms, since ``a_i X`` collapses to ``c_i X_0`` when every node
        uses the same ``X_0``.
        """
        if self.mode == SYMMETRIC_SHARED:
            return self.histograms.astype(float)
        return self.selector_matrix().astype(float)


def _bincount_rows(indices: np.ndarray, Q: int) -> np.ndarray:
    n = indices.shape[0]
    hist = np.zeros((n, Q), dtype=np.int64)
    np.add.at(hist, (np.repeat(np.arange(n), indices.shape[1]), indices.ravel()), 1)
    return hist


def enumerate_combinations(domain: InputDomain, function: TargetFunction,
                           mode: str = FULL,
                           cap: int = DEFAULT_COMBINATION_CAP) -> CombinationSet:
    """Enumerate input combinations.

    ``full`` returns all ``Q**K`` tuples in lexicographic order.
    ``symmetric-shared`` returns one sorted representative per input
    histogram, ``C(K+Q-1, Q-1)`` of them, and is only valid for symmetric
    functions.
    """
    Q, K = domain.Q, domain.K
    if mode == FULL:
        count = Q ** K
        if count > cap:
            raise CombinatorialOverflowError(f"{count} combinations exceed the cap of {cap}")
        indices = _all_index_tuples(Q, K)
    elif mode == SYMMETRIC_SHARED:
        if not function.symmetric:
            raise ValueError(f"symmetric-shared mode needs a symmetric function, "
                             f"got {function.kind!r}")
        count = math.comb(K + Q - 1, Q - 1)
        if count > cap:
            raise CombinatorialOverflowError(f"{count} combinations exceed the cap of {cap}")
        indices = np.asarray(list(itertools.combinations_with_replacement(range(Q), K)),
                             dtype=np.int64).reshape(-1, K)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return CombinationSet(domain, mode, indices, function.of_indices(indices))


@dataclass(frozen=True)
class ConstraintSet:
    """Pairs ``(i, j)`` with distinct outputs and their required separation.

    ``delta_f[p] = epsilon * |f_i - f_j|`` is the minimum squared distance
    between the received sequences of combinations ``i[p]`` and ``j[p]``.
    """

    epsilon: float
    i: np.ndarray
    j: np.ndarray
    delta_f: np.ndarray
    mode: str = FULL

    def __len__(self):
        return self.i.size

    @property
    def pairs(self):
        return list(zip(self.i.tolist(), self.j.tolist(), self.delta_f.tolist()))

    def scaled(self, factor: float) -> "ConstraintSet":
        return ConstraintSet(self.epsilon * factor, self.i, self.j,
                             self.delta_f * factor, self.mode)


def default_epsilon(function: TargetFunction) -> float:
    """``1 / (f_max - f_min)``, so the widest pair needs squared distance 1."""
    spread = function.f_max - function.f_min
    if spread <= 0:
        raise EmptyConstraintSetError("constant function has no separation scale")
    return 1.0 / spread


def build_constraint_set(combinations: CombinationSet, epsilon: Optional[float] = None,
                         function: Optional[TargetFunction] = None,
                         pair_cap: int = DEFAULT_PAIR_CAP) -> ConstraintSet:
    """Every unordered pair of combinations with differing outputs.

    Parameters
    ----------
    combinations : CombinationSet
    epsilon : float, optional
        Separation scale.  Defaults to :func:`default_epsilon` of ``function``.
    function : TargetFunction, optional
        Only needed when ``epsilon`` is omitted.
    pair_cap : int
        Upper bound on the number of pairs materialised.

    Raises
    ------
    EmptyConstraintSetError
        If all outputs are equal.
    """
    if epsilon is None:
        if function is None:
            raise ValueError("either epsilon or function is required")
        epsilon = default_epsilon(function)
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    f = combinations.outputs
    n = f.size
    if n * (n - 1) // 2 > pair_cap:
        raise CombinatorialOverflowError(
            f"{n * (n - 1) // 2} candidate pairs exceed the cap of {pair_cap}")
    ii, jj = np.triu_indices(n, k=1)
    gap = np.abs(f[ii] - f[jj])
    keep = gap > 0
    if not np.any(keep):
        raise EmptyConstraintSetError("function is constant over the enumerated combinations")
    return ConstraintSet(float(epsilon), ii[keep].astype(np.int64), jj[keep].astype(np.int64),
                         epsilon * gap[keep], combinations.mode)

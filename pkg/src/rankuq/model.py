"""Contextual Bradley-Terry-Luce model: parameter layout, design vectors,
likelihood with analytic derivatives, and the sum-to-zero constraint system.

Parameter layout (``p = M + M*d`` entries)::

    [b0_0, ..., b0_{M-1}, b_0[0..d-1], b_1[0..d-1], ..., b_{M-1}[0..d-1]]

i.e. all intercepts first, then the slope rows model-major, so the slope
block of a design vector is ``kron(e_j - e_i, x)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
import numpy.typing as npt
import scipy.linalg
import scipy.sparse as sp
from scipy.special import expit

from .errors import DimensionMismatch, InvalidRecord

FloatArray = npt.NDArray[np.float64]

# |margin| beyond this means the data are (nearly) separated
MARGIN_WARN = 30.0
# design matrices with at most this many entries are stored densely
DENSE_LIMIT = 4_000_000


def n_params(M: int, d: int) -> int:
    return M + M * d


def _frozen(a: npt.ArrayLike, dtype=np.float64) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ComparisonRecord:
    """One comparison: ``outcome == 1`` means the right model won."""

    left: int
    right: int
    covariates: tuple[float, ...]
    outcome: int

    def __post_init__(self) -> None:
        if self.left == self.right:
            raise InvalidRecord(f"left and right must differ, got {self.left}")
        if self.outcome not in (0, 1):
            raise InvalidRecord(f"outcome must be 0 or 1, got {self.outcome}")
        if not all(np.isfinite(self.covariates)):
            raise InvalidRecord("covariates must be finite")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Comparisons stored column-wise.

    ``left``/``right`` are model indices, ``X`` is ``(L, d)``, ``y`` holds the
    binary outcomes (1 = right model preferred).
    """

    left: np.ndarray
    right: np.ndarray
    X: np.ndarray
    y: np.ndarray
    model_names: tuple[str, ...]
    covariate_names: tuple[str, ...] = ()
    _design: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "left", _frozen(self.left, np.int64))
        object.__setattr__(self, "right", _frozen(self.right, np.int64))
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(len(self.left), -1)
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "y", _frozen(self.y, np.float64))
        object.__setattr__(self, "model_names", tuple(self.model_names))
        names = tuple(self.covariate_names) or tuple(f"x{k}" for k in range(X.shape[1]))
        object.__setattr__(self, "covariate_names", names)

        M, L = len(self.model_names), len(self.left)
        if M < 2:
            raise InvalidRecord("need at least two models")
        if len(set(self.model_names)) != M:
            raise InvalidRecord("model names must be unique")
        if not (len(self.right) == len(self.y) == self.X.shape[0] == L):
            raise DimensionMismatch("record columns have different lengths")
        if len(names) != self.X.shape[1]:
            raise DimensionMismatch("covariate_names does not match covariate dimension")
        if L:
            if self.left.min() < 0 or self.right.min() < 0 or max(self.left.max(), self.right.max()) >= M:
                raise InvalidRecord("model index out of range")
            if np.any(self.left == self.right):
                raise InvalidRecord("a record compares a model with itself")
            if not np.all(np.isin(self.y, (0.0, 1.0))):
                raise InvalidRecord("outcomes must be 0 or 1")
            if not np.all(np.isfinite(self.X)):
                raise InvalidRecord("covariates must be finite")

    @classmethod
    def from_records(cls, records: Iterable[ComparisonRecord], model_names: Sequence[str],
                     d: int | None = None, covariate_names: Sequence[str] = ()) -> "Dataset":
        records = list(records)
        if d is None:
            d = len(records[0].covariates) if records else len(covariate_names)
        X = np.zeros((len(records), d))
        for n, r in enumerate(records):
            if len(r.covariates) != d:
                raise DimensionMismatch(f"record {n} has {len(r.covariates)} covariates, expected {d}")
            X[n] = r.covariates
        return cls(
            left=[r.left for r in records],
            right=[r.right for r in records],
            X=X,
            y=[r.outcome for r in records],
            model_names=model_names,
            covariate_names=covariate_names,
        )

    @property
    def M(self) -> int:
        return len(self.model_names)

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def L(self) -> int:
        return len(self.left)

    def __len__(self) -> int:
        return self.L

    @property
    def records(self) -> list[ComparisonRecord]:
        return [
            ComparisonRecord(int(i), int(j), tuple(float(v) for v in x), int(y))
            for i, j, x, y in zip(self.left, self.right, self.X, self.y)
        ]

    def subset(self, index: npt.ArrayLike) -> "Dataset":
        index = np.asarray(index, dtype=np.int64)
        return Dataset(self.left[index], self.right[index], self.X[index], self.y[index],
                       self.model_names, self.covariate_names)

    def design(self) -> sp.csr_matrix | np.ndarray:
        """``(L, M + M*d)`` matrix whose rows are the design vectors.

        Dense for small problems (faster products), sparse otherwise.
        """
        if not self._design:
            X = design_matrix(self.left, self.right, self.X, self.M)
            if X.shape[0] * X.shape[1] <= DENSE_LIMIT:
                X = X.toarray()
                X.setflags(write=False)
            self._design.append(X)
        return self._design[0]


@dataclass(frozen=True, eq=False)
class StackedParams:
    """Intercepts ``(M,)`` and slopes ``(M, d)``."""

    intercepts: np.ndarray
    slopes: np.ndarray

    def __post_init__(self) -> None:
        b0 = _frozen(self.intercepts).reshape(-1)
        B = np.asarray(self.slopes, dtype=np.float64)
        if B.ndim == 1 and B.size == 0:
            B = B.reshape(len(b0), 0)
        if B.ndim != 2 or B.shape[0] != len(b0):
            raise DimensionMismatch(f"slopes must be ({len(b0)}, d), got {B.shape}")
        if not (np.all(np.isfinite(b0)) and np.all(np.isfinite(B))):
            raise ValueError("parameters must be finite")
        object.__setattr__(self, "intercepts", b0)
        object.__setattr__(self, "slopes", _frozen(B))

    @classmethod
    def zeros(cls, M: int, d: int) -> "StackedParams":
        return cls(np.zeros(M), np.zeros((M, d)))

    @classmethod
    def from_vector(cls, vec: npt.ArrayLike, M: int, d: int) -> "StackedParams":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (n_params(M, d),):
            raise DimensionMismatch(f"expected vector of length {n_params(M, d)}, got {vec.shape}")
        return cls(vec[:M], vec[M:].reshape(M, d))

    @property
    def M(self) -> int:
        return len(self.intercepts)

    @property
    def d(self) -> int:
        return self.slopes.shape[1]

    @property
    def vector(self) -> FloatArray:
        return np.concatenate([self.intercepts, self.slopes.reshape(-1)])

    def normalization_error(self) -> float:
        """Largest violation of the sum-to-zero constraints."""
        errs = [abs(self.intercepts.sum())]
        if self.d:
            errs.append(float(np.abs(self.slopes.sum(axis=0)).max()))
        return float(max(errs))

    def is_normalized(self, tol: float = 1e-10) -> bool:
        return self.normalization_error() <= tol

    def normalized(self) -> "StackedParams":
        """Project onto the sum-to-zero subspace (does not change any probability)."""
        return StackedParams(self.intercepts - self.intercepts.mean(),
                             self.slopes - self.slopes.mean(axis=0, keepdims=True))

    def utilities(self, x: npt.ArrayLike) -> FloatArray:
        x = _check_x(x, self.d)
        return self.intercepts + self.slopes @ x

    def permuted(self, perm: Sequence[int]) -> "StackedParams":
        """Parameters after relabelling: new model ``k`` is old model ``perm[k]``."""
        perm = np.asarray(perm)
        return StackedParams(self.intercepts[perm], self.slopes[perm])


@dataclass(frozen=True, eq=False)
class ConstraintSystem:
    C: np.ndarray
    P: np.ndarray
    basis: np.ndarray  # orthonormal columns spanning {b : C b = 0}

    @property
    def dim(self) -> int:
        return self.basis.shape[1]


def _check_x(x: npt.ArrayLike, d: int) -> FloatArray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape != (d,):
        raise DimensionMismatch(f"covariate vector must have length {d}, got {x.shape[0]}")
    return x


def _check_pair(i: int, j: int, M: int) -> None:
    if not (0 <= i < M and 0 <= j < M):
        raise IndexError(f"model index out of range for M={M}: ({i}, {j})")
    if i == j:
        raise ValueError(f"pair must have distinct models, got ({i}, {j})")


def build_design_vector(i: int, j: int, x: npt.ArrayLike, M: int, d: int) -> FloatArray:
    """``(e_j, e_j (x) x) - (e_i, e_i (x) x)``, so ``params @ out = theta_j(x) - theta_i(x)``."""
    _check_pair(i, j, M)
    x = _check_x(x, d)
    out = np.zeros(n_params(M, d))
    out[j] += 1.0
    out[i] -= 1.0
    out[M + j * d:M + (j + 1) * d] += x
    out[M + i * d:M + (i + 1) * d] -= x
    return out


def design_rows(pairs: Sequence[tuple[int, int]], x: npt.ArrayLike, M: int, d: int) -> FloatArray:
    """Dense matrix stacking the design vectors of ``pairs`` at one covariate."""
    if not len(pairs):
        return np.zeros((0, n_params(M, d)))
    return np.vstack([build_design_vector(i, j, x, M, d) for i, j in pairs])


def design_matrix(left: np.ndarray, right: np.ndarray, X: np.ndarray, M: int) -> sp.csr_matrix:
    L, d = X.shape
    p = n_params(M, d)
    width = 2 * (1 + d)
    rows = np.repeat(np.arange(L), width)
    k = np.arange(d)
    cols = np.concatenate([
        right[:, None], left[:, None],
        M + right[:, None] * d + k, M + left[:, None] * d + k,
    ], axis=1)
    vals = np.concatenate([np.ones((L, 1)), -np.ones((L, 1)), X, -X], axis=1)
    return sp.csr_matrix((vals.reshape(-1), (rows, cols.reshape(-1))), shape=(L, p))


def utility(params: StackedParams, m: int, x: npt.ArrayLike) -> float:
    if not 0 <= m < params.M:
        raise IndexError(f"model index {m} out of range for M={params.M}")
    x = _check_x(x, params.d)
    return float(params.intercepts[m] + params.slopes[m] @ x)


def preference_probability(params: StackedParams, i: int, j: int, x: npt.ArrayLike) -> float:
    """P(model j preferred over model i | x)."""
    _check_pair(i, j, params.M)
    return float(expit(utility(params, j, x) - utility(params, i, x)))


def _vec(params: StackedParams | npt.ArrayLike) -> FloatArray:
    if isinstance(params, StackedParams):
        return params.vector
    return np.asarray(params, dtype=np.float64)


def margins(params: StackedParams | npt.ArrayLike, data: Dataset) -> FloatArray:
    """Utility differences ``theta_right - theta_left`` for every record."""
    return data.design() @ _vec(params)


def _weights(data: Dataset, weights: npt.ArrayLike | None) -> FloatArray:
    if weights is None:
        return np.ones(data.L)
    return np.asarray(weights, dtype=np.float64)


def negative_log_likelihood(params, data: Dataset, weights=None) -> float:
    if data.L == 0:
        raise ValueError("dataset is empty")
    z = margins(params, data)
    w = _weights(data, weights)
    # y*softplus(-z) + (1-y)*softplus(z) == softplus(-(2y-1) z) for binary y
    return float(np.sum(w * np.logaddexp(0.0, (1.0 - 2.0 * data.y) * z)))


def gradient(params, data: Dataset, weights=None) -> FloatArray:
    z = margins(params, data)
    resid = _weights(data, weights) * (expit(z) - data.y)
    return data.design().T @ resid


def hessian(params, data: Dataset, weights=None) -> FloatArray:
    z = margins(params, data)
    s = expit(z)
    h = _weights(data, weights) * s * (1.0 - s)
    X = data.design()
    if sp.issparse(X):
        H = (X.T @ X.multiply(h[:, None])).toarray()
    else:
        H = X.T @ (X * h[:, None])
    return 0.5 * (H + H.T)


@lru_cache(maxsize=64)
def _constraints(M: int, d: int) -> ConstraintSystem:
    p = n_params(M, d)
    C = np.zeros((1 + d, p))
    C[0, :M] = 1.0
    for k in range(d):
        C[1 + k, M + k::d] = 1.0
    J = np.eye(M) - np.full((M, M), 1.0 / M)
    P = scipy.linalg.block_diag(J, np.kron(J, np.eye(d)))
    U = scipy.linalg.helmert(M).T  # (M, M-1), orthonormal, orthogonal to ones
    Q = scipy.linalg.block_diag(U, np.kron(U, np.eye(d)))
    for a in (C, P, Q):
        a.setflags(write=False)
    return ConstraintSystem(C=C, P=P, basis=Q)


def build_constraints(M: int, d: int) -> ConstraintSystem:
    """Constraint matrix ``C`` (intercepts sum to zero, each slope coordinate
    sums to zero over models), the orthogonal projection ``P`` onto its null
    space, and an orthonormal basis of that null space.

    ``C C^T = M I``, so ``P`` reduces to block centering matrices.
    """
    if M < 2:
        raise ValueError("need M >= 2")
    if d < 0:
        raise ValueError("d must be non-negative")
    return _constraints(int(M), int(d))


def project(params: StackedParams) -> StackedParams:
    P = build_constraints(params.M, params.d).P
    return StackedParams.from_vector(P @ params.vector, params.M, params.d)


def true_ranks(utilities: npt.ArrayLike) -> np.ndarray:
    """``1 + #{k : u_k > u_j}`` for every ``j``; ties share the better rank."""
    u = np.asarray(utilities, dtype=np.float64)
    return 1 + (u[None, :] > u[:, None]).sum(axis=1)

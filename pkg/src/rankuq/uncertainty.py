"""Bootstrap covariance, max-statistic critical values and rectangular
simultaneous confidence intervals for utility differences."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
import numpy.typing as npt

from .errors import (
    DegeneratePair,
    FactorizationFailure,
    NegativeVariance,
    NotConverged,
    TooManyFailedReplicates,
)
from .estimation import FitConfig, FitResult, _newton, fit, graph_components
from .model import Dataset, build_constraints, build_design_vector, design_rows, n_params
from .rng import max_workers, stream

Kind = Literal["lower", "upper", "symm", "equiv"]
KINDS: tuple[str, ...] = ("lower", "upper", "symm", "equiv")

DEFAULT_BOOTSTRAP = 500
DEFAULT_DRAWS = 100_000
MAX_FAILED_FRACTION = 0.10
# Gaussian draws come in blocks of this many rows, one RNG substream per block
DRAW_BLOCK = 8192
# cap on entries of one (draws x pairs) work array
_WORK_ENTRIES = 1 << 22


@dataclass(frozen=True, eq=False)
class CovarianceEstimate:
    """Covariance of the fitted parameter vector at the observed sample size."""

    sigma: np.ndarray
    replicates: int
    seed: int
    method: str = "pairs-bootstrap"
    failed: int = 0

    def __post_init__(self) -> None:
        s = np.array(self.sigma, dtype=np.float64)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise ValueError("sigma must be square")
        s.setflags(write=False)
        object.__setattr__(self, "sigma", s)

    @property
    def dim(self) -> int:
        return self.sigma.shape[0]


@dataclass(frozen=True)
class PairSet:
    """Ordered pairs ``(i, j)``; the target of pair ``(i, j)`` is ``theta_j(x) - theta_i(x)``."""

    pairs: tuple[tuple[int, int], ...]
    x: tuple[float, ...]

    def __init__(self, pairs: Sequence[tuple[int, int]], x: npt.ArrayLike):
        pairs = tuple((int(i), int(j)) for i, j in pairs)
        if len(set(pairs)) != len(pairs):
            raise ValueError("duplicate pairs")
        for i, j in pairs:
            if i == j or i < 0 or j < 0:
                raise ValueError(f"invalid pair ({i}, {j})")
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "x", tuple(float(v) for v in np.asarray(x, dtype=float).reshape(-1)))

    def __len__(self) -> int:
        return len(self.pairs)

    def design(self, M: int) -> np.ndarray:
        for i, j in self.pairs:
            if i >= M or j >= M:
                raise IndexError(f"pair ({i}, {j}) out of range for M={M}")
        return design_rows(self.pairs, self.x, M, len(self.x))

    @classmethod
    def all_pairs(cls, M: int, x: npt.ArrayLike) -> "PairSet":
        return cls([(i, j) for i in range(M) for j in range(M) if i != j], x)

    @classmethod
    def anchored(cls, j: int, M: int, x: npt.ArrayLike) -> "PairSet":
        """``{(j, k) : k != j}``, the comparisons needed for model ``j``'s rank."""
        return cls([(j, k) for k in range(M) if k != j], x)


@dataclass(frozen=True, eq=False)
class DifferenceCISet:
    """Product of per-pair intervals; ``lo``/``hi`` may be infinite for one-sided kinds."""

    pairs: tuple[tuple[int, int], ...]
    x: tuple[float, ...]
    kind: str
    level: float
    estimates: np.ndarray
    se: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    critical_values: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("estimates", "se", "lo", "hi"):
            a = np.array(getattr(self, name), dtype=np.float64)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    def __len__(self) -> int:
        return len(self.pairs)

    def interval(self, i: int, j: int) -> tuple[float, float]:
        k = self.pairs.index((i, j))
        return float(self.lo[k]), float(self.hi[k])

    def as_dict(self) -> dict[tuple[int, int], tuple[float, float]]:
        return {p: (float(a), float(b)) for p, a, b in zip(self.pairs, self.lo, self.hi)}

    def contains(self, values: npt.ArrayLike) -> bool:
        """Whether the vector of true differences lies in the rectangle."""
        v = np.asarray(values, dtype=float)
        return bool(np.all((self.lo <= v) & (v <= self.hi)))

    def resolutions(self) -> list[str]:
        return [resolve_pair(a, b) for a, b in zip(self.lo, self.hi)]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "level": self.level,
            "x": list(self.x),
            "critical_values": dict(self.critical_values),
            "intervals": [
                {"pair": list(p), "estimate": float(e), "se": float(s),
                 "lo": _jsonable(a), "hi": _jsonable(b), "resolution": resolve_pair(a, b)}
                for p, e, s, a, b in zip(self.pairs, self.estimates, self.se, self.lo, self.hi)
            ],
        }


def _jsonable(v: float):
    if math.isinf(v):
        return "-inf" if v < 0 else "inf"
    return float(v)


def replicate_covariance(samples: npt.ArrayLike) -> np.ndarray:
    """Sample covariance (ddof=1) of replicate parameter vectors, one per row."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape[0] < 2:
        raise ValueError("need at least two replicates")
    # shift by one replicate first so identical rows give an exact zero
    shifted = samples - samples[0]
    centered = shifted - shifted.mean(axis=0)
    cov = centered.T @ centered / (samples.shape[0] - 1)
    return 0.5 * (cov + cov.T)


def _replicate(data: Dataset, config: FitConfig, seed: int, b: int) -> np.ndarray | None:
    rng = stream(seed, "bootstrap", b)
    counts = np.bincount(rng.integers(0, data.L, size=data.L), minlength=data.L).astype(np.float64)
    used = counts > 0
    if len(graph_components(data.M, data.left[used], data.right[used])) > 1:
        return None
    res = _newton(data, config, weights=counts)
    if not res.converged:
        return None
    return res.params.vector


def _replicate_chunk(args) -> list:
    data, config, seed, indices = args
    return [_replicate(data, config, seed, b) for b in indices]


def bootstrap_covariance(data: Dataset, config: FitConfig | None = None, B: int = DEFAULT_BOOTSTRAP,
                         seed: int = 0, base: FitResult | None = None) -> CovarianceEstimate:
    """Nonparametric pairs bootstrap: resample comparisons, refit, take the
    sample covariance of the refitted vectors.

    Replicates whose resample disconnects the comparison graph or whose fit
    does not converge are dropped; more than 10% dropped is an error.
    """
    if B < 2:
        raise ValueError("B must be at least 2")
    config = config or FitConfig()
    base = base or fit(data, config)
    if not base.converged:
        raise NotConverged("base fit did not converge")
    warm = FitConfig(
        max_iterations=config.max_iterations,
        gradient_tolerance=config.gradient_tolerance,
        line_search_shrink=config.line_search_shrink,
        initial_params=base.params,
        ridge=config.ridge,
    )
    workers = min(max_workers(), B)
    if workers > 1:
        chunks = [list(range(w, B, workers)) for w in range(workers)]
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_replicate_chunk, [(data, warm, seed, c) for c in chunks]))
        results: list = [None] * B
        for c, part in zip(chunks, parts):
            for b, r in zip(c, part):
                results[b] = r
    else:
        results = [_replicate(data, warm, seed, b) for b in range(B)]
    good = [r for r in results if r is not None]
    failed = B - len(good)
    if failed > MAX_FAILED_FRACTION * B or len(good) < 2:
        raise TooManyFailedReplicates(failed, B)
    cov = replicate_covariance(np.vstack(good))
    P = build_constraints(data.M, data.d).P
    cov = P @ cov @ P
    return CovarianceEstimate(sigma=0.5 * (cov + cov.T), replicates=len(good), seed=seed, failed=failed)


def _sigma_matrix(sigma: CovarianceEstimate | npt.ArrayLike) -> np.ndarray:
    if isinstance(sigma, CovarianceEstimate):
        return sigma.sigma
    return np.asarray(sigma, dtype=np.float64)


def _variances(A: np.ndarray, S: np.ndarray) -> np.ndarray:
    var = np.einsum("ij,jk,ik->i", A, S, A)
    if np.any(var < -1e-12):
        raise NegativeVariance(f"quadratic form is negative: {var.min():.3g}")
    return np.maximum(var, 0.0)


def standard_error(sigma: CovarianceEstimate | npt.ArrayLike, i: int, j: int, x: npt.ArrayLike) -> float:
    """``sqrt(xt' Sigma xt)`` for the design vector of pair ``(i, j)`` at ``x``."""
    S = _sigma_matrix(sigma)
    x = np.asarray(x, dtype=float).reshape(-1)
    d = len(x)
    M = S.shape[0] // (1 + d)
    if n_params(M, d) != S.shape[0]:
        raise ValueError(f"covariance of size {S.shape[0]} does not fit covariate dimension {d}")
    a = build_design_vector(i, j, x, M, d)
    return float(np.sqrt(_variances(a[None, :], S)[0]))


def _factor(S: np.ndarray) -> np.ndarray:
    """``F`` with ``F F^T = S`` from the eigendecomposition (valid for singular ``S``)."""
    if not np.all(np.isfinite(S)):
        raise FactorizationFailure("covariance has non-finite entries")
    try:
        w, V = np.linalg.eigh(0.5 * (S + S.T))
    except np.linalg.LinAlgError as exc:
        raise FactorizationFailure(str(exc)) from exc
    if w.size and w.min() < -1e-8 * max(1.0, abs(w.max())):
        raise FactorizationFailure(f"covariance is not PSD (min eigenvalue {w.min():.3g})")
    return V * np.sqrt(np.clip(w, 0.0, None))


def max_statistics(A: np.ndarray, S: np.ndarray, draws: int, seed: int) -> dict[str, np.ndarray]:
    """Simulated max statistics over the rows of ``A``.

    Draws ``e ~ N(0, S)`` in parameter space and returns, per draw,
    ``max_k (A e)_k / se_k`` ("lower"), ``max_k -(A e)_k / se_k`` ("upper")
    and ``max_k |A e|_k / se_k`` ("symm"). The parameter-space draws depend
    only on ``(seed, draws, S)``, so different pair sets see common random
    numbers.
    """
    if draws < 1:
        raise ValueError("draws must be positive")
    se = np.sqrt(_variances(A, S))
    if np.any(se == 0):
        raise DegeneratePair([k for k in np.flatnonzero(se == 0)])
    F = _factor(S)
    G = F.T @ (A / se[:, None]).T  # (p, |S|)
    p, n_pairs = G.shape
    out = {k: np.empty(draws) for k in ("lower", "upper", "symm")}
    rows = max(1, _WORK_ENTRIES // max(n_pairs, 1))
    for block, start in enumerate(range(0, draws, DRAW_BLOCK)):
        n = min(DRAW_BLOCK, draws - start)
        eps = stream(seed, "gaussian", block).standard_normal((n, p))
        for s in range(0, n, rows):
            T = eps[s:s + rows] @ G
            sl = slice(start + s, start + s + T.shape[0])
            out["lower"][sl] = T.max(axis=1)
            out["upper"][sl] = (-T).max(axis=1)
            out["symm"][sl] = np.abs(T).max(axis=1)
    return out


def empirical_quantile(samples: np.ndarray, level: float) -> float:
    """Order statistic ``ceil(level * n)`` (1-based) of ``samples``."""
    n = len(samples)
    k = math.ceil(level * n - 1e-9 * n)
    k = min(max(k, 1), n)
    return float(np.partition(samples, k - 1)[k - 1])


def _check_alpha(alpha: float) -> None:
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")


def critical_value(sigma: CovarianceEstimate | npt.ArrayLike, pairs: PairSet, alpha: float,
                   kind: str = "symm", draws: int = DEFAULT_DRAWS, seed: int = 0) -> float:
    """Empirical ``1 - alpha`` quantile of the simulated max statistic."""
    _check_alpha(alpha)
    if kind not in ("lower", "upper", "symm"):
        raise ValueError(f"kind must be lower, upper or symm, got {kind!r}")
    S = _sigma_matrix(sigma)
    M = S.shape[0] // (1 + len(pairs.x))
    stats = max_statistics(pairs.design(M), S, draws, seed)
    return empirical_quantile(stats[kind], 1 - alpha)


def intervals_from_design(A: np.ndarray, estimates: np.ndarray, S: np.ndarray, alpha: float,
                          kind: str, draws: int, seed: int):
    """Rectangular intervals for ``A @ beta`` given point estimates ``A @ beta_hat``.

    Rows with zero standard error get the degenerate interval ``[est, est]``
    and are left out of the max statistic.
    """
    _check_alpha(alpha)
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    se = np.sqrt(_variances(A, S))
    live = se > 0
    crit: dict[str, float] = {}
    if live.any():
        stats = max_statistics(A[live], S, draws, seed)
        if kind == "equiv":
            crit["lower"] = empirical_quantile(stats["lower"], 1 - alpha / 2)
            crit["upper"] = empirical_quantile(stats["upper"], 1 - alpha / 2)
        else:
            crit[kind] = empirical_quantile(stats[kind], 1 - alpha)
    else:
        crit = {"lower": 0.0, "upper": 0.0} if kind == "equiv" else {kind: 0.0}
    inf = np.full_like(estimates, np.inf)
    if kind == "symm":
        lo, hi = estimates - crit["symm"] * se, estimates + crit["symm"] * se
    elif kind == "lower":
        lo, hi = estimates - crit["lower"] * se, inf
    elif kind == "upper":
        lo, hi = -inf, estimates + crit["upper"] * se
    else:
        lo, hi = estimates - crit["lower"] * se, estimates + crit["upper"] * se
    return se, lo, hi, crit


def difference_cis(fit_result: FitResult, sigma: CovarianceEstimate | npt.ArrayLike, pairs: PairSet,
                   alpha: float = 0.05, kind: str = "symm", draws: int = DEFAULT_DRAWS,
                   seed: int = 0) -> DifferenceCISet:
    """Simultaneous intervals for ``theta_j(x) - theta_i(x)`` over ``pairs``."""
    S = _sigma_matrix(sigma)
    A = pairs.design(fit_result.M)
    est = A @ fit_result.params.vector
    se, lo, hi, crit = intervals_from_design(A, est, S, alpha, kind, draws, seed)
    return DifferenceCISet(pairs.pairs, pairs.x, kind, 1 - alpha, est, se, lo, hi, crit)


def resolve_pair(lo: float, hi: float) -> str:
    """``"above"`` if the interval is positive, ``"below"`` if negative,
    otherwise ``"unresolved"``."""
    if lo > hi:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    if lo > 0:
        return "above"
    if hi < 0:
        return "below"
    return "unresolved"

"""Rank confidence sets from rectangular difference intervals, and the
limiting behaviour of ranks along an extreme covariate direction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import numpy.typing as npt

from .estimation import FitResult, point_ranks
from .model import true_ranks
from .uncertainty import (
    DEFAULT_DRAWS,
    CovarianceEstimate,
    DifferenceCISet,
    PairSet,
    _sigma_matrix,
    difference_cis,
    intervals_from_design,
)

DISTINCT_TOL = 1e-12


@dataclass(frozen=True)
class RankSet:
    """Contiguous rank interval ``[lo, hi]`` for one model."""

    model: int
    lo: int
    hi: int
    n_dominated: int
    n_dominating: int
    level: float
    scope: str

    def __post_init__(self) -> None:
        if not 1 <= self.lo <= self.hi:
            raise ValueError(f"invalid rank set [{self.lo}, {self.hi}]")

    def __contains__(self, rank: int) -> bool:
        return self.lo <= rank <= self.hi

    @property
    def width(self) -> int:
        return self.hi - self.lo + 1

    def to_dict(self) -> dict:
        return {"model": self.model, "lo": self.lo, "hi": self.hi,
                "n_dominated": self.n_dominated, "n_dominating": self.n_dominating,
                "level": self.level, "scope": self.scope}


def rank_sets_from_intervals(intervals: Mapping[tuple[int, int], tuple[float, float]], M: int,
                             models: Sequence[int] | None = None, level: float = float("nan"),
                             scope: str = "simultaneous") -> list[RankSet]:
    """Count resolved comparisons for each model.

    ``intervals[(j, k)]`` bounds ``theta_k - theta_j``. For model ``j`` an
    interval below zero means ``j`` beats ``k`` and one above zero means
    ``k`` beats ``j``; the rank set is ``{|beaten by| + 1, ..., M - |beats|}``.
    """
    models = range(M) if models is None else models
    out = []
    for j in models:
        dominated = dominating = 0
        for k in range(M):
            if k == j:
                continue
            lo, hi = intervals[(j, k)]
            if hi < 0:
                dominated += 1
            elif lo > 0:
                dominating += 1
        out.append(RankSet(j, dominating + 1, M - dominated, dominated, dominating, level, scope))
    return out


def _from_ci_set(ci: DifferenceCISet, M: int, models, scope: str) -> list[RankSet]:
    return rank_sets_from_intervals(ci.as_dict(), M, models, ci.level, scope)


def marginal_rank_set(fit: FitResult, sigma: CovarianceEstimate, x: npt.ArrayLike, j: int,
                      alpha: float = 0.05, draws: int = DEFAULT_DRAWS, seed: int = 0) -> RankSet:
    """Rank set for model ``j`` from symmetric intervals over ``{(j, k) : k != j}``."""
    M = fit.M
    if not 0 <= j < M:
        raise IndexError(f"model index {j} out of range")
    ci = difference_cis(fit, sigma, PairSet.anchored(j, M, x), alpha, "symm", draws, seed)
    return _from_ci_set(ci, M, [j], "marginal")[0]


def marginal_rank_sets(fit: FitResult, sigma: CovarianceEstimate, x: npt.ArrayLike,
                       alpha: float = 0.05, draws: int = DEFAULT_DRAWS, seed: int = 0) -> list[RankSet]:
    """Marginal sets for every model. Each one is valid on its own; they are
    not jointly valid."""
    return [marginal_rank_set(fit, sigma, x, j, alpha, draws, seed) for j in range(fit.M)]


def simultaneous_rank_sets(fit: FitResult, sigma: CovarianceEstimate, x: npt.ArrayLike,
                           alpha: float = 0.05, draws: int = DEFAULT_DRAWS,
                           seed: int = 0) -> list[RankSet]:
    M = fit.M
    ci = difference_cis(fit, sigma, PairSet.all_pairs(M, x), alpha, "symm", draws, seed)
    return _from_ci_set(ci, M, None, "simultaneous")


def rank_sets(fit: FitResult, sigma: CovarianceEstimate, x: npt.ArrayLike, alpha: float = 0.05,
              scope: str = "simultaneous", draws: int = DEFAULT_DRAWS, seed: int = 0) -> list[RankSet]:
    if scope == "marginal":
        return marginal_rank_sets(fit, sigma, x, alpha, draws, seed)
    if scope == "simultaneous":
        return simultaneous_rank_sets(fit, sigma, x, alpha, draws, seed)
    raise ValueError(f"scope must be marginal or simultaneous, got {scope!r}")


@dataclass(frozen=True)
class RankCurvePoint:
    x: tuple[float, ...]
    utilities: tuple[float, ...]
    point_ranks: tuple[int, ...]
    rank_sets: tuple[RankSet, ...]


def rank_curve(fit: FitResult, sigma: CovarianceEstimate, covariate_path: Sequence[npt.ArrayLike],
               alpha: float = 0.05, scope: str = "simultaneous", draws: int = DEFAULT_DRAWS,
               seed: int = 0) -> list[RankCurvePoint]:
    """Point ranks and rank sets at each covariate along a path (bump-chart data)."""
    if not len(covariate_path):
        raise ValueError("covariate path is empty")
    out = []
    for x in covariate_path:
        x = np.asarray(x, dtype=float).reshape(-1)
        out.append(RankCurvePoint(
            x=tuple(float(v) for v in x),
            utilities=tuple(float(u) for u in fit.params.utilities(x)),
            point_ranks=tuple(int(r) for r in point_ranks(fit, x)),
            rank_sets=tuple(rank_sets(fit, sigma, x, alpha, scope, draws, seed)),
        ))
    return out


@dataclass(frozen=True)
class LimitingRanks:
    ranks: tuple[int, ...]
    projections: tuple[float, ...]
    tied_pairs: tuple[tuple[int, int], ...]

    @property
    def distinct(self) -> bool:
        return not self.tied_pairs


def _direction(fit: FitResult, v: npt.ArrayLike) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(-1)
    if fit.d < 1:
        raise ValueError("extrapolation needs at least one covariate")
    if v.shape != (fit.d,):
        raise ValueError(f"direction must have length {fit.d}")
    return v


def limiting_ranks(fit: FitResult, v: npt.ArrayLike) -> LimitingRanks:
    """Ranks by the projected slopes ``v . beta_i`` (the ``x = lambda v``,
    ``lambda -> inf`` limit). Pairs whose projections coincide are flagged."""
    v = _direction(fit, v)
    proj = fit.params.slopes @ v
    M = fit.M
    tied = tuple((i, j) for i in range(M) for j in range(i + 1, M)
                 if abs(proj[i] - proj[j]) <= DISTINCT_TOL)
    return LimitingRanks(tuple(int(r) for r in true_ranks(proj)),
                         tuple(float(p) for p in proj), tied)


def _slope_design(pairs: Sequence[tuple[int, int]], v: np.ndarray, M: int) -> np.ndarray:
    d = len(v)
    A = np.zeros((len(pairs), M + M * d))
    for r, (i, j) in enumerate(pairs):
        A[r, M + j * d:M + (j + 1) * d] += v
        A[r, M + i * d:M + (i + 1) * d] -= v
    return A


def limiting_difference_cis(fit: FitResult, sigma: CovarianceEstimate, v: npt.ArrayLike,
                            alpha: float = 0.05, draws: int = DEFAULT_DRAWS, seed: int = 0,
                            pairs: Sequence[tuple[int, int]] | None = None) -> DifferenceCISet:
    """Limit of ``(1/lambda)`` times the symmetric intervals at ``x = lambda v``.

    Pair ``(i, j)`` is centred at ``v . (beta_j - beta_i)`` with half-width
    from the slope-only max statistic. Uses the same parameter-space draws as
    :func:`difference_cis`, so with a common seed the finite-``lambda``
    intervals converge to these exactly.
    """
    v = _direction(fit, v)
    M = fit.M
    ps = PairSet.all_pairs(M, v) if pairs is None else PairSet(pairs, v)
    A = _slope_design(ps.pairs, v, M)
    est = A @ fit.params.vector
    se, lo, hi, crit = intervals_from_design(A, est, _sigma_matrix(sigma), alpha, "symm", draws, seed)
    return DifferenceCISet(ps.pairs, ps.x, "symm", 1 - alpha, est, se, lo, hi, crit)


def limiting_rank_sets(fit: FitResult, sigma: CovarianceEstimate, v: npt.ArrayLike,
                       alpha: float = 0.05, draws: int = DEFAULT_DRAWS, seed: int = 0,
                       scope: str = "simultaneous") -> list[RankSet]:
    M = fit.M
    if scope == "simultaneous":
        ci = limiting_difference_cis(fit, sigma, v, alpha, draws, seed)
        return _from_ci_set(ci, M, None, scope)
    if scope == "marginal":
        out = []
        for j in range(M):
            ci = limiting_difference_cis(fit, sigma, v, alpha, draws, seed,
                                         pairs=[(j, k) for k in range(M) if k != j])
            out.extend(_from_ci_set(ci, M, [j], scope))
        return out
    raise ValueError(f"scope must be marginal or simultaneous, got {scope!r}")


@dataclass(frozen=True)
class ExtrapolationResult:
    direction: tuple[float, ...]
    limiting: LimitingRanks
    limiting_intervals: DifferenceCISet
    limiting_rank_sets: tuple[RankSet, ...]

    @property
    def distinctness(self) -> dict[tuple[int, int], bool]:
        tied = set(self.limiting.tied_pairs)
        M = len(self.limiting.ranks)
        return {(i, j): (i, j) not in tied for i in range(M) for j in range(i + 1, M)}


def extrapolate(fit: FitResult, sigma: CovarianceEstimate, v: npt.ArrayLike, alpha: float = 0.05,
                draws: int = DEFAULT_DRAWS, seed: int = 0, scope: str = "simultaneous") -> ExtrapolationResult:
    v = _direction(fit, v)
    ci = limiting_difference_cis(fit, sigma, v, alpha, draws, seed)
    if scope == "simultaneous":
        sets = _from_ci_set(ci, fit.M, None, scope)
    else:
        sets = limiting_rank_sets(fit, sigma, v, alpha, draws, seed, scope)
    return ExtrapolationResult(tuple(float(a) for a in v), limiting_ranks(fit, v), ci, tuple(sets))

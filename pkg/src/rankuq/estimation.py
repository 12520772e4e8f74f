"""Identifiability diagnostics and the constrained maximum-likelihood fit."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt
import scipy.linalg
import scipy.sparse as sp
from scipy.optimize import linprog
from scipy.sparse.csgraph import connected_components

from .errors import DisconnectedGraph, NonFiniteLikelihood, RankDeficientDesign
from .model import (
    MARGIN_WARN,
    Dataset,
    StackedParams,
    build_constraints,
    gradient,
    hessian,
    margins,
    negative_log_likelihood,
    true_ranks,
)

log = logging.getLogger(__name__)

ARMIJO = 1e-4


class SeparationWarning(RuntimeWarning):
    """Some fitted utility difference exceeded the separation threshold."""


@dataclass(frozen=True)
class FitConfig:
    max_iterations: int = 200
    gradient_tolerance: float = 1e-8
    line_search_shrink: float = 0.5
    initial_params: StackedParams | None = None
    ridge: float = 0.0

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if not self.gradient_tolerance > 0:
            raise ValueError("gradient_tolerance must be positive")
        if not 0 < self.line_search_shrink < 1:
            raise ValueError("line_search_shrink must lie in (0, 1)")
        if self.ridge < 0:
            raise ValueError("ridge must be non-negative")

    def to_dict(self) -> dict:
        return {
            "max_iterations": self.max_iterations,
            "gradient_tolerance": self.gradient_tolerance,
            "line_search_shrink": self.line_search_shrink,
            "ridge": self.ridge,
        }


@dataclass(frozen=True)
class DesignRankReport:
    """Numerical ranks of the covariate design and of the full design.

    ``covariate_rank`` is the rank of the matrix with rows
    ``kron(e_j - e_i, x_l)``. It can never reach ``M*d`` because the columns
    of each covariate coordinate sum to zero; ``constrained_full_rank``
    compares it against the attainable ``(M-1)*d`` instead.
    """

    covariate_rank: int
    full_rank: bool
    constrained_full_rank: bool
    design_rank: int
    design_required: int

    @property
    def identifiable(self) -> bool:
        return self.design_rank == self.design_required

    def to_dict(self) -> dict:
        return {
            "covariate_rank": self.covariate_rank,
            "full_rank": self.full_rank,
            "constrained_full_rank": self.constrained_full_rank,
            "design_rank": self.design_rank,
            "design_required": self.design_required,
        }


@dataclass(frozen=True)
class FitDiagnostics:
    components: tuple[tuple[int, ...], ...]
    rank: DesignRankReport | None
    max_abs_margin: float
    separated: bool

    @property
    def connected(self) -> bool:
        return len(self.components) == 1

    def to_dict(self) -> dict:
        return {
            "connected": self.connected,
            "components": [list(c) for c in self.components],
            "rank": None if self.rank is None else self.rank.to_dict(),
            "max_abs_margin": self.max_abs_margin,
            "separated": self.separated,
        }


@dataclass(frozen=True)
class FitResult:
    params: StackedParams
    final_nll: float
    projected_gradient_norm: float
    iterations: int
    converged: bool
    diagnostics: FitDiagnostics
    nll_history: tuple[float, ...] = field(default=(), repr=False)

    @property
    def M(self) -> int:
        return self.params.M

    @property
    def d(self) -> int:
        return self.params.d


def check_connectivity(data: Dataset) -> list[list[int]]:
    """Connected components of the comparison graph, each sorted, ordered by
    smallest member."""
    return graph_components(data.M, data.left, data.right)


def graph_components(M: int, left: np.ndarray, right: np.ndarray) -> list[list[int]]:
    graph = sp.coo_matrix((np.ones(len(left)), (left, right)), shape=(M, M))
    _, labels = connected_components(graph, directed=False)
    comps: dict[int, list[int]] = {}
    for m, lab in enumerate(labels):
        comps.setdefault(int(lab), []).append(m)
    return sorted(comps.values(), key=lambda c: c[0])


def _singular_values(rows: sp.csr_matrix | np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Singular values of a tall matrix via a streamed QR (never holds all rows densely)."""
    n_rows, n_cols = rows.shape
    if n_cols == 0:
        return np.zeros(0)
    R = np.zeros((0, n_cols))
    for start in range(0, n_rows, chunk):
        block = rows[start:start + chunk]
        block = block.toarray() if sp.issparse(block) else np.asarray(block)
        R = np.linalg.qr(np.vstack([R, block]), mode="r")
    return np.linalg.svd(R, compute_uv=False)


def _numerical_rank(s: np.ndarray, shape: tuple[int, int]) -> int:
    if s.size == 0 or s[0] == 0:
        return 0
    tol = max(shape) * np.finfo(float).eps * s[0]
    return int(np.sum(s > tol))


def check_design_rank(data: Dataset) -> DesignRankReport:
    M, d = data.M, data.d
    cs = build_constraints(M, d)
    required = cs.dim
    X = data.design()
    # full design in the coordinates of the feasible subspace
    full = X @ cs.basis
    design_rank = _numerical_rank(_singular_values(full), (data.L, required))
    if d == 0:
        return DesignRankReport(0, True, True, design_rank, required)
    Xbar = X[:, M:]
    rank = _numerical_rank(_singular_values(Xbar), (data.L, M * d))
    return DesignRankReport(
        covariate_rank=rank,
        full_rank=rank == M * d,
        constrained_full_rank=rank == (M - 1) * d,
        design_rank=design_rank,
        design_required=required,
    )


def check_separation(data: Dataset) -> bool:
    """Whether some feasible direction orders every comparison in agreement
    with its outcome, in which case the likelihood has no minimizer.

    Solves ``max sum_l s_l a_l.u  s.t.  s_l a_l.u >= 0, |u| <= 1`` with
    ``s_l = 2 y_l - 1``; a positive optimum certifies (quasi-)separation.
    """
    cs = build_constraints(data.M, data.d)
    A = np.asarray(data.design() @ cs.basis)
    signed = (2.0 * data.y - 1.0)[:, None] * A
    res = linprog(-signed.sum(axis=0), A_ub=-signed, b_ub=np.zeros(data.L),
                  bounds=[(-1.0, 1.0)] * cs.dim, method="highs")
    if res.status != 0:
        return False
    scale = max(1.0, float(np.abs(signed).sum()))
    return -res.fun > 1e-9 * scale


def fit(data: Dataset, config: FitConfig | None = None) -> FitResult:
    """Constrained MLE by projected Newton with Armijo backtracking.

    Raises ``DisconnectedGraph`` or ``RankDeficientDesign`` when the
    parameters are not identified (the latter is skipped when ``ridge > 0``).
    Non-convergence is reported through ``converged=False``; separated data
    (no finite MLE) always count as non-converged and emit a
    ``SeparationWarning``.
    """
    config = config or FitConfig()
    if data.L == 0:
        raise ValueError("dataset is empty")
    comps = check_connectivity(data)
    if len(comps) > 1:
        raise DisconnectedGraph(comps)
    rank = check_design_rank(data)
    if not rank.identifiable and config.ridge == 0:
        raise RankDeficientDesign(rank.design_rank, rank.design_required)
    separated = rank.identifiable and check_separation(data)
    result = _newton(data, config, comps=comps, rank=rank, separated=separated)
    return result


def _newton(data: Dataset, config: FitConfig, weights: npt.ArrayLike | None = None,
            comps=None, rank: DesignRankReport | None = None, separated: bool = False) -> FitResult:
    M, d = data.M, data.d
    cs = build_constraints(M, d)
    Q, P = cs.basis, cs.P
    start = config.initial_params or StackedParams.zeros(M, d)
    if start.M != M or start.d != d:
        raise ValueError("initial_params has the wrong shape")
    z = Q.T @ start.vector

    def nll(zz: np.ndarray) -> float:
        return negative_log_likelihood(Q @ zz, data, weights)

    f = nll(z)
    if not np.isfinite(f):
        raise NonFiniteLikelihood("negative log-likelihood is not finite at the start point")
    history = [f]
    converged = False
    gnorm = np.inf
    it = 0
    while True:
        beta = Q @ z
        g = gradient(beta, data, weights)
        gnorm = float(np.abs(P @ g).max())
        if gnorm <= config.gradient_tolerance:
            converged = True
            break
        if it >= config.max_iterations:
            break
        it += 1
        gz = Q.T @ g
        Hz = Q.T @ hessian(beta, data, weights) @ Q
        if config.ridge:
            Hz[np.diag_indices_from(Hz)] += config.ridge
        try:
            step = -scipy.linalg.cho_solve(scipy.linalg.cho_factor(Hz), gz)
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(Hz, gz, rcond=None)[0]
        slope = float(gz @ step)
        if slope >= 0:
            step, slope = -gz, -float(gz @ gz)
        # slack for rounding in f itself, so a tiny predicted decrease is not rejected as noise
        slack = 64 * np.finfo(float).eps * max(1.0, abs(f))
        t = 1.0
        accepted = False
        for _ in range(60):
            f_new = nll(z + t * step)
            if np.isfinite(f_new) and f_new <= f + ARMIJO * t * slope + slack:
                accepted = True
                break
            t *= config.line_search_shrink
        if not accepted:
            # no representable decrease left along the Newton direction
            log.debug("line search stalled at iteration %d, |Pg|=%.3g", it, gnorm)
            break
        z = z + t * step
        f = min(f, f_new)
        history.append(f)

    beta = P @ (Q @ z)
    params = StackedParams.from_vector(beta, M, d)
    z_abs = np.abs(margins(beta, data))
    max_margin = float(z_abs.max()) if z_abs.size else 0.0
    if separated:
        converged = False
        warnings.warn("outcomes are perfectly separated by the design; the MLE does not exist",
                      SeparationWarning, stacklevel=3)
    elif max_margin > MARGIN_WARN:
        separated = True
        warnings.warn(
            f"fitted utility difference reaches {max_margin:.1f}; the data may be separated "
            "and the MLE may not exist (consider ridge > 0)",
            SeparationWarning,
            stacklevel=3,
        )
    diag = FitDiagnostics(
        components=tuple(tuple(c) for c in (comps or ())),
        rank=rank,
        max_abs_margin=max_margin,
        separated=separated,
    )
    return FitResult(
        params=params,
        final_nll=negative_log_likelihood(beta, data, weights),
        projected_gradient_norm=gnorm,
        iterations=it,
        converged=converged,
        diagnostics=diag,
        nll_history=tuple(history),
    )


def point_ranks(fit_or_params: FitResult | StackedParams, x: npt.ArrayLike) -> np.ndarray:
    """``1 + #{j : theta_j(x) > theta_i(x)}`` for every model ``i``."""
    params = fit_or_params.params if isinstance(fit_or_params, FitResult) else fit_or_params
    return true_ranks(params.utilities(x))

"""Synthetic contextual-BTL data, Monte Carlo coverage experiments, and
brute-force oracles used to cross-check the estimators."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
import numpy.typing as npt
from scipy.special import expit

from .errors import DimensionTooLarge, RankUQError
from .estimation import FitConfig, fit, graph_components
from .model import Dataset, StackedParams, build_constraints, true_ranks
from .ranksets import marginal_rank_sets, simultaneous_rank_sets
from .rng import derive_seed, max_workers, stream
from .uncertainty import KINDS, PairSet, bootstrap_covariance, difference_cis

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Scenario:
    """Known ground truth plus a sampling scheme.

    ``pair_probabilities`` maps ordered pairs to sampling probabilities.
    ``covariate_sampler`` is one of::

        {"kind": "uniform", "low": [...], "high": [...]}
        {"kind": "fixed", "points": [[...], ...]}          # drawn uniformly
        {"kind": "bernoulli", "p": [...]}                  # independent 0/1 entries
    """

    true_params: StackedParams
    pair_probabilities: Mapping[tuple[int, int], float]
    covariate_sampler: Mapping[str, Any]
    L: int
    seed: int = 0
    model_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        M = self.true_params.M
        if not self.model_names:
            object.__setattr__(self, "model_names", tuple(f"m{k}" for k in range(M)))
        probs = {(int(i), int(j)): float(p) for (i, j), p in self.pair_probabilities.items()}
        object.__setattr__(self, "pair_probabilities", probs)
        if any(p <= 0 for p in probs.values()):
            raise ValueError("pair probabilities must be positive")
        if abs(sum(probs.values()) - 1.0) > 1e-9:
            raise ValueError("pair probabilities must sum to 1")
        for i, j in probs:
            if i == j or not (0 <= i < M and 0 <= j < M):
                raise ValueError(f"invalid pair ({i}, {j})")
        left = np.array([i for i, _ in probs])
        right = np.array([j for _, j in probs])
        if len(graph_components(M, left, right)) > 1:
            raise ValueError("sampled pairs do not connect all models")
        if not self.true_params.is_normalized():
            raise ValueError("true parameters must satisfy the sum-to-zero normalization")
        if self.L < 1:
            raise ValueError("L must be positive")
        kind = self.covariate_sampler.get("kind")
        if kind not in ("uniform", "fixed", "bernoulli"):
            raise ValueError(f"unknown covariate sampler {kind!r}")

    @property
    def M(self) -> int:
        return self.true_params.M

    @property
    def d(self) -> int:
        return self.true_params.d

    def with_seed(self, seed: int) -> "Scenario":
        return Scenario(self.true_params, self.pair_probabilities, self.covariate_sampler,
                        self.L, seed, self.model_names)

    def with_L(self, L: int) -> "Scenario":
        return Scenario(self.true_params, self.pair_probabilities, self.covariate_sampler,
                        L, self.seed, self.model_names)

    def true_differences(self, pairs: PairSet) -> np.ndarray:
        return pairs.design(self.M) @ self.true_params.vector

    def true_ranks(self, x: npt.ArrayLike) -> np.ndarray:
        return true_ranks(self.true_params.utilities(x))

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "d": self.d,
            "model_names": list(self.model_names),
            "intercepts": self.true_params.intercepts.tolist(),
            "slopes": self.true_params.slopes.tolist(),
            "pair_probabilities": [[i, j, p] for (i, j), p in self.pair_probabilities.items()],
            "covariate_sampler": dict(self.covariate_sampler),
            "L": self.L,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "Scenario":
        M = len(obj["intercepts"])
        d = int(obj.get("d", len(obj["slopes"][0]) if obj["slopes"] else 0))
        slopes = np.asarray(obj["slopes"], dtype=float).reshape(M, d)
        if "pair_probabilities" in obj:
            probs = {(int(i), int(j)): float(p) for i, j, p in obj["pair_probabilities"]}
        else:
            probs = uniform_pairs(M)
        return cls(
            true_params=StackedParams(obj["intercepts"], slopes),
            pair_probabilities=probs,
            covariate_sampler=obj["covariate_sampler"],
            L=int(obj["L"]),
            seed=int(obj.get("seed", 0)),
            model_names=tuple(obj.get("model_names", ())),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        return cls.from_dict(json.loads(text))


def uniform_pairs(M: int) -> dict[tuple[int, int], float]:
    """Every pair ``(i, j)``, ``i < j``, equally likely."""
    pairs = [(i, j) for i in range(M) for j in range(i + 1, M)]
    return {p: 1.0 / len(pairs) for p in pairs}


def _sample_covariates(sampler: Mapping[str, Any], d: int, L: int, rng: np.random.Generator) -> np.ndarray:
    kind = sampler["kind"]
    if d == 0:
        return np.zeros((L, 0))
    if kind == "uniform":
        low = np.broadcast_to(np.asarray(sampler.get("low", -1.0), dtype=float), (d,))
        high = np.broadcast_to(np.asarray(sampler.get("high", 1.0), dtype=float), (d,))
        return rng.uniform(low, high, size=(L, d))
    if kind == "fixed":
        pts = np.asarray(sampler["points"], dtype=float).reshape(-1, d)
        return pts[rng.integers(0, len(pts), size=L)]
    p = np.broadcast_to(np.asarray(sampler["p"], dtype=float), (d,))
    return (rng.random((L, d)) < p).astype(float)


def generate(scenario: Scenario) -> Dataset:
    """Forward-sample ``L`` comparisons. Deterministic in ``scenario.seed``.

    Each comparison draws an ordered pair, then a covariate vector, then the
    outcome ``y ~ Bernoulli(sigmoid(theta_j(x) - theta_i(x)))``.
    """
    rng = stream(scenario.seed, "generate")
    pairs = list(scenario.pair_probabilities)
    probs = np.array([scenario.pair_probabilities[p] for p in pairs])
    idx = rng.choice(len(pairs), size=scenario.L, p=probs / probs.sum())
    left = np.array([pairs[k][0] for k in range(len(pairs))])[idx]
    right = np.array([pairs[k][1] for k in range(len(pairs))])[idx]
    X = _sample_covariates(scenario.covariate_sampler, scenario.d, scenario.L, rng)
    b0, B = scenario.true_params.intercepts, scenario.true_params.slopes
    z = b0[right] - b0[left] + np.einsum("ld,ld->l", X, B[right] - B[left])
    y = (rng.random(scenario.L) < expit(z)).astype(float)
    return Dataset(left, right, X, y, scenario.model_names)


@dataclass
class CoverageReport:
    replications: int
    nominal: float
    successes: int = 0
    failures: int = 0
    difference_coverage: dict = field(default_factory=dict)
    marginal_coverage: list = field(default_factory=list)
    simultaneous_coverage: float = float("nan")
    marginal_width: list = field(default_factory=list)
    simultaneous_width: list = field(default_factory=list)
    eval_x: tuple[float, ...] = ()
    true_ranks: tuple[int, ...] = ()
    settings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "replications": self.replications,
            "successes": self.successes,
            "failures": self.failures,
            "nominal": self.nominal,
            "eval_x": list(self.eval_x),
            "true_ranks": list(self.true_ranks),
            "difference_coverage": self.difference_coverage,
            "marginal_coverage": self.marginal_coverage,
            "simultaneous_coverage": self.simultaneous_coverage,
            "marginal_width": self.marginal_width,
            "simultaneous_width": self.simultaneous_width,
            "settings": self.settings,
        }


def _one_rep(args) -> dict | None:
    scenario, rep, alpha, eval_x, B, draws, config = args
    data_seed = derive_seed(scenario.seed, "coverage", rep, 0)
    data = generate(scenario.with_seed(data_seed))
    try:
        base = fit(data, config)
        if not base.converged:
            return None
        sigma = bootstrap_covariance(data, config, B, derive_seed(scenario.seed, "coverage", rep, 1), base=base)
    except RankUQError as exc:
        log.debug("replication %d failed: %s", rep, exc)
        return None
    M = scenario.M
    ci_seed = derive_seed(scenario.seed, "coverage", rep, 2)
    all_pairs = PairSet.all_pairs(M, eval_x)
    truth = scenario.true_differences(all_pairs)
    diff = {}
    for kind in KINDS:
        ci = difference_cis(base, sigma, all_pairs, alpha, kind, draws, ci_seed)
        diff[kind] = ci.contains(truth)
    ranks = scenario.true_ranks(eval_x)
    marg = marginal_rank_sets(base, sigma, eval_x, alpha, draws, ci_seed)
    sim = simultaneous_rank_sets(base, sigma, eval_x, alpha, draws, ci_seed)
    return {
        "diff": diff,
        "marginal": [int(ranks[j] in marg[j]) for j in range(M)],
        "simultaneous": int(all(ranks[j] in sim[j] for j in range(M))),
        "marginal_width": [s.width for s in marg],
        "simultaneous_width": [s.width for s in sim],
    }


def run_coverage(scenario: Scenario, reps: int, alpha: float = 0.05, eval_x: npt.ArrayLike | None = None,
                 B: int = 500, draws: int = 100_000, config: FitConfig | None = None) -> CoverageReport:
    """Repeat generate -> fit -> bootstrap -> intervals and rank sets, and
    count how often the truth at ``eval_x`` is covered.

    Replications that fail (disconnected resample, non-convergence, too many
    failed bootstrap replicates) are counted in ``failures`` and excluded
    from the coverage fractions.
    """
    if reps < 50:
        raise ValueError("reps must be at least 50")
    config = config or FitConfig()
    eval_x = np.zeros(scenario.d) if eval_x is None else np.asarray(eval_x, dtype=float).reshape(-1)
    jobs = [(scenario, r, alpha, eval_x, B, draws, config) for r in range(reps)]
    workers = min(max_workers(), reps)
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_one_rep, jobs, chunksize=max(1, reps // (4 * workers))))
    else:
        results = [_one_rep(j) for j in jobs]
    good = [r for r in results if r is not None]
    M = scenario.M
    report = CoverageReport(
        replications=reps,
        nominal=1 - alpha,
        successes=len(good),
        failures=reps - len(good),
        eval_x=tuple(float(v) for v in eval_x),
        true_ranks=tuple(int(r) for r in scenario.true_ranks(eval_x)),
        settings={"L": scenario.L, "B": B, "draws": draws, "seed": scenario.seed, "alpha": alpha},
    )
    if good:
        n = len(good)
        report.difference_coverage = {k: sum(r["diff"][k] for r in good) / n for k in KINDS}
        report.marginal_coverage = [sum(r["marginal"][j] for r in good) / n for j in range(M)]
        report.simultaneous_coverage = sum(r["simultaneous"] for r in good) / n
        report.marginal_width = [sum(r["marginal_width"][j] for r in good) / n for j in range(M)]
        report.simultaneous_width = [sum(r["simultaneous_width"][j] for r in good) / n for j in range(M)]
    return report


def grid_mle_oracle(data: Dataset, grid_step: float = 0.05, box: float = 3.0) -> StackedParams:
    """Exhaustive minimization of the NLL over a grid on the feasible subspace.

    The grid lives in the coordinates of an orthonormal basis of the
    sum-to-zero subspace, so a grid step ``h`` moves a utility difference by
    at most ``sqrt(2) h / 2`` from the nearest grid point.
    """
    cs = build_constraints(data.M, data.d)
    dim = cs.dim
    if dim > 3:
        raise DimensionTooLarge(f"grid oracle supports at most 3 free parameters, got {dim}")
    axis = np.arange(-box, box + grid_step / 2, grid_step)
    Xq = data.design() @ cs.basis  # (L, dim)
    Xq = np.asarray(Xq)
    s = 1.0 - 2.0 * data.y
    tail = np.stack(np.meshgrid(*([axis] * (dim - 1)), indexing="ij"), axis=-1).reshape(-1, dim - 1) \
        if dim > 1 else np.zeros((1, 0))
    best_val, best_pt = np.inf, None
    for first in axis:
        pts = np.column_stack([np.full(len(tail), first), tail])
        vals = np.logaddexp(0.0, s[:, None] * (Xq @ pts.T)).sum(axis=0)
        k = int(np.argmin(vals))
        if vals[k] < best_val:
            best_val, best_pt = vals[k], pts[k]
    beta = cs.basis @ best_pt
    return StackedParams.from_vector(beta, data.M, data.d)


def exact_rankset_oracle(intervals: Mapping[tuple[int, int], tuple[float, float]], M: int) -> list[tuple[int, int]]:
    """Rank sets by scanning each model's comparisons through the reversed
    orientation: pair ``(k, j)`` bounds ``theta_j - theta_k``."""
    sets = []
    for j in range(M):
        above = []  # models j provably beats
        below = []  # models provably beating j
        for k in range(M):
            if k == j:
                continue
            lo, hi = intervals[(k, j)]
            if lo > 0:
                above.append(k)
            elif hi < 0:
                below.append(k)
        sets.append((len(below) + 1, M - len(above)))
    return sets


def consistency_check(scenario: Scenario, sizes: Sequence[int], reps: int = 20) -> dict[int, float]:
    """Average ``max |beta_hat - beta*|`` over ``reps`` datasets at each size."""
    out = {}
    truth = scenario.true_params.vector
    for L in sizes:
        errs = []
        for r in range(reps):
            data = generate(scenario.with_L(L).with_seed(derive_seed(scenario.seed, "consistency", L, r)))
            errs.append(float(np.abs(fit(data).params.vector - truth).max()))
        out[L] = float(np.mean(errs))
    return out

"""Command-line entry point: ``rankuq {fit,rank,rank-curve,extrapolate,coverage,simulate}``.

Exit codes: 0 ok, 1 other library error, 2 usage, 3 input, 4 identifiability,
5 numerical. Every failure writes one JSON object to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .errors import InputError, RankUQError
from .estimation import fit, point_ranks
from .io import (
    CovariateSpec,
    ModelFile,
    RunConfig,
    data_fingerprint,
    dumps,
    load_comparisons,
    load_model,
    save_model,
)
from .ranksets import extrapolate, limiting_ranks, rank_curve, rank_sets
from .rng import derive_seed
from .simlab import Scenario, generate, run_coverage
from .uncertainty import bootstrap_covariance

log = logging.getLogger("rankuq")

EXIT_USAGE = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: D401 - argparse hook
        raise UsageError(message)


def _emit_error(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}, sort_keys=True) + "\n")
    return code


# covariate vectors

def parse_x(text: str | None, names: Sequence[str]) -> tuple[np.ndarray, str]:
    """Covariate vector from ``--x``.

    Accepted forms: ``intrinsic`` (zeros), an inline vector ``0.5,1,0``,
    assignments ``len=120,Code=1`` (unset entries are 0), or covariate names
    joined by ``+`` (indicator vector, e.g. ``Domain Knowledge+Specificity``).
    """
    d = len(names)
    if text is None or text.strip() in ("", "intrinsic", "0"):
        return np.zeros(d), "intrinsic"
    text = text.strip()
    x = np.zeros(d)
    if "=" in text:
        for part in text.split(","):
            key, _, val = part.partition("=")
            key = key.strip()
            if key not in names:
                raise UsageError(f"unknown covariate {key!r}; known: {list(names)}")
            try:
                x[list(names).index(key)] = float(val)
            except ValueError:
                raise UsageError(f"bad value for {key!r}: {val!r}") from None
    else:
        parts = [p.strip() for p in text.split(",")]
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            vals = None
        if vals is not None:
            if len(vals) != d:
                raise UsageError(f"--x has {len(vals)} entries, model has {d} covariates")
            x[:] = vals
        else:
            for key in text.split("+"):
                key = key.strip()
                if key not in names:
                    raise UsageError(f"unknown covariate {key!r}; known: {list(names)}")
                x[list(names).index(key)] = 1.0
    label = "intrinsic" if not np.any(x) else text
    return x, label


def _parse_vector(text: str, d: int, flag: str) -> np.ndarray:
    try:
        v = np.array([float(p) for p in text.split(",")])
    except ValueError:
        raise UsageError(f"{flag} must be a comma-separated vector, got {text!r}") from None
    if len(v) != d:
        raise UsageError(f"{flag} has {len(v)} entries, model has {d} covariates")
    return v


# output

def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    cols = [header] + [list(r) for r in rows]
    widths = [max(len(str(r[k])) for r in cols) for k in range(len(header))]
    lines = ["  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip() for r in cols]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def rank_cell(rank: int, lo: int, hi: int) -> str:
    return f"{rank} [{lo},{hi}]"


def _config(args) -> RunConfig:
    base = RunConfig.load(args.config).to_dict() if getattr(args, "config", None) else RunConfig().to_dict()
    for key in ("alpha", "bootstrap", "draws", "seed", "covariates"):
        val = getattr(args, key, None)
        if val is not None:
            base[key] = val
    try:
        return RunConfig.from_dict(base)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load_fitted(args) -> ModelFile:
    model = load_model(args.model)
    if model.sigma is None:
        raise InputError(f"model file {args.model} has no covariance estimate")
    return model


# verbs

def cmd_fit(args) -> int:
    cfg = _config(args)
    spec = CovariateSpec.parse(cfg.covariates or None)
    data, report = load_comparisons(args.data, args.input_format, spec)
    log.info("loaded %d comparisons of %d models (%d ties dropped)", data.L, data.M, report.dropped_ties)
    res = fit(data, cfg.fit_config)
    boot_seed = derive_seed(cfg.seed, "bootstrap")
    log.info("bootstrap: %d replicates", cfg.bootstrap)
    sigma = bootstrap_covariance(data, cfg.fit_config, cfg.bootstrap, boot_seed, base=res)
    model = ModelFile(res, sigma, data.model_names, data.covariate_names, data_fingerprint(data),
                      cfg.to_dict(), report.to_dict())
    if args.out:
        save_model(args.out, model)
    summary = {
        "model_file": args.out,
        "converged": res.converged,
        "iterations": res.iterations,
        "final_nll": res.final_nll,
        "ingestion": report.to_dict(),
        "bootstrap": {"replicates": sigma.replicates, "failed": sigma.failed, "seed": boot_seed},
        "intercepts": dict(zip(data.model_names, res.params.intercepts.tolist())),
        "diagnostics": res.diagnostics.to_dict(),
    }
    if args.format == "text":
        rows = [[n, f"{b:.4f}"] for n, b in zip(data.model_names, res.params.intercepts)]
        _write(_table(["model", "intercept"], rows), args.result)
    else:
        _write(dumps(summary), args.result)
    return 0


def _rank_payload(model: ModelFile, x: np.ndarray, label: str, cfg: RunConfig, scopes: Sequence[str]) -> dict:
    res, sigma = model.fit, model.sigma
    seed = derive_seed(cfg.seed, "critical")
    pr = point_ranks(res, x)
    u = res.params.utilities(x)
    sets = {s: rank_sets(res, sigma, x, cfg.alpha, s, cfg.draws, seed) for s in scopes}
    models = []
    for j, name in enumerate(model.model_names):
        entry = {"model": name, "utility": float(u[j]), "rank": int(pr[j])}
        for s in scopes:
            entry[s] = [sets[s][j].lo, sets[s][j].hi]
        models.append(entry)
    return {"label": label, "x": x.tolist(), "covariate_names": list(model.covariate_names),
            "level": 1 - cfg.alpha, "draws": cfg.draws, "seed": seed, "models": models}


def _scopes(scope: str) -> list[str]:
    return ["marginal", "simultaneous"] if scope == "both" else [scope]


def cmd_rank(args) -> int:
    model = _load_fitted(args)
    cfg = _config(args)
    x, label = parse_x(args.x, model.covariate_names)
    payload = _rank_payload(model, x, label, cfg, _scopes(args.scope))
    scopes = _scopes(args.scope)
    if args.format == "json":
        _write(dumps(payload), args.out)
        return 0
    ordered = sorted(payload["models"], key=lambda m: (m["rank"], m["model"]))
    header = ["model", "utility"] + scopes
    rows = [[m["model"], f"{m['utility']:.4f}"] + [rank_cell(m["rank"], *m[s]) for s in scopes] for m in ordered]
    if args.format == "csv":
        _write(_csv_text(header, rows), args.out)
    else:
        _write(f"{label} (level {1 - cfg.alpha:g})\n" + _table(header, rows), args.out)
    return 0


def _sweep_path(spec: str, names: Sequence[str], base: np.ndarray) -> list[np.ndarray]:
    try:
        key, _, rng = spec.partition("=")
        start, stop, num = rng.split(":")
        grid = np.linspace(float(start), float(stop), int(num))
    except ValueError:
        raise UsageError(f"--sweep expects NAME=START:STOP:NUM, got {spec!r}") from None
    if key not in names:
        raise UsageError(f"unknown covariate {key!r}; known: {list(names)}")
    k = list(names).index(key)
    path = []
    for g in grid:
        x = base.copy()
        x[k] = g
        path.append(x)
    return path


def cmd_rank_curve(args) -> int:
    model = _load_fitted(args)
    cfg = _config(args)
    names = model.covariate_names
    if args.sweep:
        base, _ = parse_x(args.x[0] if args.x else None, names)
        path = _sweep_path(args.sweep, names, base)
    elif args.x:
        path = [parse_x(t, names)[0] for t in args.x]
    else:
        raise UsageError("rank-curve needs --sweep or at least one --x")
    seed = derive_seed(cfg.seed, "critical")
    scope = "simultaneous" if args.scope == "both" else args.scope
    curve = rank_curve(model.fit, model.sigma, path, cfg.alpha, scope, cfg.draws, seed)
    header = list(names) + ["model", "utility", "rank", "lo", "hi"]
    rows = []
    for pt in curve:
        for j, name in enumerate(model.model_names):
            rs = pt.rank_sets[j]
            rows.append([*(repr(v) for v in pt.x), name, repr(pt.utilities[j]), pt.point_ranks[j], rs.lo, rs.hi])
    if args.format == "json":
        out = {"scope": scope, "level": 1 - cfg.alpha, "covariate_names": list(names), "points": [
            {"x": list(pt.x), "utilities": list(pt.utilities), "ranks": list(pt.point_ranks),
             "sets": [[r.lo, r.hi] for r in pt.rank_sets]} for pt in curve]}
        _write(dumps(out), args.out)
    else:
        _write(_csv_text(header, rows), args.out)
    return 0


def cmd_extrapolate(args) -> int:
    model = _load_fitted(args)
    cfg = _config(args)
    if model.fit.d < 1:
        raise UsageError("extrapolation needs a model with covariates")
    v = _parse_vector(args.direction, model.fit.d, "--direction") if args.direction else np.ones(model.fit.d)
    seed = derive_seed(cfg.seed, "critical")
    scope = "simultaneous" if args.scope == "both" else args.scope
    ex = extrapolate(model.fit, model.sigma, v, cfg.alpha, cfg.draws, seed, scope)
    names = model.model_names
    ci = ex.limiting_intervals
    payload = {
        "direction": list(ex.direction),
        "level": 1 - cfg.alpha,
        "scope": scope,
        "limiting_ranks": dict(zip(names, ex.limiting.ranks)),
        "projections": dict(zip(names, ex.limiting.projections)),
        "tied_pairs": [[names[i], names[j]] for i, j in ex.limiting.tied_pairs],
        "rank_sets": {names[r.model]: [r.lo, r.hi] for r in ex.limiting_rank_sets},
        "intervals": [
            {"pair": [names[i], names[j]], "estimate": float(e), "lo": float(a), "hi": float(b),
             "resolution": res}
            for (i, j), e, a, b, res in zip(ci.pairs, ci.estimates, ci.lo, ci.hi, ci.resolutions())
        ],
        "critical_values": ci.critical_values,
    }
    if args.format == "json":
        _write(dumps(payload), args.out)
    else:
        rows = [[n, f"{p:.4f}", rank_cell(r, rs.lo, rs.hi)]
                for n, p, r, rs in zip(names, ex.limiting.projections, ex.limiting.ranks, ex.limiting_rank_sets)]
        rows.sort(key=lambda r: int(r[2].split()[0]))
        header = ["model", "projected slope", f"limit {scope}"]
        text = _table(header, rows) if args.format == "text" else _csv_text(header, rows)
        _write(text, args.out)
    return 0


def _load_scenario(path: str) -> Scenario:
    try:
        return Scenario.from_json(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise InputError(f"cannot read scenario {path}: {exc}") from None
    except ValueError as exc:
        raise InputError(f"invalid scenario {path}: {exc}") from None


def cmd_coverage(args) -> int:
    sc = _load_scenario(args.scenario)
    cfg = _config(args)
    if args.seed is not None:
        sc = sc.with_seed(cfg.seed)
    if args.L:
        sc = sc.with_L(args.L)
    x = _parse_vector(args.x, sc.d, "--x") if args.x else np.zeros(sc.d)
    try:
        report = run_coverage(sc, args.reps, cfg.alpha, x, cfg.bootstrap, cfg.draws, cfg.fit_config)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    _write(dumps(report.to_dict()), args.out)
    return 0


def cmd_simulate(args) -> int:
    sc = _load_scenario(args.scenario)
    if args.seed is not None:
        sc = sc.with_seed(args.seed)
    if args.L:
        sc = sc.with_L(args.L)
    data = generate(sc)
    names = [f"x{k}" for k in range(sc.d)]
    lines = []
    for i, j, x, y in zip(data.left, data.right, data.X, data.y):
        lines.append(json.dumps({
            "model_a": data.model_names[i], "model_b": data.model_names[j],
            "winner": "model_b" if y else "model_a",
            "covariates": dict(zip(names, (float(v) for v in x))),
        }, sort_keys=True))
    _write("\n".join(lines) + "\n", args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rankuq", description="Prompt-dependent rankings with confidence sets from pairwise preferences")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, fmt_choices=("json", "text", "csv"), fmt_default="json"):
        sp.add_argument("--config", help="JSON run config; flags override it")
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--draws", type=int, help="Gaussian draws for critical values")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--format", choices=fmt_choices, default=fmt_default)
        sp.add_argument("--out", help="write results here instead of stdout")

    sp = sub.add_parser("fit", help="fit utilities and bootstrap their covariance")
    sp.add_argument("data", help="comparisons (.jsonl or .csv)")
    sp.add_argument("--input-format", choices=("jsonl", "csv"))
    sp.add_argument("--covariates", help="covariate fields and presets, e.g. 'len,arena-categories'")
    sp.add_argument("--bootstrap", type=int, help="bootstrap replicates")
    common(sp, ("json", "text"))
    sp.add_argument("--result", help="write the fit summary here instead of stdout")
    sp.set_defaults(func=cmd_fit)

    for name, func, help_ in (("rank", cmd_rank, "ranks and rank sets at one covariate vector"),
                              ("rank-curve", cmd_rank_curve, "ranks along a covariate path (CSV)"),
                              ("extrapolate", cmd_extrapolate, "limiting ranks along a direction")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("model", help="model file written by 'rankuq fit --out'")
        default_fmt = {"rank": "text", "rank-curve": "csv", "extrapolate": "json"}[name]
        common(sp, ("json", "text", "csv"), default_fmt)
        sp.add_argument("--scope", choices=("marginal", "simultaneous", "both"),
                        default="both" if name == "rank" else "simultaneous")
        if name == "extrapolate":
            sp.add_argument("--direction", help="comma-separated direction v (default all ones)")
        elif name == "rank-curve":
            sp.add_argument("--x", action="append", help="path point; repeat for several")
            sp.add_argument("--sweep", help="NAME=START:STOP:NUM, other covariates from the first --x")
        else:
            sp.add_argument("--x", help="covariate vector: 'intrinsic', '1,0,2', 'len=100', 'Code+Math'")
        sp.set_defaults(func=func)

    sp = sub.add_parser("coverage", help="Monte Carlo coverage of the intervals and rank sets")
    sp.add_argument("scenario", help="scenario JSON")
    sp.add_argument("--reps", type=int, default=300)
    sp.add_argument("--bootstrap", type=int)
    sp.add_argument("--L", type=int, help="override the scenario sample size")
    sp.add_argument("--x", help="evaluation covariate vector (default zeros)")
    common(sp, ("json",))
    sp.set_defaults(func=cmd_coverage)

    sp = sub.add_parser("simulate", help="draw a synthetic comparison file from a scenario")
    sp.add_argument("scenario")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--L", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_simulate)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _emit_error("UsageError", str(exc), EXIT_USAGE)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        return _emit_error("UsageError", str(exc), EXIT_USAGE)
    except RankUQError as exc:
        return _emit_error(type(exc).__name__, str(exc), exc.exit_code)
    except OSError as exc:
        return _emit_error("InputError", str(exc), InputError.exit_code)


if __name__ == "__main__":
    sys.exit(main())

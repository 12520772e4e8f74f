"""Reading arena-style preference dumps, run configuration, and the JSON
model file written by ``rankuq fit``."""

from __future__ import annotations

import base64
import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Iterator, Mapping, Sequence

import numpy as np

from .errors import InputError, InvalidRecord, MissingCovariate, ParseError, UnknownWinnerTag
from .estimation import DesignRankReport, FitConfig, FitDiagnostics, FitResult
from .model import Dataset, StackedParams
from .uncertainty import DEFAULT_BOOTSTRAP, DEFAULT_DRAWS, CovarianceEstimate

SCHEMA_VERSION = 1

# prompt-category indicators, in the order of the covariate vector
ARENA_CATEGORIES: tuple[str, ...] = (
    "Code",
    "Creative Writing",
    "Complexity",
    "Creativity",
    "Domain Knowledge",
    "Problem Solving",
    "Real World",
    "Specificity",
    "Technical Accuracy",
    "Math",
)
PRESETS: dict[str, tuple[str, ...]] = {"arena-categories": ARENA_CATEGORIES}

WINNER_LEFT = ("model_a",)
WINNER_RIGHT = ("model_b",)
TIE_TAGS = ("tie", "tie_both_bad", "tie (bothbad)")


@dataclass(frozen=True)
class CovariateSpec:
    """Which input fields become covariates, and in what order.

    ``numeric`` fields are read as numbers. ``categories`` become 0/1
    indicators for membership in the row's tag list (key ``tags``; a
    ``;``-separated cell in CSV input).
    """

    numeric: tuple[str, ...] = ()
    categories: tuple[str, ...] = ()
    tags_field: str = "tags"

    @property
    def names(self) -> tuple[str, ...]:
        return self.numeric + self.categories

    @property
    def d(self) -> int:
        return len(self.names)

    @classmethod
    def parse(cls, text: str | Sequence[str] | None) -> "CovariateSpec":
        """``"len,arena-categories"``: field names and preset names, comma-separated."""
        if text is None:
            return cls()
        items = [t.strip() for t in text.split(",")] if isinstance(text, str) else [str(t) for t in text]
        numeric: list[str] = []
        cats: list[str] = []
        for item in items:
            if not item:
                continue
            if item in PRESETS:
                cats.extend(PRESETS[item])
            elif item.startswith("tag:"):
                cats.append(item[4:])
            else:
                numeric.append(item)
        names = numeric + cats
        if len(set(names)) != len(names):
            raise InputError(f"duplicate covariate names in {text!r}")
        return cls(tuple(numeric), tuple(cats))

    def to_string(self) -> str:
        parts = list(self.numeric)
        if self.categories == ARENA_CATEGORIES:
            parts.append("arena-categories")
        else:
            parts.extend(f"tag:{c}" for c in self.categories)
        return ",".join(parts)

    def vector(self, covariates: Mapping[str, Any], tags: Sequence[str] | None, line: int) -> list[float]:
        x = []
        for name in self.numeric:
            if name not in covariates or covariates[name] in (None, ""):
                raise MissingCovariate(name, line)
            try:
                v = float(covariates[name])
            except (TypeError, ValueError):
                raise ParseError(line, f"covariate {name!r} is not a number: {covariates[name]!r}") from None
            if not np.isfinite(v):
                raise ParseError(line, f"covariate {name!r} is not finite")
            x.append(v)
        if self.categories:
            if tags is None:
                raise MissingCovariate(self.tags_field, line)
            present = set(tags)
            x.extend(1.0 if c in present else 0.0 for c in self.categories)
        return x


@dataclass
class IngestionReport:
    path: str
    format: str
    rows_read: int = 0
    L: int = 0
    M: int = 0
    d: int = 0
    dropped_ties: int = 0
    dropped_lines: list[int] = field(default_factory=list)
    model_names: list[str] = field(default_factory=list)
    covariate_names: list[str] = field(default_factory=list)
    unknown_tags: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RawPreferenceRow:
    model_a: str
    model_b: str
    winner: str
    covariates: Mapping[str, Any]
    tags: tuple[str, ...] | None
    line: int


def _rows_jsonl(path: Path, spec: CovariateSpec) -> Iterator[RawPreferenceRow]:
    with open(path, encoding="utf-8") as fh:
        for n, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(n, f"invalid JSON: {exc.msg}") from None
            if not isinstance(obj, dict):
                raise ParseError(n, "expected a JSON object")
            for key in ("model_a", "model_b", "winner"):
                if key not in obj:
                    raise ParseError(n, f"missing key {key!r}")
            cov = obj.get("covariates") or {}
            if not isinstance(cov, dict):
                raise ParseError(n, "covariates must be an object")
            tags = obj.get(spec.tags_field, cov.get(spec.tags_field))
            if isinstance(tags, str):
                tags = [t for t in tags.split(";") if t]
            yield RawPreferenceRow(str(obj["model_a"]), str(obj["model_b"]), str(obj["winner"]), cov,
                                   None if tags is None else tuple(str(t).strip() for t in tags), n)


def _rows_csv(path: Path, spec: CovariateSpec) -> Iterator[RawPreferenceRow]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for key in ("model_a", "model_b", "winner"):
            if key not in header:
                raise ParseError(1, f"missing column {key!r}")
        for row in reader:
            n = reader.line_num
            cell = row.get(spec.tags_field)
            tags = None if cell is None else tuple(t.strip() for t in cell.split(";") if t.strip())
            yield RawPreferenceRow(row["model_a"], row["model_b"], row["winner"], row, tags, n)


def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt:
        if fmt not in ("jsonl", "csv"):
            raise InputError(f"unknown input format {fmt!r}")
        return fmt
    suffix = path.suffix.lower()
    if suffix in (".jsonl", ".json", ".ndjson"):
        return "jsonl"
    if suffix == ".csv":
        return "csv"
    raise InputError(f"cannot infer input format from {path.name!r}; pass format explicitly")


def load_comparisons(path: str | Path, format: str | None = None,
                     covariates: CovariateSpec | str | Sequence[str] | None = None) -> tuple[Dataset, IngestionReport]:
    """Read one comparison per row.

    ``left``/``right`` are ``model_a``/``model_b`` as given, so ``y = 1``
    iff ``winner == "model_b"``. Ties are dropped and counted. Model names
    are indexed in order of first appearance (including tied rows).
    """
    path = Path(path)
    fmt = _infer_format(path, format)
    spec = covariates if isinstance(covariates, CovariateSpec) else CovariateSpec.parse(covariates)
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    rows = _rows_jsonl(path, spec) if fmt == "jsonl" else _rows_csv(path, spec)
    report = IngestionReport(str(path), fmt, covariate_names=list(spec.names))
    index: dict[str, int] = {}
    left, right, X, y = [], [], [], []
    known = set(spec.categories)
    for row in rows:
        report.rows_read += 1
        if row.model_a == row.model_b:
            raise ParseError(row.line, f"model {row.model_a!r} compared with itself")
        for name in (row.model_a, row.model_b):
            index.setdefault(name, len(index))
        winner = row.winner.strip()
        if winner in TIE_TAGS:
            report.dropped_ties += 1
            report.dropped_lines.append(row.line)
            continue
        if winner in WINNER_LEFT:
            outcome = 0
        elif winner in WINNER_RIGHT:
            outcome = 1
        else:
            raise UnknownWinnerTag(row.line, f"unknown winner tag {row.winner!r}")
        x = spec.vector(row.covariates, row.tags, row.line)
        if spec.categories and row.tags:
            for t in row.tags:
                if t not in known:
                    report.unknown_tags[t] = report.unknown_tags.get(t, 0) + 1
        left.append(index[row.model_a])
        right.append(index[row.model_b])
        X.append(x)
        y.append(outcome)
    names = list(index)
    if len(names) < 2:
        raise InvalidRecord(f"{path}: need comparisons between at least two models")
    data = Dataset(left, right, np.asarray(X, dtype=float).reshape(len(left), spec.d), y, names, spec.names)
    report.L, report.M, report.d = data.L, data.M, data.d
    report.model_names = names
    return data, report


def data_fingerprint(data: Dataset) -> str:
    h = hashlib.sha256()
    for arr in (data.left, data.right, data.X, data.y):
        h.update(np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<")).tobytes())
    h.update(json.dumps([list(data.model_names), list(data.covariate_names)]).encode())
    return h.hexdigest()


@dataclass(frozen=True)
class RunConfig:
    alpha: float = 0.05
    bootstrap: int = DEFAULT_BOOTSTRAP
    draws: int = DEFAULT_DRAWS
    seed: int = 0
    covariates: str = ""
    max_iterations: int = 200
    gradient_tolerance: float = 1e-8
    ridge: float = 0.0

    def __post_init__(self) -> None:
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.bootstrap < 2:
            raise ValueError("bootstrap must be at least 2")
        if self.draws < 1:
            raise ValueError("draws must be positive")

    @property
    def fit_config(self) -> FitConfig:
        return FitConfig(max_iterations=self.max_iterations, gradient_tolerance=self.gradient_tolerance,
                         ridge=self.ridge)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "RunConfig":
        allowed = {f.name for f in fields(cls)}
        unknown = set(obj) - allowed
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(obj)


def encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "dtype": "float64", "data": base64.b64encode(a.tobytes()).decode("ascii")}


def decode_array(obj: Mapping[str, Any]) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(obj["shape"]).astype(np.float64)


@dataclass(frozen=True, eq=False)
class ModelFile:
    fit: FitResult
    sigma: CovarianceEstimate | None
    model_names: tuple[str, ...]
    covariate_names: tuple[str, ...]
    fingerprint: str
    config: dict
    ingestion: dict | None = None

    def to_dict(self) -> dict:
        f = self.fit
        return {
            "schema_version": SCHEMA_VERSION,
            "model_names": list(self.model_names),
            "covariate_names": list(self.covariate_names),
            "M": f.M,
            "d": f.d,
            "params": encode_array(f.params.vector),
            "fit": {
                "final_nll": f.final_nll,
                "projected_gradient_norm": f.projected_gradient_norm,
                "iterations": f.iterations,
                "converged": f.converged,
                "diagnostics": f.diagnostics.to_dict(),
            },
            "sigma": None if self.sigma is None else {
                "matrix": encode_array(self.sigma.sigma),
                "replicates": self.sigma.replicates,
                "failed": self.sigma.failed,
                "seed": self.sigma.seed,
                "method": self.sigma.method,
            },
            "data_fingerprint": self.fingerprint,
            "config": self.config,
            "ingestion": self.ingestion,
        }

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "ModelFile":
        version = obj.get("schema_version")
        if version != SCHEMA_VERSION:
            raise InputError(f"unsupported model file schema version {version!r}")
        M, d = int(obj["M"]), int(obj["d"])
        params = StackedParams.from_vector(decode_array(obj["params"]), M, d)
        fr = obj["fit"]
        diag = fr["diagnostics"]
        rank = diag.get("rank")
        diagnostics = FitDiagnostics(
            components=tuple(tuple(c) for c in diag["components"]),
            rank=None if rank is None else DesignRankReport(**rank),
            max_abs_margin=float(diag["max_abs_margin"]),
            separated=bool(diag["separated"]),
        )
        fit = FitResult(params, float(fr["final_nll"]), float(fr["projected_gradient_norm"]),
                        int(fr["iterations"]), bool(fr["converged"]), diagnostics)
        s = obj.get("sigma")
        sigma = None if s is None else CovarianceEstimate(
            decode_array(s["matrix"]), int(s["replicates"]), int(s["seed"]), s.get("method", "pairs-bootstrap"),
            int(s.get("failed", 0)))
        return cls(fit, sigma, tuple(obj["model_names"]), tuple(obj["covariate_names"]),
                   obj["data_fingerprint"], dict(obj.get("config", {})), obj.get("ingestion"))


def save_model(path: str | Path, model: ModelFile) -> None:
    Path(path).write_text(dumps(model.to_dict()), encoding="utf-8")


def load_model(path: str | Path) -> ModelFile:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read model file {path}: {exc}") from None
    try:
        return ModelFile.from_dict(obj)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed model file {path}: {exc}") from None


def dumps(obj: Any) -> str:
    """Canonical JSON: sorted keys, fixed separators, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"

"""Category-conditioned leaderboard from tagged prompts.

Writes a synthetic JSONL dump whose prompts carry category tags, then runs
the CLI on it: fit, and a rank table per category profile.
"""
import argparse
import json
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from rankuq.io import ARENA_CATEGORIES

NAMES = ("model-a", "model-b", "model-c", "model-d")


def synth_rows(L: int, seed: int) -> list[dict]:
    rng = np.random.default_rng(seed)
    intercepts = np.array([0.5, 0.2, -0.2, -0.5])
    slopes = rng.normal(scale=0.4, size=(len(NAMES), len(ARENA_CATEGORIES)))
    slopes -= slopes.mean(axis=0)
    rows = []
    for _ in range(L):
        i, j = rng.choice(len(NAMES), 2, replace=False)
        x = (rng.random(len(ARENA_CATEGORIES)) < 0.3).astype(float)
        z = intercepts[j] - intercepts[i] + x @ (slopes[j] - slopes[i])
        u = rng.random()
        if u < 0.08:
            winner = "tie"
        else:
            winner = "model_b" if rng.random() < 1 / (1 + np.exp(-z)) else "model_a"
        tags = [c for c, v in zip(ARENA_CATEGORIES, x) if v]
        rows.append({"model_a": NAMES[i], "model_b": NAMES[j], "winner": winner, "tags": tags})
    return rows


def main() -> None:
    ap = argparse.ArgumentParser(description="category-conditioned rank tables via the CLI")
    ap.add_argument("--L", type=int, default=30_000)
    ap.add_argument("--bootstrap", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--profiles", nargs="*",
                    default=["intrinsic", "Code", "Math", "Domain Knowledge+Specificity+Technical Accuracy"])
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        data = Path(tmp) / "dump.jsonl"
        data.write_text("".join(json.dumps(r) + "\n" for r in synth_rows(args.L, args.seed)))
        model = Path(tmp) / "model.json"
        cli = [sys.executable, "-m", "rankuq.cli"]
        subprocess.run(cli + ["fit", str(data), "--covariates", "arena-categories", "--bootstrap",
                              str(args.bootstrap), "--seed", str(args.seed), "--out", str(model),
                              "--result", str(Path(tmp) / "fit.json")], check=True)
        for profile in args.profiles:
            subprocess.run(cli + ["rank", str(model), "--x", profile, "--draws", "20000"], check=True)
            print()


if __name__ == "__main__":
    main()

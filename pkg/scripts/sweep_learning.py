"""Sweep used to pin the learning-criterion step budgets.

Runs full FFM, FFM-ND and the MLP on RepeatPrevious(k=4, T=32, vocab=4) over
five seeds, and default vs informed init on RepeatPrevious(k=32, T=104).
Results go to sweeps/learning.json and a summary is printed.
"""

import argparse
import json
from pathlib import Path

from ffm import trainer
from ffm.config import TrainConfig


def run(model: dict, task: dict, steps: int, seed: int, eval_every: int) -> list[dict]:
    cfg = TrainConfig.model_validate(
        {"model": model, "task": task, "steps": steps, "eval_every": eval_every, "seed": seed}
    )
    return trainer.train(cfg).rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=3000)
    ap.add_argument("--long-steps", type=int, default=1500)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--out", default="sweeps/learning.json")
    ap.add_argument("--only", nargs="*", default=None, help="subset of run names")
    args = ap.parse_args()

    short = {"name": "repeat_previous", "T": 32, "k": 4, "vocab": 4}
    long = {"name": "repeat_previous", "T": 104, "k": 32, "vocab": 4}
    dims = {"d": 8, "m": 8, "c": 4}
    runs = {
        "ffm": ({"kind": "ffm", **dims}, short, args.steps),
        "ffm_nd": ({"kind": "ffm", "variant": "ND", **dims}, short, args.steps),
        "mlp": ({"kind": "mlp", **dims}, short, args.steps),
        "long_default": ({"kind": "ffm", **dims}, long, args.long_steps),
        "long_informed": (
            {"kind": "ffm", "init": "informed", "t_alpha_range": [32, 104], "t_omega_range": [32, 104], **dims},
            long,
            args.long_steps,
        ),
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    results = json.loads(out.read_text()) if out.exists() else {}
    for name, (model, task, steps) in runs.items():
        if args.only and name not in args.only:
            continue
        results[name] = {}
        for seed in range(args.seeds):
            rows = run(model, task, steps, seed, eval_every=250)
            results[name][seed] = rows
            curve = " ".join(f"{r['step']}:{r['accuracy']:.3f}" for r in rows)
            print(f"{name} seed={seed} {curve}", flush=True)
            out.write_text(json.dumps(results, indent=1))


if __name__ == "__main__":
    main()

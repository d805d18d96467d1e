"""Hyperparameter grid search: runtime cost vs. infidelity suppression.

Example: python scripts/grid_search.py --space configs/table2_space.json --hours 15
"""

import argparse
import json
from pathlib import Path

from escqc.drb import DrbDesign
from escqc.ion import DriftConfig
from escqc.loop import LoopConfig, expand_space, grid_search, write_grid_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--space", type=Path, default=Path("configs/table2_space.json"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--hours", type=float, default=15.0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("out/grid"))
    args = ap.parse_args()

    points = expand_space(json.loads(args.space.read_text()))
    base = LoopConfig(duration_h=args.hours, drift=DriftConfig(seed=args.seed), drb=DrbDesign(rng_seed=args.seed))
    results = grid_search(points, base, max_workers=args.workers)
    args.out.mkdir(parents=True, exist_ok=True)
    write_grid_csv(args.out / "grid.csv", results, f"grid_search seed={args.seed} hours={args.hours}")
    for r in results:
        print(f"{r.params}  {r.runtime_min_per_hour:6.2f} min/h  suppression {r.suppression:6.2f}")

    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return
    ok = [r for r in results if r.error is None]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.scatter([r.runtime_min_per_hour for r in ok], [r.suppression for r in ok])
    ax.set_xlabel("runtime (min/h)")
    ax.set_ylabel("infidelity suppression ratio")
    fig.tight_layout()
    fig.savefig(args.out / "grid.png", dpi=120)


if __name__ == "__main__":
    main()
